"""Tokenizer for the OpenCL-C subset."""
from __future__ import annotations

from dataclasses import dataclass

from .diagnostics import Diagnostic, FrontendError
from .ast import Span

KEYWORDS = frozenset(
    (
        "kernel", "__kernel", "void", "if", "else", "for", "while",
        "channel", "__attribute__", "restrict", "const",
        "global", "__global", "constant", "__constant", "local", "__local",
        "int", "uint", "long", "ulong", "float", "double", "bool",
        "goto", "switch", "do", "return", "break", "continue", "struct",
    )
)

# Longest match first.
OPERATORS = (
    "<<", ">>", "++", "--", "+=", "-=", "*=", "/=", "%=",
    "==", "!=", "<=", ">=", "&&", "||",
    "+", "-", "*", "/", "%", "<", ">", "=", "!", "&", "|", "^", "~", "?", ":",
)

PUNCT = "()[]{};,."


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "keyword" | "int" | "float" | "op" | "punct" | "eof"
    text: str
    span: Span

    def is_(self, kind: str, text: str = None) -> bool:
        return self.kind == kind and (text is None or self.text == text)


def tokenize(source: str, filename: str = "<input>") -> list:
    toks = []
    i, line, col = 0, 1, 1
    n = len(source)

    def span(start, end, sline, scol):
        return Span(start, end, sline, scol)

    while i < n:
        c = source[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if source.startswith("//", i):
            j = source.find("\n", i)
            j = n if j < 0 else j
            col += j - i
            i = j
            continue
        if source.startswith("/*", i):
            j = source.find("*/", i + 2)
            if j < 0:
                raise FrontendError([Diagnostic(filename, line, col, "error", "unterminated block comment", "syntax", span(i, n, line, col))])
            chunk = source[i : j + 2]
            nl = chunk.count("\n")
            if nl:
                line += nl
                col = len(chunk) - chunk.rfind("\n")
            else:
                col += len(chunk)
            i = j + 2
            continue
        start, sline, scol = i, line, col
        if c.isalpha() or c == "_":
            j = i + 1
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            text = source[i:j]
            kind = "keyword" if text in KEYWORDS else "ident"
            toks.append(Token(kind, text, span(start, j, sline, scol)))
            col += j - i
            i = j
            continue
        if c.isdigit() or (c == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            is_float = False
            while j < n and source[j].isdigit():
                j += 1
            if j < n and source[j] == ".":
                is_float = True
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k].isdigit():
                    is_float = True
                    j = k
                    while j < n and source[j].isdigit():
                        j += 1
            if j < n and source[j] in "fF":
                # float suffix accepted and dropped
                text = source[i:j]
                j += 1
                is_float = True
            else:
                text = source[i:j]
            toks.append(Token("float" if is_float else "int", text, span(start, j, sline, scol)))
            col += j - i
            i = j
            continue
        matched = None
        for op in OPERATORS:
            if source.startswith(op, i):
                matched = op
                break
        if matched:
            toks.append(Token("op", matched, span(start, i + len(matched), sline, scol)))
            i += len(matched)
            col += len(matched)
            continue
        if c in PUNCT:
            toks.append(Token("punct", c, span(start, i + 1, sline, scol)))
            i += 1
            col += 1
            continue
        raise FrontendError(
            [Diagnostic(filename, sline, scol, "error", f"unexpected character {c!r}", "syntax", span(start, start + 1, sline, scol))]
        )
    toks.append(Token("eof", "", span(n, n, line, col)))
    return toks
