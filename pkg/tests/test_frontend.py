"""Lexer, parser, emitter, and validator behavior."""

import pytest

from ffc import ast, emit, parser, validate
from ffc.diagnostics import FrontendError

from conftest import parse_one


SAXPY = """
__kernel void saxpy(__global float* restrict y,
                    __global const float* restrict x,
                    float a, int n) {
    for (int i = 0; i < n; i++) {
        y[i] = a * x[i] + y[i];
    }
}
"""


def test_parse_kernel_shape():
    k = parse_one(SAXPY)
    assert k.name == "saxpy"
    assert [p.name for p in k.params] == ["y", "x", "a", "n"]
    assert k.params[0].space == "global"
    assert k.params[0].restrict
    assert k.params[1].is_pointer
    assert k.params[2].space == "value"
    loop = k.body.stmts[0]
    assert isinstance(loop, ast.For)
    assert isinstance(loop.body.stmts[0], ast.Store)


@pytest.mark.parametrize("expr,tree", [
    ("1 + 2 * 3", ("+", "1", ("*", "2", "3"))),
    ("(1 + 2) * 3", ("*", ("+", "1", "2"), "3")),
    ("a < b == c", ("==", ("<", "a", "b"), "c")),
    ("a && b || c", ("||", ("&&", "a", "b"), "c")),
    ("-a + b", ("+", ("neg", "a"), "b")),
    ("a + b - c", ("-", ("+", "a", "b"), "c")),
])
def test_precedence(expr, tree):
    def shape(e):
        if isinstance(e, ast.Binary):
            return (e.op, shape(e.left), shape(e.right))
        if isinstance(e, ast.Unary):
            return ("neg" if e.op == "-" else e.op, shape(e.operand))
        if isinstance(e, ast.IntLit):
            return str(e.value)
        if isinstance(e, (ast.VarRef, ast.ParamRef)):
            return e.name
        raise AssertionError(e)

    src = "__kernel void k(__global int* o, int a, int b, int c) { o[0] = %s; }" % expr
    k = parse_one(src)
    assert shape(k.body.stmts[0].value) == tree


@pytest.mark.parametrize("lit,value,type_", [
    ("42", 42, ast.IntLit),
    ("1.5f", 1.5, ast.FloatLit),
    ("3.4e+38", 3.4e38, ast.FloatLit),
    ("1e-3f", 1e-3, ast.FloatLit),
])
def test_literals(lit, value, type_):
    k = parse_one("__kernel void k(__global float* o) { o[0] = %s; }" % lit)
    node = k.body.stmts[0].value
    assert isinstance(node, type_)
    assert node.value == value


@pytest.mark.parametrize("src,fragment", [
    ("__kernel void k(__global int* o) { o[0] = ; }", "expected an expression"),
    ("__kernel void k(__global int* o) { o[0] = 1 }", "expected"),
    ("__kernel void k(__global int* o, int n) { o[0] = n > 0 ? 1 : 2; }",
     "unsupported operator '?'"),
    ("__kernel void k(__global int* o, int n) { o[0] = (float)n; }",
     "casts are not supported"),
    ("__kernel void k(__global int* o) { goto done; }", "goto"),
])
def test_parse_errors(src, fragment):
    with pytest.raises(FrontendError) as exc:
        parser.parse(src, filename="bad.cl")
    assert exc.value.diagnostics
    d = exc.value.diagnostics[0]
    assert d.severity == "error"
    assert d.line >= 1
    assert fragment in d.message


def test_diagnostic_location_is_precise():
    src = "__kernel void k(__global int* o) {\n    o[0] = (1 + ;\n}\n"
    with pytest.raises(FrontendError) as exc:
        parser.parse(src, filename="loc.cl")
    d = exc.value.diagnostics[0]
    assert d.file == "loc.cl"
    assert d.line == 2


def test_unit_kernel_lookup():
    unit = parser.parse(
        "__kernel void a(__global int* o) { o[0] = 1; }\n"
        "__kernel void b(__global int* o) { o[0] = 2; }\n",
        filename="two.cl")
    assert [k.name for k in unit.kernels] == ["a", "b"]
    assert unit.kernel("b").name == "b"
    assert unit.kernel("zz") is None


def test_channel_declarations_parse():
    unit = parser.parse(
        "channel int c0 __attribute__((depth(4)));\n"
        "__kernel void w(__global int* x) { write_channel_intel(c0, x[0]); }\n"
        "__kernel void r(__global int* y) { int v = read_channel_intel(c0); y[0] = v; }\n",
        filename="ch.cl")
    (ch,) = unit.channels
    assert (ch.name, ch.elem_type, ch.min_depth) == ("c0", "int", 4)
    diags = validate.validate(unit, mode="single", filename="ch.cl")
    assert not [d for d in diags if d.severity == "error"]


@pytest.mark.parametrize("body_w,body_r,rule", [
    # two writers
    ("write_channel_intel(c0, 1); write_channel_intel(c0, 2);",
     "int v = read_channel_intel(c0); y[0] = v;", None),
    # undeclared channel
    ("write_channel_intel(nope, 1);", "int v = read_channel_intel(c0); y[0] = v;",
     "channel-undeclared"),
])
def test_channel_misuse(body_w, body_r, rule):
    unit = parser.parse(
        "channel int c0 __attribute__((depth(1)));\n"
        "__kernel void w(__global int* x) { %s }\n"
        "__kernel void r(__global int* y) { %s }\n" % (body_w, body_r),
        filename="ch.cl")
    diags = validate.validate(unit, mode="single", filename="ch.cl")
    errors = [d for d in diags if d.severity == "error"]
    if rule:
        assert any(d.rule == rule for d in errors)
    # two writes in one kernel are fine; multiple *kernels* writing are not


def test_channel_multiple_writer_kernels_rejected():
    unit = parser.parse(
        "channel int c0 __attribute__((depth(1)));\n"
        "__kernel void w1(__global int* x) { write_channel_intel(c0, x[0]); }\n"
        "__kernel void w2(__global int* x) { write_channel_intel(c0, x[1]); }\n"
        "__kernel void r(__global int* y) { int v = read_channel_intel(c0); y[0] = v; }\n",
        filename="ch.cl")
    errors = [d for d in validate.validate(unit, mode="single", filename="ch.cl")
              if d.severity == "error"]
    assert any(d.rule == "channel-endpoints" for d in errors)


def test_channel_self_loop_rejected():
    unit = parser.parse(
        "channel int c0 __attribute__((depth(1)));\n"
        "__kernel void k(__global int* y) {"
        " write_channel_intel(c0, y[0]); int v = read_channel_intel(c0); y[1] = v; }\n",
        filename="ch.cl")
    errors = [d for d in validate.validate(unit, mode="single", filename="ch.cl")
              if d.severity == "error"]
    assert any("writes and reads" in d.message for d in errors)


def test_single_mode_rejects_ndrange_builtins():
    unit = parser.parse(
        "__kernel void k(__global int* o) { o[get_global_id(0)] = 1; }",
        filename="nd.cl")
    errors = [d for d in validate.validate(unit, mode="single", filename="nd.cl")
              if d.severity == "error"]
    assert errors
    assert not [d for d in validate.validate(unit, mode="ndrange", filename="nd.cl")
                if d.severity == "error"]


def test_validate_unknown_identifier():
    unit = parser.parse(
        "__kernel void k(__global int* o) { o[0] = mystery; }", filename="u.cl")
    errors = [d for d in validate.validate(unit, mode="single", filename="u.cl")
              if d.severity == "error"]
    assert errors


def test_emit_parse_fixpoint():
    unit = parser.parse(SAXPY, filename="s.cl")
    once = emit.emit(unit)
    twice = emit.emit(parser.parse(once, filename="s.cl"))
    assert once == twice


def test_emit_preserves_semantic_text():
    k = parse_one(SAXPY)
    text = emit.emit_kernel(k)
    assert "y[i] = a * x[i] + y[i];" in text
    assert "for (int i = 0; i < n; i++)" in text
