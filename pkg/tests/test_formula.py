"""Lexer, parser, label assignment, and printer."""

import math

import pytest
from hypothesis import given, settings, strategies as st

from probsheet.errors import ActualDatumError, ArityError, LexError, ParseError
from probsheet.formula import (
    Actual,
    BlackApp,
    CellRef,
    Const,
    ErpApp,
    ErpKind,
    If,
    Label,
    PrimApp,
    PrimOp,
    Ref,
    format_cell,
    format_expr,
    iter_op_nodes,
    parse_cell,
    tokenize,
)

A1 = CellRef.parse("A1")


def parse(text, cell="A1"):
    return parse_cell(CellRef.parse(cell), text)


def labels_of(expr):
    return [n.label for n in iter_op_nodes(expr) if getattr(n, "label", None)]


# ---------------------------------------------------------------------------
# cell references
# ---------------------------------------------------------------------------

def test_cellref_parse_and_str():
    r = CellRef.parse("b12")
    assert (r.column, r.row) == ("B", 12)
    assert str(r) == "B12"


@pytest.mark.parametrize("bad", ["", "1A", "A0", "A-1", "A1B", "A 1", "A1 "])
def test_cellref_rejects(bad):
    with pytest.raises(Exception):
        CellRef.parse(bad)


def test_cellref_column_numbers():
    assert CellRef.parse("A1").column_number == 1
    assert CellRef.parse("Z1").column_number == 26
    assert CellRef.parse("AA1").column_number == 27
    assert CellRef.parse("AB1").column_number == 28


def test_cellref_order_is_row_major():
    refs = [CellRef.parse(s) for s in ["B2", "A1", "A2", "B1", "AA1"]]
    refs.sort(key=lambda r: r.sort_key)
    assert [str(r) for r in refs] == ["A1", "B1", "AA1", "A2", "B2"]


# ---------------------------------------------------------------------------
# tokens
# ---------------------------------------------------------------------------

def test_token_offsets():
    toks = tokenize("A1 + 2.5")
    assert [(t.kind, t.offset) for t in toks] == [
        ("ref", 0), ("+", 3), ("number", 5), ("eof", 8)]


@pytest.mark.parametrize("text,value", [
    ("3", 3.0), ("3.5", 3.5), (".5", 0.5), ("2.", 2.0),
    ("1e3", 1000.0), ("2.5E-2", 0.025), ("1e+2", 100.0),
])
def test_number_forms(text, value):
    tok = tokenize(text)[0]
    assert tok.kind == "number" and tok.value == value


def test_lex_error_carries_offset():
    with pytest.raises(LexError) as e:
        tokenize("A1+$")
    assert e.value.offset == 3


def test_two_char_comparisons_lex_as_one_token():
    kinds = [t.text for t in tokenize("<= >=")[:-1]]
    assert kinds == ["<=", ">="]


# ---------------------------------------------------------------------------
# bare numbers
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("text,value", [
    ("3", 3.0), ("-2.5", -2.5), (" 4e2 ", 400.0), ("-0", -0.0),
])
def test_bare_number(text, value):
    e = parse(text)
    assert isinstance(e, Const) and e.value == value


@pytest.mark.parametrize("bad", ["abc", "3+4", "--3", "3 4", ""])
def test_bare_junk_rejected(bad):
    with pytest.raises((ParseError, LexError)):
        parse(bad)


# ---------------------------------------------------------------------------
# precedence and shape
# ---------------------------------------------------------------------------

def _root_op(text):
    e = parse(text)
    assert isinstance(e, PrimApp)
    return e.op


def test_mul_binds_tighter_than_add():
    e = parse("=1+2*3")
    assert e.op is PrimOp.ADD and e.args[1].op is PrimOp.MUL


def test_sub_left_associates():
    e = parse("=8-3-2")
    assert e.op is PrimOp.SUB and e.args[0].op is PrimOp.SUB


def test_pow_right_associates():
    e = parse("=2^3^2")
    assert e.op is PrimOp.POW and e.args[1].op is PrimOp.POW


def test_unary_minus_binds_looser_than_pow():
    e = parse("=-2^2")
    assert e.op is PrimOp.NEG and e.args[0].op is PrimOp.POW


def test_pow_admits_negative_exponent():
    e = parse("=2^-3")
    assert e.op is PrimOp.POW and e.args[1].op is PrimOp.NEG


def test_comparison_binds_loosest():
    e = parse("=1+1=2")
    assert e.op is PrimOp.EQ and e.args[0].op is PrimOp.ADD


@pytest.mark.parametrize("text,op", [
    ("=1<2", PrimOp.LT), ("=1<=2", PrimOp.LE), ("=1>2", PrimOp.GT),
    ("=1>=2", PrimOp.GE), ("=1=2", PrimOp.EQ),
])
def test_comparison_operators(text, op):
    assert _root_op(text) is op


def test_no_not_equal_operator():
    with pytest.raises(ParseError):
        parse("=1<>2")


def test_parentheses_override():
    e = parse("=(1+2)*3")
    assert e.op is PrimOp.MUL and e.args[0].op is PrimOp.ADD


def test_trailing_garbage_rejected():
    with pytest.raises(ParseError):
        parse("=1 2")
    with pytest.raises(ParseError):
        parse("=A1)")


# ---------------------------------------------------------------------------
# functions
# ---------------------------------------------------------------------------

def test_known_unary_functions():
    for name, op in [("LOG", PrimOp.LOG), ("EXP", PrimOp.EXP),
                     ("SQRT", PrimOp.SQRT), ("ABS", PrimOp.ABS)]:
        e = parse(f"={name}(2)")
        assert isinstance(e, PrimApp) and e.op is op and len(e.args) == 1


def test_min_max_are_binary():
    e = parse("=MIN(1, MAX(2, 3))")
    assert e.op is PrimOp.MIN and e.args[1].op is PrimOp.MAX
    with pytest.raises(ArityError):
        parse("=MIN(1)")
    with pytest.raises(ArityError):
        parse("=MAX(1, 2, 3)")


def test_function_names_case_insensitive():
    assert parse("=min(1, 2)").op is PrimOp.MIN
    assert parse("=gaussian(0, 1)").kind is ErpKind.GAUSSIAN


def test_if_has_three_branches():
    e = parse("=IF(A1>0, 1, 2)")
    assert isinstance(e, If)
    with pytest.raises(ArityError):
        parse("=IF(1, 2)")
    with pytest.raises(ArityError):
        parse("=IF(1, 2, 3, 4)")


def test_unknown_function_is_black_box():
    e = parse("=NPER(0.05, A1, 100)")
    assert isinstance(e, BlackApp)
    assert e.name == "NPER" and len(e.args) == 3


def test_erp_forms():
    assert parse("=GAUSSIAN(0, 1)").kind is ErpKind.GAUSSIAN
    assert parse("=BETWEEN(0, 1)").kind is ErpKind.BETWEEN
    assert parse("=NEAR(5)").kind is ErpKind.NEAR
    e = parse("=CHOICE(1, 0.5, 2, 0.5)")
    assert e.kind is ErpKind.CHOICE and len(e.args) == 4


@pytest.mark.parametrize("bad", [
    "=GAUSSIAN(0)", "=GAUSSIAN(0, 1, 2)", "=BETWEEN(1)", "=NEAR()",
    "=NEAR(1, 2)", "=CHOICE()", "=CHOICE(1)", "=CHOICE(1, 2, 3)",
])
def test_erp_arity_errors(bad):
    with pytest.raises(ArityError):
        parse(bad)


def test_erp_args_may_be_expressions():
    e = parse("=GAUSSIAN(A1+1, B2*2)")
    assert e.args[0].op is PrimOp.ADD and e.args[1].op is PrimOp.MUL


# ---------------------------------------------------------------------------
# ACTUAL
# ---------------------------------------------------------------------------

def test_actual_whole_cell():
    e = parse("=ACTUAL(2.5, GAUSSIAN, A2, 1)")
    assert isinstance(e, Actual)
    assert e.datum == 2.5 and e.kind is ErpKind.GAUSSIAN
    assert isinstance(e.args[0], Ref)


def test_actual_negative_datum():
    e = parse("=ACTUAL(-3, GAUSSIAN, A2, 1)")
    assert e.datum == -3.0


def test_actual_must_be_entire_formula():
    with pytest.raises(ParseError):
        parse("=1+ACTUAL(2, GAUSSIAN, A2, 1)")
    with pytest.raises(ParseError):
        parse("=ACTUAL(2, GAUSSIAN, A2, 1)+1")


def test_actual_datum_must_be_literal():
    with pytest.raises(ActualDatumError):
        parse("=ACTUAL(A3, GAUSSIAN, A2, 1)")
    with pytest.raises(ActualDatumError):
        parse("=ACTUAL(1+1, GAUSSIAN, A2, 1)")


def test_actual_requires_erp_name():
    with pytest.raises(ParseError):
        parse("=ACTUAL(1, LOG, A2)")


def test_actual_arity_follows_erp():
    with pytest.raises(ArityError):
        parse("=ACTUAL(1, GAUSSIAN, A2)")
    e = parse("=ACTUAL(1, CHOICE, A2, 0.5, A3, 0.5)")
    assert e.kind is ErpKind.CHOICE and len(e.args) == 4


# ---------------------------------------------------------------------------
# labels
# ---------------------------------------------------------------------------

def test_labels_preorder_operators_only():
    e = parse("=1+2*3", cell="B7")
    labs = labels_of(e)
    assert labs == [Label(CellRef.parse("B7"), 0), Label(CellRef.parse("B7"), 1)]


def test_labels_cover_erp_and_nested_args():
    e = parse("=GAUSSIAN(A1+1, 2)")
    labs = labels_of(e)
    assert [l.index for l in labs] == [0, 1]
    assert isinstance(e, ErpApp) and e.label.index == 0


def test_if_carries_no_label():
    e = parse("=IF(A1>0, B1+1, C1*2)")
    assert not hasattr(e, "label") or not isinstance(e, (PrimApp,))
    labs = labels_of(e)
    assert [l.index for l in labs] == [0, 1, 2]


def test_actual_node_is_labeled():
    e = parse("=ACTUAL(1, GAUSSIAN, A2*2, 1)")
    labs = labels_of(e)
    assert labs[0] == e.label and labs[0].index == 0
    assert [l.index for l in labs] == [0, 1]


def test_label_str():
    e = parse("=NEAR(4)", cell="C3")
    assert str(e.label) == "C3[0]"


def test_labels_unique_within_cell():
    # operator nodes: +  LOG  EXP  ABS  *  SQRT  MIN
    e = parse("=LOG(EXP(ABS(A1)))+SQRT(2)*MIN(3, 4)")
    labs = labels_of(e)
    assert len(labs) == len(set(labs)) == 7
    assert sorted(l.index for l in labs) == list(range(7))


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

def test_format_number_drops_trailing_zero():
    assert format_cell(Const(2.0)) == "2"
    assert format_cell(Const(-2.0)) == "-2"
    assert format_cell(Const(2.5)) == "2.5"


@pytest.mark.parametrize("text", [
    "=1+2*3", "=(1+2)*3", "=-2^2", "=2^-3", "=2^3^2", "=(2^3)^2",
    "=8-3-2", "=8-(3-2)", "=1+1=2", "=A1<=B2",
    "=IF(A1>=0, MIN(A1, B1), -B1)",
    "=GAUSSIAN(A1+1, 2)", "=CHOICE(1, 0.5, 2, 0.5)",
    "=ACTUAL(-2.5, GAUSSIAN, A2/2, 1)",
    "=NPER(0.05, A1, 100)",
])
def test_print_parse_fixpoint(text):
    first = parse(text)
    printed = format_cell(first)
    assert parse(printed) == first


# random expression round trips -------------------------------------------

_names = st.sampled_from(["A1", "B2", "C3", "AA10"])
_consts = st.floats(min_value=0.0, max_value=1e6, allow_nan=False,
                    allow_infinity=False).map(lambda v: Const(float(v)))


def _exprs(depth):
    if depth == 0:
        return st.one_of(_consts, _names.map(lambda s: Ref(CellRef.parse(s))))
    sub = _exprs(depth - 1)
    binop = st.sampled_from([
        PrimOp.ADD, PrimOp.SUB, PrimOp.MUL, PrimOp.DIV, PrimOp.POW,
        PrimOp.LT, PrimOp.LE, PrimOp.GT, PrimOp.GE, PrimOp.EQ,
        PrimOp.MIN, PrimOp.MAX,
    ])
    return st.one_of(
        sub,
        st.tuples(binop, sub, sub).map(
            lambda t: PrimApp(t[0], None, (t[1], t[2]))),
        sub.map(lambda a: PrimApp(PrimOp.NEG, None, (a,))),
        st.sampled_from([PrimOp.LOG, PrimOp.EXP, PrimOp.SQRT, PrimOp.ABS])
          .flatmap(lambda op: sub.map(lambda a: PrimApp(op, None, (a,)))),
        st.tuples(sub, sub, sub).map(lambda t: If(t[0], t[1], t[2])),
        st.tuples(sub, sub).map(
            lambda t: ErpApp(ErpKind.GAUSSIAN, None, (t[0], t[1]))),
    )


@given(_exprs(3))
@settings(max_examples=200, deadline=None)
def test_random_expression_round_trip(tree):
    text = "=" + format_expr(tree)
    first = parse(text)
    assert parse("=" + format_expr(first)) == first
