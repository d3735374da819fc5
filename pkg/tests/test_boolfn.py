import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lib2vec import boolfn
from lib2vec.boolfn import And, Const, Not, Or, Var, Xor


def test_precedence_not_and_xor_or():
    e = boolfn.parse("!A * B ^ C + D")
    assert e == Or((Xor((And((Not(Var("A")), Var("B"))), Var("C"))), Var("D")))


@pytest.mark.parametrize("text,expected", [
    ("A B", And((Var("A"), Var("B")))),
    ("A & B", And((Var("A"), Var("B")))),
    ("A | B", Or((Var("A"), Var("B")))),
    ("A'", Not(Var("A"))),
    ("!!A", Not(Not(Var("A")))),
    ("1", Const(1)),
    ("!(A*B)", Not(And((Var("A"), Var("B"))))),
])
def test_parse_forms(text, expected):
    assert boolfn.parse(text) == expected


@pytest.mark.parametrize("bad", ["", "A +", "(A * B", "A $ B", "* A"])
def test_parse_errors(bad):
    with pytest.raises(boolfn.BoolParseError):
        boolfn.parse(bad)


def test_nand2_truth_table_msb_first():
    tt = boolfn.truth_table(boolfn.parse("!(A * B)"), ["B", "A"])
    assert tt.input_pins == ("A", "B")
    assert str(tt) == "1110"


def test_aoi21_truth_table():
    tt = boolfn.truth_table(boolfn.parse("!((A1 * A2) + B)"), ["A1", "A2", "B"])
    assert str(tt) == "10101000"


def test_unused_pin_still_enumerated():
    tt = boolfn.truth_table(boolfn.parse("A"), ["A", "B"])
    assert str(tt) == "0011"


def test_missing_pin_and_limit():
    with pytest.raises(boolfn.MissingPin):
        boolfn.truth_table(boolfn.parse("A * C"), ["A", "B"])
    pins = [f"P{i}" for i in range(11)]
    with pytest.raises(boolfn.TooManyInputs):
        boolfn.truth_table(boolfn.parse("P0"), pins)


def test_fun_sim_values():
    nand = boolfn.truth_table(boolfn.parse("!(A*B)"), "AB")
    and2 = boolfn.truth_table(boolfn.parse("A*B"), "AB")
    nor = boolfn.truth_table(boolfn.parse("!(A+B)"), "AB")
    xor = boolfn.truth_table(boolfn.parse("A^B"), "AB")
    assert boolfn.fun_sim(nand, and2) == 0.0
    assert boolfn.is_inverting_pair(nand, and2)
    assert boolfn.fun_sim(nand, nor) == 0.5
    assert boolfn.fun_sim(and2, xor) == 0.25
    with pytest.raises(boolfn.PinMismatch):
        boolfn.fun_sim(nand, boolfn.truth_table(boolfn.parse("!A"), "A"))


def test_assignments_order():
    rows = boolfn.assignments(["A", "B", "C"])
    assert rows.shape == (8, 3)
    assert rows[1].tolist() == [0, 0, 1]
    assert rows[4].tolist() == [1, 0, 0]


# -- property tests -----------------------------------------------------------

PINS = ("A", "B", "C", "D")


def exprs(depth=3):
    leaf = st.one_of(st.sampled_from([Var(p) for p in PINS]), st.sampled_from([Const(0), Const(1)]))

    def extend(children):
        pair = st.tuples(children, children)
        return st.one_of(
            children.map(Not),
            pair.map(And),
            pair.map(Or),
            pair.map(Xor),
        )

    return st.recursive(leaf, extend, max_leaves=12)


def reference_eval(e, env):
    # independent interpreter: structural recursion on the AST with python ints
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Not):
        return 1 - reference_eval(e.arg, env)
    vals = [reference_eval(a, env) for a in e.args]
    if isinstance(e, And):
        return int(all(vals))
    if isinstance(e, Or):
        return int(any(vals))
    return sum(vals) % 2


@settings(max_examples=200, deadline=None)
@given(exprs())
def test_truth_table_matches_reference_interpreter(e):
    tt = boolfn.truth_table(e, PINS)
    for row, bit in zip(itertools.product((0, 1), repeat=4), tt.bits):
        assert bit == reference_eval(e, dict(zip(PINS, row)))


@settings(max_examples=200, deadline=None)
@given(exprs())
def test_to_string_round_trips(e):
    again = boolfn.parse(boolfn.to_string(e))
    assert boolfn.truth_table(again, PINS) == boolfn.truth_table(e, PINS)
    assert again == e


@settings(max_examples=100, deadline=None)
@given(exprs(), exprs())
def test_fun_sim_symmetric_and_complement(a, b):
    ta, tb = boolfn.truth_table(a, PINS), boolfn.truth_table(b, PINS)
    assert boolfn.fun_sim(ta, tb) == boolfn.fun_sim(tb, ta)
    assert boolfn.fun_sim(ta, boolfn.truth_table(Not(a), PINS)) == 0.0
    assert boolfn.fun_sim(ta, ta) == 1.0


def test_evaluate_array_matches_scalar():
    e = boolfn.parse("(A ^ B) + !C")
    rows = boolfn.assignments(["A", "B", "C"]).astype(bool)
    arr = boolfn.evaluate_array(e, {p: rows[:, i] for i, p in enumerate("ABC")})
    scalar = [boolfn.evaluate(e, dict(zip("ABC", r.astype(int)))) for r in rows]
    assert np.array_equal(arr.astype(int), scalar)
