import itertools

import numpy as np
import pytest
from hypothesis import given, settings

from dnfcount.formula import (
    DnfFormula,
    FormatError,
    clause_probabilities,
    clause_probability,
    evaluate,
    parse_formula,
    read_formula,
    serialize_formula,
    width_stats,
    write_formula,
)

from _util import FIG2, PSI, instances

PSI_TEXT = """c the two-clause xnor
p wdnf 2 2
1 2 0
-1 -2 0
w 1 0.5
w 2 0.5
"""


def test_parse_psi():
    f, w = parse_formula(PSI_TEXT)
    assert f == PSI
    assert w.tolist() == [0.5, 0.5]


def test_serialize_fig2_header_and_clauses():
    text = serialize_formula(FIG2, [0.5] * 4)
    lines = text.splitlines()
    assert lines[0] == "p wdnf 4 2"
    assert lines[1:3] == ["1 -2 4 0", "1 2 -3 0"]
    f, w = parse_formula(text)
    assert f == FIG2
    assert w.tolist() == [0.5] * 4


def test_serialize_rejects_empty_formula():
    with pytest.raises(ValueError):
        serialize_formula(DnfFormula(3, ()), [0.5] * 3)


@pytest.mark.parametrize(
    "text, line",
    [
        ("p wdnf 2 1\n1 1 0\nw 1 .5\nw 2 .5\n", 2),
        ("p wdnf 2 1\n1 3 0\nw 1 .5\nw 2 .5\n", 2),
        ("p wdnf 2 1\n1 2 0\nw 1 1.5\nw 2 .5\n", 3),
        ("p wdnf 2 1\n1 x 0\nw 1 .5\nw 2 .5\n", 2),
        ("p wdnf 2 1\n1 2\nw 1 .5\nw 2 .5\n", 2),
        ("1 2 0\n", 1),
    ],
)
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(FormatError) as info:
        parse_formula(text)
    assert info.value.line == line


def test_parse_errors_for_missing_pieces():
    with pytest.raises(FormatError):
        parse_formula("p wdnf 2 2\n1 2 0\nw 1 .5\nw 2 .5\n")
    with pytest.raises(FormatError):
        parse_formula("p wdnf 2 1\n1 2 0\nw 1 .5\n")
    with pytest.raises(FormatError):
        parse_formula("")


def test_clause_literals_are_sorted_by_variable():
    f, _ = parse_formula("p wdnf 3 1\n3 -1 2 0\nw 1 0\nw 2 0\nw 3 0\n")
    assert f.clauses == ((-1, 2, 3),)


def test_evaluate_examples():
    assert evaluate(PSI, [1, 1])
    assert not evaluate(PSI, [1, 0])
    assert evaluate(FIG2, [1, 0, 0, 1])
    with pytest.raises(ValueError):
        evaluate(PSI, [1, 0, 1])


def test_clause_probability_examples():
    half = np.full(4, 0.5)
    assert clause_probability((1, 2), half) == 0.25
    assert clause_probability((1, -2, 4), half) == 0.125
    assert clause_probability((1,), np.array([0.3])) == 0.3


def test_width_stats():
    assert width_stats(FIG2) == (3.0, 3, 6)
    assert width_stats(DnfFormula(5, ((1, 2, 3), (4, 5)))) == (2.5, 3, 5)
    assert width_stats(DnfFormula(1, ((1,),))) == (1.0, 1, 1)
    mixed = DnfFormula(5, ((1, 2, 3), (1, 2, 3, 4, 5)))
    assert width_stats(mixed) == (4.0, 5, 8)


def test_file_round_trip(tmp_path):
    w = np.array([0.1, 0.2, 1 / 3, 0.0])
    write_formula(tmp_path / "f.wdnf", FIG2, w)
    f, w2 = read_formula(tmp_path / "f.wdnf")
    assert f == FIG2
    assert np.array_equal(w, w2)


@settings(max_examples=200, deadline=None)
@given(instances())
def test_round_trip_property(inst):
    f, w = inst
    f2, w2 = parse_formula(serialize_formula(f, w))
    assert f2 == f
    assert np.array_equal(w2, w)


@settings(max_examples=100, deadline=None)
@given(instances(max_n=6))
def test_clause_probability_matches_enumeration(inst):
    f, w = inst
    vec = clause_probabilities(f, w)
    for j, c in enumerate(f.clauses):
        exact = 0.0
        for bits in itertools.product([0, 1], repeat=f.n):
            if evaluate(DnfFormula(f.n, (c,)), bits):
                exact += np.prod([w[i] if b else 1 - w[i] for i, b in enumerate(bits)])
        assert clause_probability(c, w) == pytest.approx(exact, abs=1e-12)
        assert vec[j] == pytest.approx(exact, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(instances(max_n=6))
def test_evaluate_monotone_in_clauses(inst):
    f, _ = inst
    extended = DnfFormula(f.n, f.clauses + ((1,),))
    for bits in itertools.product([0, 1], repeat=f.n):
        if evaluate(f, bits):
            assert evaluate(extended, bits)
