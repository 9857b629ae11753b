import math
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core import arcs as A
from src.core import graphcore as G
from src.core import words as W

CORES = Path(__file__).resolve().parent.parent / "cores"
F = [W.power(W.parse("ab"), 3), W.power(W.parse("aB"), 3), W.power(W.parse("aab"), 2)]


def core(name):
    return G.load_core(CORES / f"{name}.edges")


def loops():
    theta = core("theta")
    barbell = core("barbell")
    bouquet = core("bouquet")
    return {
        "theta": (theta, A.immersed_loop(theta, [0, 3])),
        "barbell": (barbell, A.immersed_loop(barbell, [0])),
        "bouquet": (bouquet, A.immersed_loop(bouquet, [0])),
    }


def test_immersed_loop_rejects_backtracking():
    theta = core("theta")
    with pytest.raises(ValueError):
        A.immersed_loop(theta, [0, 1])


def test_bouquet_single_letter_arcs():
    bouquet, gamma = loops()["bouquet"]
    family = A.enumerate_arcs(bouquet, gamma, 1, 0)
    assert family.count == 2
    assert family.arcs == [(2,), (3,)]


def test_theta_counts_follow_closed_form():
    theta, gamma = loops()["theta"]
    counts = A.arc_counts(theta, gamma, 12)
    for t, c in enumerate(counts, 1):
        assert c == 2 * (2 ** (t - 1) + 2 * (-1) ** (t - 1)) // 3
    assert A.enumerate_arcs(theta, gamma, 2, 0).count == 0


@pytest.mark.parametrize("name,t_max", [("theta", 14), ("barbell", 14), ("bouquet", 8)])
def test_enumeration_matches_transfer_counts(name, t_max):
    c, gamma = loops()[name]
    exact = A.arc_counts(c, gamma, t_max)
    for t in range(1, t_max + 1):
        family = A.enumerate_arcs(c, gamma, t, 0)
        assert family.count == exact[t - 1] == len(family.arcs)


@pytest.mark.parametrize("name", ["theta", "barbell"])
def test_arc_reversal_symmetry(name):
    c, gamma = loops()[name]
    for t in range(1, 15):
        arcs = set(A.enumerate_arcs(c, gamma, t, 0).arcs)
        for arc in arcs:
            reverse = tuple(c.reverse(e) for e in reversed(arc))
            assert reverse in arcs


def test_window_sums_lengths():
    theta, gamma = loops()["theta"]
    exact = A.arc_counts(theta, gamma, 8)
    family = A.enumerate_arcs(theta, gamma, 6, 1)
    assert family.count == exact[4] + exact[5] + exact[6]
    assert all(5 <= len(a) <= 7 for a in family.arcs)


@pytest.mark.parametrize("name", ["theta", "barbell", "bouquet"])
def test_arc_growth_passes(name):
    c, gamma = loops()[name]
    omega = G.cogrowth(c)
    t_max = 18 if name != "bouquet" else 11
    report = A.arc_growth_check(c, gamma, t_max, 1, omega, epsilon=0.1)
    assert report.verdict == "pass"
    if name != "bouquet":
        low, high = report.bracket
        assert high / low <= 20


def test_cycle_arcs_are_bounded():
    cycle = core("cycle")
    gamma = A.immersed_loop(cycle, [0, 2, 4, 6])
    report = A.arc_growth_check(cycle, gamma, 10, 1, 0.0)
    assert report.rate == 0.0
    assert report.verdict == "pass"


def test_truncated_growth_is_inconclusive():
    theta, gamma = loops()["theta"]
    report = A.arc_growth_check(theta, gamma, 18, 1, math.log(2), budget=100)
    assert report.verdict == "inconclusive"


def test_separator_tau():
    assert A.separator_tau(F) == 2


def test_separators_exhaustive_short_words():
    tau = A.separator_tau(F)
    for n in range(2 * tau + 1, 7):
        for g in W.iter_words(2, n):
            f1, f2 = A.extend_with_separators(g, (), (), F)
            ledger = W.concat_ledger([f1, g, f2])
            assert max(ledger.cancellations) <= tau
            assert ledger.cascade_free


@settings(max_examples=80)
@given(
    st.lists(st.sampled_from([1, -1, 2, -2]), min_size=5, max_size=12).map(W.reduce).filter(lambda g: len(g) >= 5),
    st.lists(st.sampled_from([1, -1, 2, -2]), max_size=6).map(W.reduce),
    st.lists(st.sampled_from([1, -1, 2, -2]), max_size=6).map(W.reduce),
)
def test_separator_extension_ledger(g, a, b):
    f1, f2 = A.extend_with_separators(g, a, b, F)
    ledger = W.concat_ledger([a, f1, g, f2, b])
    assert all(c <= 2 for c in ledger.cancellations)
    assert ledger.cascade_free


def test_separator_threshold_enforced():
    with pytest.raises(ValueError):
        A.extend_with_separators(W.parse("ab"), (), (), F)


def test_double_coset_form_strips_powers():
    a, b = W.parse("a"), W.parse("b")
    assert A.double_coset_form(W.parse("aabab"), a, b) == W.parse("ba")
    assert A.double_coset_form(W.parse("aaa"), a, b) == ()
    assert A.double_coset_form(W.parse("Ab"), a, b) == ()


def test_double_coset_audit_small():
    report = A.double_coset_audit(W.parse("a"), W.parse("b"), 4, 0, F)
    assert report.annulus_size == 4 * 27
    assert report.N == 5 and report.M == 225
    assert report.max_fiber <= report.M
    assert report.distinct * report.M >= report.annulus_size
    assert report.passes
    assert sum(size * count for size, count in report.histogram.items()) == report.annulus_size


def test_double_coset_audit_degenerate_and_deterministic():
    first = A.double_coset_audit(W.parse("a"), W.parse("b"), 1, 0, F)
    assert first.annulus_size == 4
    assert first.below_n0 == 4
    again = A.double_coset_audit(W.parse("a"), W.parse("b"), 1, 0, F)
    assert first == again


def test_double_coset_audit_exhaustive_to_six():
    for n in range(1, 7):
        report = A.double_coset_audit(W.parse("a"), W.parse("b"), n, 0, F)
        assert report.passes


generators = st.sampled_from([(1,), (-1,), (2,), (-2,)])


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.sampled_from([1, -1, 2, -2]), max_size=10).map(W.reduce),
    generators,
    generators,
    st.integers(min_value=-3, max_value=3),
    st.integers(min_value=-3, max_value=3),
)
def test_double_coset_form_is_canonical(w, h, k, i, j):
    moved = W.multiply(W.power(h, i), w, W.power(k, j))
    form = A.double_coset_form(w, h, k)
    assert A.double_coset_form(moved, h, k) == form
    assert len(form) <= len(w)


def test_plateau_cap_marks_truncation(monkeypatch):
    monkeypatch.setattr(A, "PLATEAU_CAP", 1)
    form, capped = A.double_coset_search(W.parse("Ba"), W.parse("a"), W.parse("b"))
    assert capped
    assert form == W.parse("Ba")
    report = A.double_coset_audit(W.parse("a"), W.parse("b"), 2, 0, F)
    assert report.truncated


def test_plateau_search_uncapped():
    form, capped = A.double_coset_search(W.parse("aabab"), W.parse("a"), W.parse("b"))
    assert form == W.parse("ba")
    assert not capped


def test_separators_from_separate_lists():
    g = W.parse("abab")
    f1, f2 = A.extend_with_separators(g, (), (), F[:2], n0=0, right=F[2:])
    assert f1 in F[:2]
    assert f2 == F[2]
