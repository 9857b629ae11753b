import math
from fractions import Fraction

import pytest

from src.core import dimension as D
from src.core import qrtree as Q
from src.core import words as W

a, A, b, B = 1, -1, 2, -2
LOG3 = math.log(3)


def star():
    schedule = Q.make_schedule([3], [()], 0.1, tau=0, deltas=0, element_source=Q.straight_source(2, [a, A, b], [b]))
    return Q.build_tree(schedule)


def straight_tree(L):
    schedule = Q.make_schedule([L], [()], 0.5, tau=0, deltas=0, element_source=Q.straight_source(2, [a, A, b], [b]))
    return Q.build_tree(schedule), schedule


# Visual metric
def test_visual_distance():
    assert D.visual_distance(W.parse("aaa"), W.parse("ab"), 1.0) == pytest.approx(math.exp(-1))
    assert D.visual_distance(W.parse("ba"), W.parse("ab"), 2.0) == 1.0
    with pytest.raises(ValueError, match="insufficient resolution"):
        D.visual_distance(W.parse("aba"), W.parse("ab"))
    with pytest.raises(ValueError):
        D.visual_distance(W.parse("a"), W.parse("b"), 0)


def test_ultrametric_exhaustive():
    report = D.ultrametric_audit(list(W.iter_words(2, 4)))
    assert report.failures == 0
    assert report.checked > 0


def test_cylinder_cover():
    rows = D.cylinder_cover(Q.cayley_tree(2, 3), epsilon=0.5)
    assert len(rows) == 36
    assert all(row["diameter"] == pytest.approx(math.exp(-1.5)) for row in rows)


# Mass distribution
def test_star_masses_are_uniform():
    tree = star()
    dist = D.mass_distribution(tree, 0.3)
    assert len(tree.levels[1]) == 7
    for v in tree.levels[1]:
        assert dist.masses[v] == pytest.approx(1 / 7, rel=1e-12)
    exact = D.mass_distribution(tree, 0.0, base=Fraction(1, 2))
    assert all(exact.exact[v] == Fraction(1, 7) for v in tree.levels[1])
    assert exact.s == pytest.approx(math.log(2))


def test_two_children_weights():
    schedule = Q.Schedule([3], [1], [1], [()], [0.0], tau=0, R=0)
    schedule.set_elements(0, [W.parse("aa"), W.parse("bbbb")])
    tree = Q.build_tree(schedule)
    dist = D.mass_distribution(tree, 1.0)
    near, far = tree.levels[1]
    total = math.exp(-2) + math.exp(-4)
    assert dist.masses[near] == pytest.approx(math.exp(-2) / total, rel=1e-12)
    assert dist.masses[far] == pytest.approx(math.exp(-4) / total, rel=1e-12)


def test_mass_flow_on_cayley_tree():
    tree = Q.cayley_tree(2, 6)
    dist = D.mass_distribution(tree, 0.7)
    assert D.mass_flow_audit(tree, dist).failures == 0
    assert D.level_sums(tree, dist) == pytest.approx([1.0] * 7, rel=1e-12)


# Certificates
def test_star_certificate_threshold():
    tree = star()
    threshold = math.log(7) / 3
    below = D.certify_lower_bound(tree, threshold - 0.01)
    assert below.valid
    assert below.max_violation < 0
    above = D.certify_lower_bound(tree, threshold + 0.05)
    assert not above.valid
    assert above.max_violation > 0
    assert above.worst_node in tree.levels[1]


def test_exact_certificate():
    tree = star()
    cert = D.certify_lower_bound(tree, math.log(7) / 3 - 0.05, exact=True)
    assert cert.exact
    assert cert.valid
    assert cert.s_certified == pytest.approx(cert.s, abs=1e-3)
    cert = D.certify_lower_bound(Q.cayley_tree(2, 5), 0.9 * LOG3, exact=True)
    assert cert.valid


def test_cayley_tree_certificate_and_slope():
    tree = Q.cayley_tree(2, 8)
    s = 0.9 * LOG3
    cert = D.certify_lower_bound(tree, s)
    assert cert.valid
    assert cert.depth == 8
    assert cert.slope == pytest.approx(LOG3, abs=1e-9)
    assert cert.slope >= s - 0.15
    assert cert.stabilization_depth is not None


def test_straight_schedule_ledger():
    tree, schedule = straight_tree(9)
    assert len(tree.levels[1]) == 4921
    s = math.log(4921) / 9 - 0.01
    cert = D.certify_lower_bound(tree, s, schedule=schedule)
    assert cert.valid
    [row] = cert.product_ledger
    assert row["log_factor"] == pytest.approx(0.09, abs=1e-9)
    assert row["holds"]
    [row] = D.product_ledger(schedule, math.log(4921) / 9 + 0.01)
    assert not row["holds"]


def test_stabilization_exponents_decrease():
    tree = Q.cayley_tree(2, 8)
    depth, exponents = D.stabilization_depth(tree, D.mass_distribution(tree, 0.5))
    assert len(exponents) == 8
    assert all(x >= y for x, y in zip(exponents, exponents[1:]))
    assert exponents[0] == pytest.approx(math.log(4))
    assert 1 <= depth <= 8


# Box counting
def test_box_counting_full_boundary():
    estimate = D.box_counting(list(W.iter_words(2, 7)))
    assert estimate.slope == pytest.approx(LOG3, abs=1e-9)
    assert estimate.residual < 1e-9
    halved = D.box_counting(list(W.iter_words(2, 7)), epsilon=2.0)
    assert halved.normalized_slope == pytest.approx(LOG3 / 2, abs=1e-9)


def test_box_counting_single_ray():
    assert D.box_counting([(a,) * 10]).slope == pytest.approx(0.0, abs=1e-12)


def test_box_counting_needs_three_points():
    with pytest.raises(ValueError, match="3 grid points"):
        D.box_counting([W.parse("ab"), W.parse("ba")])
    with pytest.raises(ValueError):
        D.box_counting(list(W.iter_words(2, 6)), lengths=[5, 6])


def test_straight_schedule_certifies_near_log3():
    first, last = [a, A, b], [b]
    L = [13, 14, 15, 16]
    schedule = Q.make_schedule(
        L,
        [()] * 4,
        Q.straight_rates(2, L, first, last, 0, 2),
        tau=0,
        deltas=0,
        element_source=Q.straight_source(2, first, last),
        counter=Q.straight_counter(2, first, last),
    )
    tree = Q.build_tree(schedule, node_budget=1_000_000)
    assert len(tree.words) <= 1_000_000
    assert len(tree.levels[-1]) == 398_581
    cert = D.certify_lower_bound(tree, 0.9 * LOG3, schedule=schedule)
    assert cert.valid
    assert abs(cert.slope - LOG3) <= 0.1
    assert all(row["holds"] for row in cert.product_ledger)
