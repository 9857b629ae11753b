import math
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from src.core import graphcore as G
from src.core import schreier as S
from src.core.models import SubgroupKind, SubgroupSpec

CORES = Path(__file__).resolve().parent.parent / "cores"
LINE = SubgroupSpec(kind=SubgroupKind.KERNEL_Z, weights=[1, 0])
TREE = SubgroupSpec(kind=SubgroupKind.TRIVIAL)


def core(name):
    return G.load_core(CORES / f"{name}.edges")


@pytest.mark.parametrize(
    "name,degree,betti,rho",
    [("bouquet", 4, 2, 3), ("theta", 3, 2, 2), ("barbell", 3, 2, 2), ("cycle", 2, 1, 1), ("random3", 3, 5, 2)],
)
def test_shipped_cores(name, degree, betti, rho):
    c = core(name)
    c.validate()
    assert c.degree == degree
    assert c.betti_number() == betti
    est = G.hashimoto_radius(c, 1e-9)
    assert abs(est.value - rho) <= 1e-6
    assert abs(math.log(est.value) - G.empirical_growth(c)) <= 0.05


def test_disconnected_core_rejected():
    with pytest.raises(ValueError):
        G.hashimoto_radius(G.FiniteGraphCore([(0, 0), (1, 1)]), 1e-6)


def test_irregular_core_rejected():
    with pytest.raises(ValueError):
        G.FiniteGraphCore([(0, 1), (1, 1)]).validate()


def test_save_and_load(tmp_path):
    c = core("random3")
    G.save_core(c, tmp_path / "copy.edges")
    again = G.load_core(tmp_path / "copy.edges")
    assert again.edges == c.edges


@pytest.mark.parametrize("name", ["theta", "barbell", "cycle"])
def test_transfer_counts_match_dfs(name):
    c = core(name)
    counts = G.nb_path_counts(c, 14)
    for n in range(1, 15):
        assert counts[n - 1] == G.nb_paths_dfs(c, n)


def test_bouquet_transfer_counts_match_dfs():
    c = core("bouquet")
    counts = G.nb_path_counts(c, 9)
    assert counts == [G.nb_paths_dfs(c, n) for n in range(1, 10)]
    assert counts[2] == 4 * 9


def test_transfer_recursion_is_matrix_apply():
    c = core("barbell")
    b = G.hashimoto_matrix(c)
    vec = np.ones(b.shape[0], dtype=np.int64)
    counts = G.nb_path_counts(c, 12)
    for n in range(12):
        assert int(vec.sum()) == counts[n]
        vec = b.T @ vec


def test_closed_counts_match_dfs():
    c = core("barbell")
    traces = G.closed_nb_counts(c, 12)
    assert traces == [G.nb_paths_dfs(c, n, closed=True) for n in range(1, 13)]
    rate = math.log(traces[-1]) / 12
    assert abs(rate - math.log(G.hashimoto_radius(c).value)) < 0.1


def test_grigorchuk_values():
    for d in range(3, 9):
        assert G.grigorchuk_radius(math.log(d - 1), d) == pytest.approx(1.0)
        assert G.grigorchuk_radius(math.log(math.sqrt(d - 1)), d) == pytest.approx(2 * math.sqrt(d - 1) / d)
        assert G.grigorchuk_radius(0.0, d) == pytest.approx(2 * math.sqrt(d - 1) / d)
    assert G.grigorchuk_radius(math.log(2), 4) == pytest.approx(7 / 8)


def test_grigorchuk_continuous_at_boundary():
    d = 5
    edge = math.log(math.sqrt(d - 1))
    left = G.grigorchuk_radius(edge - 1e-12, d)
    right = G.grigorchuk_radius(edge + 1e-12, d)
    assert left == pytest.approx(right, abs=1e-9)


def test_tree_return_probability_small_cases():
    probs = G.tree_return_probability(4, 4)
    assert probs[1] == 0
    assert probs[2] == Fraction(1, 4)
    # paths of length 4: up-up-down-down (3/4 * 1/4) or up-down-up-down
    assert probs[4] == Fraction(1, 4) * Fraction(3, 4) * Fraction(1, 4) + Fraction(1, 4) * Fraction(1, 4)


def test_srw_on_finite_core_tends_to_one():
    est = G.srw_radius(core("theta"), 512)
    assert est.value > 0.98


def test_srw_on_tree_approaches_radius():
    graph = S.SchreierGraph(TREE)
    est = G.srw_radius(graph, 2**12)
    assert abs(est.value - math.sqrt(3) / 2) < 0.02
    assert est.value <= math.sqrt(3) / 2


def test_srw_monotone_in_steps():
    values = [G.srw_radius(S.SchreierGraph(LINE), steps).value for steps in (16, 64, 256, 1024)]
    assert values == sorted(values)


def test_srw_line_with_loops_agrees_with_formula():
    graph = S.SchreierGraph(LINE)
    est = G.srw_radius(graph, 2**14)
    assert est.value >= 0.97
    assert abs(est.value - G.grigorchuk_radius(math.log(3), 4)) <= 0.02


def test_amenability_report_line():
    graph = S.build(LINE, 64)
    report = G.amenability_report(graph, max_steps=2**14)
    assert report.verdict == "amenable"
    assert report.consistent
    assert report.folner_best == Fraction(2, 4 * graph.vertex_count() - 8)
    assert report.srw.value > 0.99
    assert any("unverifiable" in note for note in report.notes)


def test_amenability_report_tree():
    graph = S.build(TREE, 5)
    report = G.amenability_report(graph, max_steps=2**10)
    assert report.verdict == "non-amenable"
    assert report.folner_best >= Fraction(1, 2)
    assert abs(report.srw.value - math.sqrt(3) / 2) < 0.03


def test_amenability_report_finite_core():
    report = G.amenability_report(core("random3"), max_steps=256)
    assert report.verdict == "finite"
    assert len(report.folner_ratios) == 4
