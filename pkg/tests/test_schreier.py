from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core import schreier as S
from src.core import words as W
from src.core.models import EscapeCertificate, RecurrentEvidence, SubgroupKind, SubgroupSpec

LINE = SubgroupSpec(kind=SubgroupKind.KERNEL_Z, weights=[1, 0])
COMMUTATOR = SubgroupSpec(kind=SubgroupKind.KERNEL_Z, weights=[[1, 0], [0, 1]])
PARITY = SubgroupSpec(kind=SubgroupKind.KERNEL_CYCLIC, weights=[1, 1], modulus=2)
TREE = SubgroupSpec(kind=SubgroupKind.TRIVIAL)


def reduced_streams(max_size=40):
    return st.lists(st.sampled_from([1, -1, 2, -2]), max_size=max_size).map(W.reduce)


def test_line_graph_structure():
    graph = S.build(LINE, 3)
    keys = sorted(k[0] for k in graph.keys)
    assert keys == list(range(-3, 4))
    for v in graph.interior_vertices():
        nbrs = graph.neighbors(v)
        assert nbrs[graph.slot(2)] == v and nbrs[graph.slot(-2)] == v
        assert graph.keys[nbrs[graph.slot(1)]][0] == graph.keys[v][0] + 1


def test_parity_graph_has_two_vertices():
    graph = S.build(PARITY, 2)
    assert graph.vertex_count() == 2
    assert graph.complete
    assert set(graph.neighbors(0)) == {1}
    assert set(graph.neighbors(1)) == {0}


def test_commutator_ball_matches_grid_count():
    graph = S.build(COMMUTATOR, 4)
    inside = [v for v in range(graph.vertex_count()) if graph.dist[v] <= 4]
    grid = [(x, y) for x in range(-4, 5) for y in range(-4, 5) if abs(x) + abs(y) <= 4]
    assert len(inside) == len(grid) == 41
    for v in inside:
        x, y = graph.keys[v]
        assert graph.dist[v] == abs(x) + abs(y)


def test_half_edge_involution():
    for spec in (LINE, COMMUTATOR, PARITY, TREE):
        graph = S.build(spec, 3)
        for v in graph.interior_vertices():
            for code in graph.letters:
                u = graph.step(v, code)
                assert graph.step(u, -code) == v


def test_finitely_generated_coset_tracking():
    spec = SubgroupSpec(kind=SubgroupKind.FINITELY_GENERATED, generators=["b", "abA"])
    graph = S.build(spec, 3)
    # b and aba^-1 fix the base coset
    assert graph.vertex_of(W.parse("b")) == graph.base
    assert graph.vertex_of(W.parse("abA")) == graph.base
    assert graph.vertex_of(W.parse("a")) != graph.base
    assert graph.vertex_of(W.parse("ab")) == graph.vertex_of(W.parse("a"))


@settings(max_examples=50)
@given(reduced_streams())
def test_fg_membership_matches_folding(word):
    spec = SubgroupSpec(kind=SubgroupKind.FINITELY_GENERATED, generators=["aa", "b", "abA"])
    graph = S.SchreierGraph(spec)
    # <a^2, b, aba^-1> is the kernel of a -> 1 mod 2, b -> 0
    in_subgroup = sum(1 for c in word if abs(c) == 1) % 2 == 0
    assert (graph.vertex_of(word) == graph.base) == in_subgroup


def test_budget_truncates():
    graph = S.build(TREE, 10, max_vertices=50)
    assert graph.truncated
    assert graph.vertex_count() <= 50


def test_project_ray_examples():
    graph = S.build(LINE, 1)
    assert S.project_ray([1] * 6, graph).distance_profile == [1, 2, 3, 4, 5, 6]
    loop = S.project_ray([2] * 5, graph)
    assert loop.distance_profile == [0] * 5
    assert len(set(loop.vertex_path)) == 1


def test_project_ray_rejects_unreduced_stream():
    with pytest.raises(ValueError):
        S.project_ray([1, -1], S.build(LINE, 1))


@given(reduced_streams())
def test_project_ray_matches_exponent_sum(word):
    graph = S.SchreierGraph(LINE)
    proj = S.project_ray(word, graph)
    total = 0
    for code, v, d in zip(word, proj.vertex_path, proj.distance_profile):
        total += {1: 1, -1: -1}.get(code, 0)
        assert graph.keys[v] == (total,)
        assert d == abs(total)


@given(reduced_streams())
def test_project_after_lift_is_identity(word):
    graph = S.SchreierGraph(COMMUTATOR)
    proj = S.project_ray(word, graph)
    again = S.project_ray(S.lift(proj), graph)
    assert again == proj


def test_tree_projection_uses_word_length():
    graph = S.SchreierGraph(TREE)
    proj = S.project_ray(W.parse("abab"), graph)
    assert proj.distance_profile == [1, 2, 3, 4]


def test_classify_ray():
    monotone = S.RayProjection(labels=(), vertex_path=[], distance_profile=list(range(1, 21)))
    cert = S.classify_ray(monotone, window=5, bound=4)
    assert isinstance(cert, EscapeCertificate)
    assert cert.certified_index == 4
    assert all(d > 4 for d in monotone.distance_profile[cert.certified_index :])

    periodic = S.RayProjection(labels=(), vertex_path=[], distance_profile=[0, 1] * 10)
    evidence = S.classify_ray(periodic, window=5, bound=0)
    assert isinstance(evidence, RecurrentEvidence)
    assert evidence.returns == tuple(range(0, 20, 2))

    with pytest.raises(ValueError, match="insufficient horizon"):
        S.classify_ray(monotone, window=20, bound=1)


def test_line_is_vertex_transitive():
    graph = S.build(LINE, 12)
    far = graph.vertex_of([1, 1, 1])
    near = S.distances_from(graph, graph.base, 5)
    moved = S.distances_from(graph, far, 5)
    assert sorted(near.values()) == sorted(moved.values())


def test_folner_intervals_on_line():
    graph = S.build(LINE, 8)
    for cand in S.folner_candidates(graph, "intervals"):
        assert cand.boundary == 2
        assert cand.ratio == Fraction(2, 4 * len(cand.vertices))


def test_folner_balls_on_grid_shrink():
    graph = S.build(COMMUTATOR, 8)
    ratios = [c.ratio for c in S.folner_candidates(graph, "balls")]
    assert ratios == sorted(ratios, reverse=True)
    assert ratios[-1] < Fraction(1, 4)
    # ball of radius r: 2r^2 + 2r + 1 vertices, perimeter 8r + 4 half-edges
    for r, ratio in enumerate(ratios):
        assert ratio == Fraction(8 * r + 4, 4 * (2 * r * r + 2 * r + 1))


def test_folner_balls_on_tree_bounded_below():
    graph = S.build(TREE, 4)
    cands = S.folner_candidates(graph, "balls")
    assert cands[1].ratio == Fraction(12, 20)
    assert all(c.ratio >= Fraction(1, 2) for c in cands)


def test_greedy_on_finite_graph_stops_at_half():
    graph = S.build(SubgroupSpec(kind=SubgroupKind.KERNEL_CYCLIC, weights=[1, 0], modulus=6), 6)
    cands = S.folner_candidates(graph, "greedy")
    assert max(len(c.vertices) for c in cands) == 3
    assert cands[-1].boundary == 2


def test_edge_rows_cover_positive_letters():
    graph = S.build(PARITY, 2)
    rows = list(graph.edge_rows())
    assert len(rows) == 2 * 2
    assert {r["generator"] for r in rows} == {0, 1}
