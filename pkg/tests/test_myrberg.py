import math
import random
from fractions import Fraction
from itertools import islice

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core import dimension as D
from src.core import myrberg as M
from src.core import qrtree as Q
from src.core import words as W
from src.core.models import ConstructionError

a, A, b, B = 1, -1, 2, -2
LOG3 = math.log(3)


@pytest.fixture(scope="module")
def three_stages():
    return M.build_myrberg_schedule(3, L_min=8)


@pytest.fixture(scope="module")
def two_stage_tree():
    return M.build_myrberg_tree(2, L_min=8)


@pytest.fixture(scope="module")
def twelve_stages():
    return M.build_myrberg_schedule(12)


# Stream
def test_stream_covers_short_words_once():
    prefix = list(islice(M.loxodromic_stream(2), 484))
    assert prefix[:4] == [(a,), (A,), (b,), (B,)]
    assert len(set(prefix)) == 484
    expected = {w for n in range(1, 6) for w in W.iter_words(2, n)}
    assert set(prefix) == expected


def test_stream_index_matches_enumeration():
    for i, word in enumerate(islice(M.loxodromic_stream(2), 200), 1):
        assert M.stream_index(word) == i
    assert M.stream_index(W.parse("aa")) == 5
    assert M.stream_index(W.parse("bA")) == 12


@pytest.mark.parametrize("word", [(), (a, A), (3,)])
def test_stream_index_rejects(word):
    with pytest.raises(ValueError):
        M.stream_index(word)


# Separators
def test_separator_triple_defaults():
    triple = M.separator_triple(2)
    assert [W.format_word(f) for f in triple.F] == ["ab", "aB", "aab"]
    assert triple.tau == 2
    long = M.separator_triple(2, 5)
    assert [len(f) for f in long.F] == [6, 6, 6]
    assert long.tau == 2
    with pytest.raises(ValueError):
        M.separator_triple(1)


def test_separator_axes_project_short():
    triple = M.separator_triple(2, 5)
    for i, fi in enumerate(triple.F):
        for j, fj in enumerate(triple.F):
            if i == j:
                continue
            assert W.independent(fi, fj)
            axis = W.axis_of(fj)
            for m in (1, 2, 3, -1, -2, -3):
                assert W.projection_diameter(axis, ((), W.power(fi, m))) <= triple.tau


reduced = st.lists(st.sampled_from([a, A, b, B]), min_size=1, max_size=9).map(W.reduce).filter(len)


@given(st.lists(reduced, min_size=1, max_size=15), reduced)
@settings(max_examples=60, deadline=None)
def test_choose_subfamily_keeps_a_third(A_tilde, bridge):
    triple = M.separator_triple(2)
    chosen, f = M.choose_subfamily(A_tilde, bridge, triple.F, triple.tau)
    assert f in triple.F
    assert 3 * len(chosen) >= len(A_tilde)
    assert W.cancellation(f, bridge) <= triple.tau
    for word in chosen:
        assert W.cancellation(word, f) <= triple.tau


def test_choose_subfamily_without_room():
    with pytest.raises(ConstructionError):
        M.choose_subfamily([W.parse("aa")], W.parse("ababab"), [W.parse("ab")], tau=2)


@given(st.lists(st.tuples(reduced, st.integers(min_value=1, max_value=4)), min_size=1, max_size=10), reduced)
@settings(max_examples=40, deadline=None)
def test_weighted_subfamily_matches_expanded(weighted, bridge):
    triple = M.separator_triple(2)
    A_tilde = [w for w, _ in weighted]
    weights = [n for _, n in weighted]
    expanded = [w for w, n in weighted for _ in range(n)]
    chosen, f = M.choose_subfamily(A_tilde, bridge, triple.F, triple.tau, weights=weights)
    chosen_expanded, f_expanded = M.choose_subfamily(expanded, bridge, triple.F, triple.tau)
    assert f == f_expanded
    kept = set(chosen)
    assert sum(n for w, n in weighted if w in kept) == len(chosen_expanded)


# Stages
def test_bridge_power():
    assert M.bridge_power((a,), 2) == (a,) * 5
    assert M.bridge_power(W.parse("bAB"), 2) == W.parse("bAAAAAB")
    assert M.bridge_power(W.parse("ab"), 2) == W.parse("ababab")


def test_myrberg_lengths():
    assert M.myrberg_lengths([5, 5, 5]) == [13, 14, 15]
    assert M.myrberg_lengths([5, 5, 5], L_min=8) == [8, 10, 15]
    assert M.myrberg_lengths([1, 1], L_min=8) == [8, 9]


def test_schedule_witnesses(three_stages):
    schedule, records = three_stages
    assert schedule.L == [8, 10, 15]
    assert schedule.K == [1, 1, 1]
    assert schedule.R == 2 * schedule.tau + 1
    assert [r.bridge for r in records] == [(a,), (A,), (b,)]
    assert [r.bridge_power for r in records] == [(a,) * 5, (A,) * 5, (b,) * 5]
    first = schedule.witnesses[0]
    assert first.bridge_ratio == Fraction(5, 8)
    assert first.cumulative_lhs == 11
    assert first.cumulative_rhs == 56
    assert schedule.witnesses[-1].k_cumulative == 0


def test_stage_pieces(two_stage_tree):
    _, schedule, records = two_stage_tree
    tau = schedule.tau
    for record in records:
        assert 3 * record.size >= record.candidates
        assert W.cancellation(record.f, record.bridge_power) <= tau
        assert W.cancellation(record.bridge_power, record.h) <= tau
        members = list(M.stage_members(record))
        assert len(members) == record.size
        assert len({a_n for a_n, _, _ in members}) == record.size
        for a_n, piece, (start, end) in members:
            assert len(a_n) == record.L
            assert W.cancellation(a_n, record.f) <= tau
            assert piece == W.multiply(a_n, record.f, record.bridge_power, record.h)
            assert end - start >= 1
            assert set(piece[start:end]) == set(record.bridge)
    for prev, cur in zip(records, records[1:]):
        for a_n, _, _ in M.stage_members(cur):
            assert W.cancellation(prev.h, a_n) <= tau


def test_stage_counts_match_members(three_stages):
    schedule, records = three_stages
    last = records[-1]
    assert last.q == 15 - 1 - schedule.R
    assert sum(1 for _ in M.stage_members(last)) == last.size
    assert sum(c.count for c in last.classes) == last.size
    assert schedule.size(2) == last.size


def test_drawn_members_belong_to_the_stage(two_stage_tree):
    _, _, records = two_stage_tree
    rng = random.Random(3)
    for record in records:
        members = set(M.stage_members(record))
        for _ in range(20):
            assert M.draw_member(record, rng) in members


def test_schedule_rejections():
    with pytest.raises(ValueError, match="Stage 1"):
        M.build_myrberg_schedule(2, L_sequence=[8, 100])
    with pytest.raises(ValueError, match="Stage 2"):
        M.build_myrberg_schedule(2, L_sequence=[8, 9])
    with pytest.raises(ValueError, match="increasing"):
        M.build_myrberg_schedule(2, L_sequence=[10, 9])
    with pytest.raises(ValueError, match="Stream ended"):
        M.build_myrberg_schedule(3, stream=[(a,), (b,)])
    with pytest.raises(ValueError, match="at least"):
        M.build_myrberg_schedule(1, F=M.separator_triple(2).F)


# Growth
def test_stage_rates_approach_log3(twelve_stages):
    schedule, records = twelve_stages
    assert schedule.L == [13, 14, 15, 20, 30, 36, 42, 48, 54, 60, 66, 72]
    omegas = schedule.omegas
    for record, omega in zip(records, omegas):
        assert omega == pytest.approx(math.log(record.size) / record.L)
    assert records[0].size == 2916
    assert min(omegas) >= LOG3 - 0.5
    assert omegas[-1] >= LOG3 - 0.15
    assert omegas[-1] > omegas[0]
    assert records[-1].size > records[0].size


def test_growth_check_uses_the_scheduled_rates(twelve_stages):
    schedule, _ = twelve_stages
    tree = Q.build_tree(schedule, node_budget=20_000)
    built, series, ok = M.myrberg_growth_check(tree, schedule)
    assert ok
    assert series.bracket[0] >= min(schedule.omegas) - 0.1
    assert series.bracket[0] <= series.bracket[1]
    assert built.stages_completed <= series.stages_completed


def test_growth_check_flags_an_inflated_rate(two_stage_tree):
    tree, schedule, _ = two_stage_tree
    _, series, ok = M.myrberg_growth_check(tree, schedule, tol=0.0)
    assert series.bracket[0] < min(schedule.omegas)
    assert not ok


def test_myrberg_tree(two_stage_tree):
    tree, schedule, records = two_stage_tree
    assert tree.completed_stages == 2
    assert not tree.truncated
    assert len(tree.levels[-1]) == records[0].size * records[1].size
    assert Q.injectivity(tree).failures == 0
    assert Q.quasi_geodesic_ledger(tree).failures == 0
    assert Q.sibling_separation(tree, schedule).failures == 0
    assert Q.shadow_laminarity(tree).failures == 0
    mass = D.mass_distribution(tree, 0.5 * min(schedule.omegas))
    assert D.mass_flow_audit(tree, mass).failures == 0


# Certificates
def test_sampled_rays_certify(twelve_stages):
    schedule, records = twelve_stages
    stream_prefix = [r.bridge for r in records]
    assert stream_prefix[11] == W.parse("bA")
    for ray, positions in M.sample_family_rays(records, 20, seed=7):
        cert = M.myrberg_certificate(ray, stream_prefix, schedule.tau, positions)
        assert cert.passed
        assert cert.positional is True
        assert cert.horizon == 12
        assert [w.index for w in cert.witnesses] == list(range(1, 13))


def test_sampling_is_seeded(three_stages):
    _, records = three_stages
    assert M.sample_family_rays(records, 3, seed=1) == M.sample_family_rays(records, 3, seed=1)


def test_tree_rays_certify(two_stage_tree):
    tree, schedule, records = two_stage_tree
    stream_prefix = [r.bridge for r in records]
    for leaf in tree.levels[-1][:50]:
        ray, positions = M.tree_ray(tree, leaf, records)
        assert ray == tree.words[leaf]
        assert M.myrberg_certificate(ray, stream_prefix, schedule.tau, positions).passed


def test_periodic_ray_fails():
    ray = (a,) * 40
    cert = M.myrberg_certificate(ray, [(a,), (b,), W.parse("ab")], 2)
    assert not cert.passed
    assert [w.passed for w in cert.witnesses] == [True, False, False]
    assert cert.witnesses[0].diameter == 40 + 4
    assert cert.positional is None


def test_empty_prefix_is_vacuous():
    cert = M.myrberg_certificate((a, b), [], 2)
    assert cert.passed
    assert cert.horizon == 0


def test_insufficient_horizon():
    with pytest.raises(ValueError, match="insufficient horizon"):
        M.myrberg_certificate((a,) * 10, [(a,), (b,)], 2, positions=[(0, 3)])
    with pytest.raises(ValueError, match="insufficient horizon"):
        M.myrberg_certificate((a,), [W.parse("ababababab")], 2)


def test_positions_must_sit_on_axes():
    ray = W.parse("aaaabbbb")
    good = M.myrberg_certificate(ray, [(a,), (b,)], 0, positions=[(0, 4), (4, 8)])
    assert good.positional is True
    bad = M.myrberg_certificate(ray, [(a,), (b,)], 0, positions=[(2, 6), (4, 8)])
    assert bad.positional is False
    assert not bad.passed
