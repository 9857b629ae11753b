"""
Shortest arcs between immersed loops in graph cores, and the double-coset
audit of the separator map g -> H f1 g f2 K at tree level.
"""

import logging
import math
from collections import Counter, deque
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from src.core import words
from src.core.graphcore import FiniteGraphCore
from src.core.models import (
    ArcFamily,
    ArcGrowthReport,
    ConstructionError,
    DoubleCosetReport,
    ImmersedLoop,
    Word,
)

logger = logging.getLogger(__name__)

PLATEAU_CAP = 2_000


# Loops
def immersed_loop(core: FiniteGraphCore, edges: Sequence[int]) -> ImmersedLoop:
    """Validate a closed, cyclically non-backtracking sequence of directed edges."""
    edges = tuple(edges)
    if not edges:
        raise ValueError("A loop needs at least one edge")
    for i, e in enumerate(edges):
        f = edges[(i + 1) % len(edges)]
        if core.directed[e][1] != core.directed[f][0]:
            raise ValueError(f"Edges {e} and {f} do not meet")
        if f == core.reverse(e):
            raise ValueError(f"Loop backtracks at edges {e}, {f}")
    return ImmersedLoop(edges=edges)


def _loop_geometry(core: FiniteGraphCore, gamma: ImmersedLoop) -> Tuple[Set[int], Set[int], Set[int]]:
    """(loop vertices, admissible first edges, admissible last edges)."""
    vertices = {core.directed[e][0] for e in gamma.edges}
    loop_edges = set(gamma.edges) | {core.reverse(e) for e in gamma.edges}
    first = {
        e for e in range(len(core.directed)) if core.directed[e][0] in vertices and e not in loop_edges
    }
    last = {
        e for e in range(len(core.directed)) if core.directed[e][1] in vertices and e not in loop_edges
    }
    return vertices, first, last


def _arc_search(
    core: FiniteGraphCore,
    gamma: ImmersedLoop,
    max_length: int,
    budget: Optional[int],
    keep_from: Optional[int] = None,
) -> Tuple[Dict[int, int], List[Tuple[int, ...]], bool]:
    """DFS over non-backtracking paths from admissible first edges.

    Returns (count per length, arcs with length >= keep_from, truncated).
    """
    _, first, last = _loop_geometry(core, gamma)
    counts: Dict[int, int] = {}
    kept: List[Tuple[int, ...]] = []
    visited = 0
    track = keep_from is not None
    for start in sorted(first):
        # paths are only materialized when the caller keeps them
        stack = [(start, 1, (start,) if track else None)]
        while stack:
            edge, length, path = stack.pop()
            visited += 1
            if budget is not None and visited > budget:
                logger.warning(f"Arc enumeration truncated after {budget} paths")
                return counts, kept, True
            if edge in last:
                counts[length] = counts.get(length, 0) + 1
                if track and length >= keep_from:
                    kept.append(path)
            if length < max_length:
                for f in reversed(core.successors(edge)):
                    stack.append((f, length + 1, path + (f,) if track else None))
    return counts, kept, False


def enumerate_arcs(
    core: FiniteGraphCore, gamma: ImmersedLoop, t: int, delta: int, budget: Optional[int] = None
) -> ArcFamily:
    """Non-backtracking arcs from gamma to gamma with length in [t - delta, t + delta].

    An arc starts and ends at loop vertices; its first and last edges are not loop edges.
    """
    if not t > delta >= 0:
        raise ValueError(f"Need t > delta >= 0, got t={t}, delta={delta}")
    counts, kept, truncated = _arc_search(core, gamma, t + delta, budget, keep_from=t - delta)
    kept.sort()
    return ArcFamily(
        gamma=gamma,
        t=t,
        delta=delta,
        arcs=kept,
        count=sum(c for n, c in counts.items() if t - delta <= n <= t + delta),
        truncated=truncated,
    )


def arc_counts(core: FiniteGraphCore, gamma: ImmersedLoop, n_max: int) -> List[int]:
    """Exact arc counts of lengths 1..n_max from the transfer recursion."""
    _, first, last = _loop_geometry(core, gamma)
    vec = [1 if e in first else 0 for e in range(len(core.directed))]
    succ = [core.successors(e) for e in range(len(core.directed))]
    result = []
    for _ in range(n_max):
        result.append(sum(c for e, c in enumerate(vec) if e in last))
        nxt = [0] * len(vec)
        for e, c in enumerate(vec):
            if c:
                for f in succ[e]:
                    nxt[f] += c
        vec = nxt
    return result


def arc_growth_check(
    core: FiniteGraphCore,
    gamma: ImmersedLoop,
    t_max: int,
    delta: int,
    omega: float,
    epsilon: float = 0.1,
    t_min: int = 8,
    budget: Optional[int] = None,
) -> ArcGrowthReport:
    """Log-count slope of |Arc(gamma, t, delta)| over t in [t_min, t_max] against omega - epsilon."""
    if t_max < 8:
        raise ValueError(f"t_max must be at least 8, got {t_max}")
    t_min = max(delta + 1, min(t_min, t_max - 1))
    by_length, _, truncated = _arc_search(core, gamma, t_max + delta, budget)
    lengths = list(range(t_min, t_max + 1))
    counts = [
        sum(by_length.get(n, 0) for n in range(t - delta, t + delta + 1)) for t in lengths
    ]
    positive = [(t, c) for t, c in zip(lengths, counts) if c > 0]
    if len(positive) < 2:
        rate = 0.0
    else:
        xs = np.array([t for t, _ in positive], dtype=float)
        ys = np.log(np.array([c for _, c in positive], dtype=float))
        rate = float(np.polyfit(xs, ys, 1)[0])
    scaled = [c * math.exp(-omega * t) for t, c in positive]
    bracket = (min(scaled), max(scaled)) if scaled else (0.0, 0.0)
    if truncated:
        verdict = "inconclusive"
    else:
        verdict = "pass" if rate >= omega - epsilon else "fail"
    logger.info(f"Arc growth on {core.name}: rate {rate:.4f} vs omega {omega:.4f} -> {verdict}")
    return ArcGrowthReport(
        lengths=lengths,
        counts=counts,
        rate=rate,
        omega=omega,
        epsilon=epsilon,
        verdict=verdict,
        bracket=bracket,
    )


# Separators
def separator_tau(F: Sequence[Word]) -> int:
    """Largest common prefix among distinct members of F and among their inverses."""
    tau = 0
    for i in range(len(F)):
        for j in range(i + 1, len(F)):
            tau = max(tau, words.gromov_product(F[i], F[j]))
            tau = max(tau, words.gromov_product(words.inverse(F[i]), words.inverse(F[j])))
    return tau


def _pick(F: Sequence[Word], ok) -> Optional[Word]:
    for f in F:
        if ok(f):
            return f
    return None


def extend_with_separators(
    g: Word,
    a: Word,
    b: Word,
    F: Sequence[Word],
    tau: Optional[int] = None,
    n0: Optional[int] = None,
    right: Optional[Sequence[Word]] = None,
) -> Tuple[Word, Word]:
    """Pick f1 in F and f2 in `right` (default F) so every junction of a.f1.g.f2.b
    cancels at most tau letters.

    Each junction rules out at most one member of F, so three separators always
    leave an admissible choice.
    """
    tau = separator_tau(F) if tau is None else tau
    n0 = 2 * tau + 1 if n0 is None else n0
    if len(g) < n0:
        raise ValueError(f"|g| = {len(g)} is below the separator threshold {n0}")
    right = F if right is None else right
    f1 = _pick(F, lambda f: words.cancellation(a, f) <= tau and words.cancellation(f, g) <= tau)
    f2 = _pick(right, lambda f: words.cancellation(g, f) <= tau and words.cancellation(f, b) <= tau)
    if f1 is None or f2 is None:
        raise ConstructionError(
            f"No admissible separator for g={words.format_word(g)} in "
            f"{[words.format_word(f) for f in F]}"
        )
    return f1, f2


# Double cosets
def _shortlex_key(word: Word) -> Tuple[int, Tuple[int, ...]]:
    return len(word), tuple(2 * (abs(c) - 1) + (0 if c > 0 else 1) for c in word)


def double_coset_form(word: Word, h: Word, k: Word) -> Word:
    """Shortlex-least element of <h> word <k>."""
    return double_coset_search(word, h, k)[0]


def double_coset_search(word: Word, h: Word, k: Word) -> Tuple[Word, bool]:
    """Shortlex-least element of <h> word <k>, and whether the plateau search hit PLATEAU_CAP.

    Greedy length descent by left h-moves, right k-moves and diagonal moves,
    then a search over the plateau of equally short representatives.
    """
    h_moves = (h, words.inverse(h))
    k_moves = (k, words.inverse(k))

    def moves(w: Word) -> Iterable[Word]:
        for x in h_moves:
            yield words.multiply(x, w)
        for y in k_moves:
            yield words.multiply(w, y)
        for x in h_moves:
            for y in k_moves:
                yield words.multiply(x, w, y)

    current = tuple(word)
    while True:
        best = min(moves(current), key=_shortlex_key)
        if len(best) < len(current):
            current = best
        else:
            break

    length = len(current)
    seen = {current}
    queue = deque([current])
    while queue and len(seen) < PLATEAU_CAP:
        w = queue.popleft()
        for nxt in moves(w):
            if len(nxt) < length:
                # a shorter representative restarts the search from there
                return double_coset_search(nxt, h, k)
            if len(nxt) == length and nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    capped = bool(queue)
    if capped:
        logger.warning(f"Plateau search capped at {PLATEAU_CAP} words for {words.format_word(word)}")
    return min(seen, key=_shortlex_key), capped


def _axis_ray(word: Word, length: int) -> Word:
    return words.power(word, length // max(1, len(word)) + 2)


def double_coset_audit(
    h: Word,
    k: Word,
    n: int,
    delta: int,
    F: Sequence[Word],
    rank: int = 2,
    budget: Optional[int] = None,
    tau: Optional[int] = None,
) -> DoubleCosetReport:
    """Fibers of the separator map g -> H f1 g f2 K over the annulus A(n, delta)."""
    tau = separator_tau(F) if tau is None else tau
    n0 = 2 * tau + 1
    reach = max(len(f) for f in F) + tau + 1
    # separators must not follow the axes of h or k for more than tau letters
    left_ok = [
        f
        for f in F
        if words.gromov_product(f, _axis_ray(h, reach)) <= tau
        and words.gromov_product(f, _axis_ray(words.inverse(h), reach)) <= tau
    ]
    right_ok = [
        f
        for f in F
        if words.gromov_product(words.inverse(f), _axis_ray(words.inverse(k), reach)) <= tau
        and words.gromov_product(words.inverse(f), _axis_ray(k, reach)) <= tau
    ]
    if not left_ok or not right_ok:
        raise ConstructionError("Separator triple follows the axis of h or k")

    N = sum(1 for m in range(-tau - 1, tau + 2) if len(words.power(h, m)) <= tau)
    M = 9 * N * N

    annulus = words.annulus(rank, n, delta, budget=budget)
    fibers: Counter = Counter()
    delta0 = 0
    below_n0 = 0
    capped = 0
    for g in annulus.elements:
        if len(g) < n0:
            below_n0 += 1
        # below_n0 words are counted, not rejected
        f1, f2 = extend_with_separators(g, (), (), left_ok, tau=tau, n0=0, right=right_ok)
        image, hit_cap = double_coset_search(words.multiply(f1, g, f2), h, k)
        capped += hit_cap
        fibers[image] += 1
        delta0 = max(delta0, abs(len(image) - len(g)))

    histogram = dict(sorted(Counter(fibers.values()).items()))
    max_fiber = max(fibers.values()) if fibers else 0
    distinct = len(fibers)
    passes = max_fiber <= M and distinct * M >= len(annulus.elements)
    if not passes:
        logger.warning(f"Double-coset audit failed: max fiber {max_fiber} vs M={M}")
    return DoubleCosetReport(
        n=n,
        delta=delta,
        annulus_size=len(annulus.elements),
        distinct=distinct,
        N=N,
        M=M,
        max_fiber=max_fiber,
        histogram=histogram,
        delta0=delta0,
        tau=tau,
        below_n0=below_n0,
        passes=passes,
        truncated=annulus.truncated or capped > 0,
    )
