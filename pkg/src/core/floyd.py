"""
Floyd metric on balls of the free group Cayley tree.
Edge e at distance n from the basepoint has length lambda^n; distances are
shortest weighted paths inside a ball, certified by the exit-path bound.
"""

import logging
import math
import random
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from src.core import words
from src.core.models import (
    AuditReport,
    FloydDimensionReport,
    FloydDistance,
    ShadowBallReport,
    WeightedBall,
    Word,
)

logger = logging.getLogger(__name__)

DEFAULT_LAMBDAS = (0.5, math.exp(-1), 0.7)
RATIO_SLACK = 1e-12


def _check_lambda(lam: float) -> None:
    if not 0 < lam < 1:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")


def random_word(rng: random.Random, rank: int, length: int) -> Word:
    letters = words.alphabet(rank)
    word: List[int] = []
    while len(word) < length:
        code = rng.choice(letters)
        if word and word[-1] == -code:
            continue
        word.append(code)
    return tuple(word)


def path_of(start: Sequence[int], label: Sequence[int]) -> List[Word]:
    """Vertices visited from `start` reading `label` letter by letter (backtracking allowed)."""
    vertices = [tuple(start)]
    for code in label:
        vertices.append(words.multiply(vertices[-1], (code,)))
    return vertices


# Balls and lengths
@lru_cache(maxsize=64)
def floyd_ball(radius: int, lam: float, basepoint: Word = (), rank: int = 2) -> WeightedBall:
    """Cayley-tree ball of `radius` around the basepoint with weights lambda^d(o, e)."""
    _check_lambda(lam)
    basepoint = tuple(basepoint)
    graph = nx.Graph()
    graph.add_node(basepoint)
    frontier: List[Word] = [()]
    for n in range(radius):
        weight = lam**n
        grown = []
        for w in frontier:
            for code in words.alphabet(rank):
                if w and w[-1] == -code:
                    continue
                child = w + (code,)
                graph.add_edge(words.multiply(basepoint, w), words.multiply(basepoint, child), weight=weight)
                grown.append(child)
        frontier = grown
    logger.debug(f"Floyd ball radius {radius} at {words.format_word(basepoint)}: {graph.number_of_nodes()} nodes")
    return WeightedBall(graph=graph, lam=lam, radius=radius, basepoint=basepoint)


def floyd_length(path: Sequence[Sequence[int]], lam: float, basepoint: Sequence[int] = ()) -> float:
    """Sum of lambda^d(o, e) over the edges of a vertex path."""
    _check_lambda(lam)
    total = 0.0
    for u, v in zip(path, path[1:]):
        if words.distance(u, v) != 1:
            raise ValueError(f"{words.format_word(u)} and {words.format_word(v)} are not adjacent")
        n = min(words.distance(basepoint, u), words.distance(basepoint, v))
        total += lam**n
    return total


def tree_floyd_distance(
    x: Sequence[int], y: Sequence[int], lam: float, basepoint: Sequence[int] = ()
) -> float:
    """Floyd length of the unique tree geodesic [x, y]."""
    x = tuple(x)
    return floyd_length(path_of(x, words.multiply(words.inverse(x), y)), lam, basepoint)


def floyd_distance(
    x: Sequence[int], y: Sequence[int], lam: float, radius: int, basepoint: Sequence[int] = ()
) -> FloydDistance:
    """Shortest weighted path inside the ball; exits can save at most 2 lambda^R / (1 - lambda)."""
    x, y, basepoint = tuple(x), tuple(y), tuple(basepoint)
    reach = max(words.distance(basepoint, x), words.distance(basepoint, y))
    if reach > radius:
        raise ValueError(f"Points at distance {reach} lie outside the ball of radius {radius}")
    ball = floyd_ball(radius, lam, basepoint)
    value = float(nx.dijkstra_path_length(ball.graph, x, y, weight="weight"))
    certified = 2 * reach <= radius
    if not certified:
        logger.warning(f"Radius {radius} too small to certify points at distance {reach}")
    return FloydDistance(value=value, truncation_bound=2 * lam**radius / (1 - lam), certified=certified)


def boundary_floyd_distance(
    xi: Sequence[int], eta: Sequence[int], lam: float, basepoint: Sequence[int] = ()
) -> FloydDistance:
    """Distance between boundary points given by prefixes, read at the common resolution.

    The tails beyond the resolution m add at most 2 lambda^m / (1 - lambda).
    """
    _check_lambda(lam)
    m = min(len(xi), len(eta))
    if words.gromov_product(xi, eta) >= m:
        raise ValueError("insufficient resolution")
    value = tree_floyd_distance(tuple(xi)[:m], tuple(eta)[:m], lam, basepoint)
    return FloydDistance(value=value, truncation_bound=2 * lam**m / (1 - lam), certified=True)


def scaled_visual_distance(xi: Sequence[int], eta: Sequence[int], lam: float) -> float:
    """Visual metric at epsilon = -log lambda, scaled to the Floyd diameter 2 / (1 - lambda)."""
    n = words.gromov_product(xi, eta)
    if n >= min(len(xi), len(eta)):
        raise ValueError("insufficient resolution")
    return 2 * lam**n / (1 - lam)


# Identities
def equivariance_audit(
    lam: float, trials: int, max_length: int = 3, seed: int = 0, rank: int = 2
) -> AuditReport:
    """rho^o(x, y) == rho^{go}(gx, gy) exactly for random g, x, y."""
    rng = random.Random(seed)
    radius = 2 * max_length
    detail = []
    for _ in range(trials):
        g, x, y = (random_word(rng, rank, rng.randint(0, max_length)) for _ in range(3))
        here = floyd_distance(x, y, lam, radius).value
        moved = floyd_distance(words.multiply(g, x), words.multiply(g, y), lam, radius, basepoint=g).value
        if here != moved:
            detail.append(f"g={words.format_word(g)}: {here!r} != {moved!r}")
    return AuditReport(name="floyd_equivariance", checked=trials, failures=len(detail), detail=detail[:10])


def basepoint_audit(
    lam: float, trials: int, max_length: int = 3, shift: int = 2, seed: int = 0, rank: int = 2
) -> AuditReport:
    """lambda^d(o, o') <= rho^{o'}(x, y) / rho^o(x, y) <= lambda^-d(o, o')."""
    rng = random.Random(seed)
    radius = 2 * (max_length + shift)
    detail = []
    checked = 0
    for _ in range(trials):
        other = random_word(rng, rank, rng.randint(0, shift))
        x = random_word(rng, rank, rng.randint(0, max_length))
        y = random_word(rng, rank, rng.randint(0, max_length))
        if x == y:
            continue
        checked += 1
        base = floyd_distance(x, y, lam, radius).value
        shifted = floyd_distance(x, y, lam, radius, basepoint=other).value
        d = len(other)
        ratio = shifted / base
        if not lam**d * (1 - RATIO_SLACK) <= ratio <= lam**-d * (1 + RATIO_SLACK):
            detail.append(f"o'={words.format_word(other)}: ratio {ratio!r} outside lambda^+-{d}")
    return AuditReport(name="floyd_basepoint", checked=checked, failures=len(detail), detail=detail[:10])


def triangle_audit(lam: float, trials: int, max_length: int = 3, seed: int = 0, rank: int = 2) -> AuditReport:
    rng = random.Random(seed)
    radius = 2 * max_length
    detail = []
    for _ in range(trials):
        x, y, z = (random_word(rng, rank, rng.randint(0, max_length)) for _ in range(3))
        xy = floyd_distance(x, y, lam, radius).value
        yz = floyd_distance(y, z, lam, radius).value
        xz = floyd_distance(x, z, lam, radius).value
        if xz > xy + yz + RATIO_SLACK:
            detail.append(f"{words.format_word(x)},{words.format_word(y)},{words.format_word(z)}")
    return AuditReport(name="floyd_triangle", checked=trials, failures=len(detail), detail=detail[:10])


def floyd_visual_audit(
    lam: float, pairs: int, resolution: int = 12, seed: int = 0, rank: int = 2
) -> Tuple[AuditReport, List[Dict[str, object]]]:
    """Floyd distance between random boundary prefixes against the scaled visual metric;
    every ratio must fall in [(1 - lambda)/(1 + lambda), (1 + lambda)/(1 - lambda)]."""
    rng = random.Random(seed)
    low, high = (1 - lam) / (1 + lam), (1 + lam) / (1 - lam)
    rows = []
    detail = []
    while len(rows) < pairs:
        xi = random_word(rng, rank, resolution)
        eta = random_word(rng, rank, resolution)
        if words.gromov_product(xi, eta) >= resolution - 1:
            continue
        floyd = boundary_floyd_distance(xi, eta, lam).value
        visual = scaled_visual_distance(xi, eta, lam)
        ratio = floyd / visual
        rows.append({"pair_id": len(rows), "floyd_dist": floyd, "visual_dist": visual, "ratio": ratio})
        if not low <= ratio <= high:
            detail.append(f"pair {len(rows) - 1}: ratio {ratio:.6f}")
    report = AuditReport(name="floyd_visual", checked=len(rows), failures=len(detail), detail=detail[:10])
    return report, rows


# Visibility and shadows
def visibility_profile(
    lam: float,
    kappa_grid: Sequence[float],
    sample_size: int,
    c: float = 1.0,
    max_length: int = 12,
    seed: int = 0,
    rank: int = 2,
) -> List[Dict[str, object]]:
    """Largest d(o, gamma) seen among sampled c-quasi-geodesics of Floyd length >= kappa.

    Paths are tree geodesics with backtracking spurs of total length up to
    (c - 1) d(x, y) inserted.
    """
    _check_lambda(lam)
    rng = random.Random(seed)
    samples = []
    for _ in range(sample_size):
        x = random_word(rng, rank, rng.randint(0, max_length))
        y = random_word(rng, rank, rng.randint(0, max_length))
        label = list(words.multiply(words.inverse(x), y))
        budget = int((c - 1) * len(label))
        while budget >= 2:
            spur = random_word(rng, rank, rng.randint(1, budget // 2))
            at = rng.randint(0, len(label))
            label[at:at] = list(spur + words.inverse(spur))
            budget -= 2 * len(spur)
        path = path_of(x, label)
        samples.append((floyd_length(path, lam), min(len(p) for p in path)))
    rows = []
    for kappa in sorted(kappa_grid):
        seen = [d for length, d in samples if length >= kappa]
        bound = kappa * (1 - lam) / 2
        rows.append(
            {
                "kappa": kappa,
                "phi": max(seen) if seen else None,
                "samples": len(seen),
                "analytic": math.log(bound) / math.log(lam) if bound < 1 else 0.0,
            }
        )
    return rows


def shadow_ball_compare(
    xi: Sequence[int], depth: int, lam: float, samples: int = 200, seed: int = 0, rank: int = 2
) -> ShadowBallReport:
    """Compare the shadow (cylinder) of v = xi[:depth] with Floyd balls around xi of
    radius c lambda^depth."""
    xi = tuple(xi)
    if not 0 <= depth < len(xi):
        raise ValueError(f"depth {depth} must lie below the resolution {len(xi)}")
    rng = random.Random(seed)
    v = xi[:depth]
    r = lam**depth
    c1, c2 = 0.0, math.inf
    inside = outside = 0
    for i in range(samples):
        if i % 2 == 0:
            stem = v
        else:
            stem = xi[: rng.randint(0, depth)]
        tail = random_word(rng, rank, len(xi) - len(stem))
        if stem and tail and tail[0] == -stem[-1]:
            continue
        eta = stem + tail
        if words.gromov_product(xi, eta) >= len(xi):
            continue
        ratio = boundary_floyd_distance(xi, eta, lam).value / r
        if eta[:depth] == v:
            inside += 1
            c1 = max(c1, ratio)
        else:
            outside += 1
            c2 = min(c2, ratio)
    kappa = tree_floyd_distance((), xi, lam, basepoint=v)
    return ShadowBallReport(
        depth=depth,
        r=r,
        c1=c1,
        c2=c2,
        inside=inside,
        outside=outside,
        kappa=kappa,
        nested=c1 < c2,
    )


def kappa_along_ray(ray: Sequence[int], vertices: Sequence[int], lam: float) -> List[float]:
    """rho^{v}(o, xi) for the ray vertices v = ray[:k], k in `vertices`."""
    ray = tuple(ray)
    return [tree_floyd_distance((), ray, lam, basepoint=ray[:k]) for k in vertices]


def large_floyd_threshold(
    lam: float,
    kappa: float,
    c: float = 2.0,
    samples: int = 300,
    max_length: int = 10,
    seed: int = 0,
    rank: int = 2,
) -> Dict[str, object]:
    """Empirical L(c, kappa): the longest middle segment alpha seen with
    rho^x(alpha) >= kappa but rho^x(gamma) < kappa / 2, x the midpoint of alpha."""
    rng = random.Random(seed)
    tested = 0
    failing: List[int] = []
    for _ in range(samples):
        alpha = random_word(rng, rank, rng.randint(2, max_length))
        left = random_word(rng, rank, rng.randint(0, max_length // 2))
        right = random_word(rng, rank, rng.randint(0, max_length // 2))
        path = path_of((), left + alpha + right)
        if not is_quasi_geodesic(path, c):
            continue
        start, end = len(left), len(left) + len(alpha)
        x = path[start + len(alpha) // 2]
        if tree_floyd_distance(path[start], path[end], lam, basepoint=x) < kappa:
            continue
        tested += 1
        if tree_floyd_distance(path[0], path[-1], lam, basepoint=x) < kappa / 2:
            failing.append(len(alpha))
    threshold = max(failing, default=0)
    logger.info(f"Empirical L(c={c}, kappa={kappa}) = {threshold} over {tested} paths")
    return {"c": c, "kappa": kappa, "threshold": threshold, "tested": tested, "failures": len(failing)}


def is_quasi_geodesic(path: Sequence[Sequence[int]], c: float) -> bool:
    """Every subpath is at most c times its endpoint distance plus c."""
    for i in range(len(path)):
        for j in range(i + 1, len(path)):
            if j - i > c * words.distance(path[i], path[j]) + c:
                return False
    return True


# Dimension
def floyd_dimension_experiment(
    rays: Sequence[Sequence[int]], lam: float, omega: float, lengths: Optional[Sequence[int]] = None
) -> FloydDimensionReport:
    """Box counting with Floyd cylinder diameters 2 lambda^n / (1 - lambda)."""
    _check_lambda(lam)
    rays = [tuple(r) for r in rays]
    if not rays:
        raise ValueError("No rays to cover")
    m = min(len(r) for r in rays)
    if lengths is None:
        lengths = range(1, m + 1)
    lengths = [n for n in lengths if 1 <= n <= m]
    if len(lengths) < 3:
        raise ValueError(f"Box counting needs at least 3 grid points, got {len(lengths)}")
    x = np.array([-math.log(2 * lam**n / (1 - lam)) for n in lengths])
    y = np.log(np.array([len({r[:n] for r in rays}) for n in lengths], dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    epsilon = -math.log(lam)
    return FloydDimensionReport(
        lam=lam,
        epsilon=epsilon,
        slope=float(slope),
        expected=omega / epsilon,
        residual=residual,
        points=list(zip(x.tolist(), y.tolist())),
    )
