"""
Visual metric, mass distributions and dimension estimators on tree boundaries.
Certifies Hausdorff dimension lower bounds from the shadow mass inequality and
cross-checks them with box counting over cylinder covers.
"""

import logging
import math
from fractions import Fraction
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from src.core import words
from src.core.models import (
    AuditReport,
    BoxCountingEstimate,
    DimensionCertificate,
    MassDistribution,
    QRTree,
    Word,
)
from src.core.qrtree import Schedule

logger = logging.getLogger(__name__)

FLOAT_SLACK = 1e-9


# Visual metric
def visual_distance(xi: Sequence[int], eta: Sequence[int], epsilon: float = 1.0) -> float:
    """e^(-epsilon * common prefix length) between two boundary prefixes."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    p = words.gromov_product(xi, eta)
    if p >= min(len(xi), len(eta)):
        raise ValueError("insufficient resolution")
    return math.exp(-epsilon * p)


def ultrametric_audit(points: Sequence[Word], epsilon: float = 1.0) -> AuditReport:
    """Exhaustive symmetry and ultrametric check over all triples of prefixes."""
    detail = []
    checked = 0
    for x, y in combinations(points, 2):
        checked += 1
        if visual_distance(x, y, epsilon) != visual_distance(y, x, epsilon):
            detail.append(f"asymmetric {words.format_word(x)},{words.format_word(y)}")
    for x, y, z in combinations(points, 3):
        d = {
            "xy": visual_distance(x, y, epsilon),
            "yz": visual_distance(y, z, epsilon),
            "xz": visual_distance(x, z, epsilon),
        }
        for side, other in (("xz", ("xy", "yz")), ("xy", ("xz", "yz")), ("yz", ("xy", "xz"))):
            checked += 1
            if d[side] > max(d[other[0]], d[other[1]]):
                detail.append(
                    f"{side} too long at {words.format_word(x)},{words.format_word(y)},{words.format_word(z)}"
                )
    return AuditReport(name="ultrametric", checked=checked, failures=len(detail), detail=detail[:10])


def cylinder_cover(tree: QRTree, depth: Optional[int] = None, epsilon: float = 1.0) -> List[Dict[str, object]]:
    """Cylinders of one tree level with their visual diameters e^(-epsilon |w|)."""
    depth = len(tree.levels) - 1 if depth is None else depth
    return [
        {
            "node": v,
            "word": words.format_word(tree.words[v]),
            "length": tree.dist_root[v],
            "diameter": math.exp(-epsilon * tree.dist_root[v]),
        }
        for v in tree.levels[depth]
    ]


# Mass distribution
def _children(tree: QRTree) -> Dict[int, List[int]]:
    children: Dict[int, List[int]] = {}
    for v in range(1, len(tree.words)):
        children.setdefault(tree.parents[v], []).append(v)
    return children


def mass_distribution(
    tree: QRTree, s: float, epsilon: float = 1.0, base: Optional[Fraction] = None
) -> MassDistribution:
    """nu(v) = nu(parent) e^(-s eps d(o, v)) / sum over siblings w of e^(-s eps d(o, w)).

    With a rational `base` standing for e^(-s eps) the masses are also kept exactly.
    """
    if base is not None:
        if not 0 < base < 1:
            raise ValueError(f"base must lie in (0, 1), got {base}")
        s = -math.log(base) / epsilon
    n = len(tree.words)
    log_masses = [0.0] * n
    exact: Optional[List[Fraction]] = [Fraction(0)] * n if base is not None else None
    if exact is not None:
        exact[0] = Fraction(1)
    # nodes are numbered level by level, so parents come first
    for parent, kids in sorted(_children(tree).items()):
        d = np.array([tree.dist_root[k] for k in kids], dtype=float)
        logs = -s * epsilon * d
        norm = float(logsumexp(logs))
        for k, value in zip(kids, logs):
            log_masses[k] = log_masses[parent] + float(value) - norm
        if exact is not None:
            weights = [base ** tree.dist_root[k] for k in kids]
            total = sum(weights)
            for k, w in zip(kids, weights):
                exact[k] = exact[parent] * w / total
    return MassDistribution(
        s=s,
        epsilon=epsilon,
        masses=np.exp(np.array(log_masses)).tolist(),
        log_masses=log_masses,
        exact=exact,
    )


def level_sums(tree: QRTree, dist: MassDistribution) -> List[float]:
    return [math.fsum(dist.masses[v] for v in level) for level in tree.levels]


def mass_flow_audit(tree: QRTree, dist: MassDistribution, tol: float = 1e-12) -> AuditReport:
    """Children split their parent's mass and every complete level carries mass 1."""
    detail = []
    checked = 0
    for parent, kids in _children(tree).items():
        checked += 1
        total = math.fsum(dist.masses[k] for k in kids)
        if abs(total - dist.masses[parent]) > tol * max(dist.masses[parent], 1e-300):
            detail.append(f"node {parent}: children carry {total!r} of {dist.masses[parent]!r}")
    for depth, total in enumerate(level_sums(tree, dist)):
        checked += 1
        if abs(total - 1.0) > tol * max(1, len(tree.levels[depth])):
            detail.append(f"level {depth} carries {total!r}")
    return AuditReport(name="mass_flow", checked=checked, failures=len(detail), detail=detail[:10])


def product_ledger(schedule: Schedule, s: float, epsilon: float = 1.0) -> List[Dict[str, object]]:
    """Stagewise log of (sum_a e^(-s eps |a|))^K_n e^(-s eps B_n); each factor must be >= 1."""
    rows = []
    cumulative = 0.0
    for i in range(len(schedule)):
        counts = schedule.length_counts(i)
        if counts is None:
            continue
        lengths = np.array(list(counts), dtype=float)
        weights = np.array(list(counts.values()), dtype=float)
        factor = schedule.K[i] * float(logsumexp(-s * epsilon * lengths, b=weights))
        factor -= s * epsilon * len(schedule.bridges[i])
        cumulative += factor
        rows.append({"stage": i + 1, "log_factor": factor, "cumulative": cumulative, "holds": factor >= 0})
    return rows


def stabilization_depth(
    tree: QRTree, dist: MassDistribution, tol: float = 0.05
) -> Tuple[Optional[int], List[float]]:
    """Depth from which the per-level exponent min(-log nu(v) / (eps d(o, v))) stays within
    tol of its deepest value."""
    exponents = []
    for level in tree.levels[1:]:
        exponents.append(
            min(-dist.log_masses[v] / (dist.epsilon * tree.dist_root[v]) for v in level)
        )
    if not exponents:
        return None, exponents
    last = exponents[-1]
    depth = len(exponents)
    while depth > 1 and abs(exponents[depth - 2] - last) <= tol:
        depth -= 1
    return depth, exponents


# Certificates
def certify_lower_bound(
    tree: QRTree,
    s: float,
    epsilon: float = 1.0,
    schedule: Optional[Schedule] = None,
    exact: bool = False,
    max_denominator: int = 1000,
) -> DimensionCertificate:
    """Check nu(v) <= e^(-s eps d(o, v)) at every node.

    In exact mode e^(-s eps) is replaced by a nearby rational base and the
    comparison is done in Fractions; s_certified is the exponent of that base.
    """
    if exact:
        base = Fraction(math.exp(-s * epsilon)).limit_denominator(max_denominator)
        dist = mass_distribution(tree, s, epsilon, base=base)
        valid = all(dist.exact[v] <= base ** tree.dist_root[v] for v in range(len(tree.words)))
    else:
        dist = mass_distribution(tree, s, epsilon)
        valid = None
    s_certified = dist.s
    violations = [
        dist.log_masses[v] + s_certified * epsilon * tree.dist_root[v] for v in range(len(tree.words))
    ]
    worst = int(np.argmax(violations))
    if valid is None:
        valid = violations[worst] <= FLOAT_SLACK
    slope = residual = None
    try:
        estimate = box_counting([tree.words[v] for v in tree.levels[-1]], epsilon)
        slope, residual = estimate.normalized_slope, estimate.residual
    except ValueError as e:
        logger.info(f"No box-counting slope: {e}")
    depth, _ = stabilization_depth(tree, dist)
    ledger = product_ledger(schedule, s_certified, epsilon) if schedule is not None else []
    if valid:
        logger.info(f"Dimension >= {s_certified:.4f} certified at depth {len(tree.levels) - 1}")
    else:
        logger.warning(f"Mass inequality fails at node {worst} by {violations[worst]:.3e}")
    return DimensionCertificate(
        s=s,
        s_certified=s_certified,
        epsilon=epsilon,
        valid=valid,
        max_violation=violations[worst],
        worst_node=worst,
        depth=len(tree.levels) - 1,
        exact=exact,
        slope=slope,
        residual=residual,
        product_ledger=ledger,
        stabilization_depth=depth,
    )


def box_counting(
    rays: Sequence[Sequence[int]], epsilon: float = 1.0, lengths: Optional[Sequence[int]] = None
) -> BoxCountingEstimate:
    """Least-squares slope of log N(r) against log(1/r) = eps n, where N counts the
    cylinders of length n met by the rays."""
    rays = [tuple(r) for r in rays]
    if not rays:
        raise ValueError("No rays to cover")
    m = min(len(r) for r in rays)
    if lengths is None:
        lengths = range(1, m + 1)
    lengths = [n for n in lengths if 1 <= n <= m]
    if len(lengths) < 3:
        raise ValueError(f"Box counting needs at least 3 grid points, got {len(lengths)}")
    n = np.array(lengths, dtype=float)
    counts = np.log(np.array([len({r[:k] for r in rays}) for k in lengths], dtype=float))
    slope, intercept = np.polyfit(n, counts, 1)
    residual = float(np.sqrt(np.mean((counts - (slope * n + intercept)) ** 2)))
    return BoxCountingEstimate(
        slope=float(slope),
        normalized_slope=float(slope) / epsilon,
        residual=residual,
        points=[(epsilon * k, float(c)) for k, c in zip(lengths, counts)],
    )
