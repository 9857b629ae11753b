"""
Finite graph cores covered by regular trees.
Non-backtracking transfer counts, co-growth, Grigorchuk's formula and SRW spectral radius.
"""

import logging
import math
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix, identity

from src.core.models import AmenabilityReport, SpectralEstimate, SubgroupKind
from src.core.schreier import SchreierGraph, folner_candidates

logger = logging.getLogger(__name__)

EXACT_SRW_STEPS = 256
MOHAR_NOTE = "mohar inequality unverifiable as printed; only r = 1 <=> amenable is checked"


class FiniteGraphCore:
    """Finite multigraph with loops; directed edge 2i is u->v of edge i, 2i+1 its reverse."""

    def __init__(self, edges: Sequence[Tuple[int, int]], name: str = "core") -> None:
        if not edges:
            raise ValueError("A core needs at least one edge")
        self.name = name
        self.edges: List[Tuple[int, int]] = [(int(u), int(v)) for u, v in edges]
        self.num_vertices = max(max(u, v) for u, v in self.edges) + 1
        self.directed: List[Tuple[int, int]] = []
        for u, v in self.edges:
            self.directed.append((u, v))
            self.directed.append((v, u))
        self.out_edges: List[List[int]] = [[] for _ in range(self.num_vertices)]
        for e, (u, _) in enumerate(self.directed):
            self.out_edges[u].append(e)

    @staticmethod
    def reverse(e: int) -> int:
        return e ^ 1

    def degrees(self) -> List[int]:
        return [len(out) for out in self.out_edges]

    @property
    def degree(self) -> Optional[int]:
        degs = set(self.degrees())
        return degs.pop() if len(degs) == 1 else None

    def to_networkx(self) -> nx.MultiGraph:
        graph = nx.MultiGraph()
        graph.add_nodes_from(range(self.num_vertices))
        graph.add_edges_from(self.edges)
        return graph

    def is_connected(self) -> bool:
        return nx.is_connected(self.to_networkx())

    def betti_number(self) -> int:
        components = nx.number_connected_components(self.to_networkx())
        return len(self.edges) - self.num_vertices + components

    def validate(self) -> None:
        if self.degree is None:
            raise ValueError(f"Core '{self.name}' is not regular: degrees {self.degrees()}")
        if not self.is_connected():
            raise ValueError(f"Core '{self.name}' is disconnected")
        if self.betti_number() < 1:
            raise ValueError(f"Core '{self.name}' is a tree (Betti number 0)")

    def successors(self, e: int) -> List[int]:
        """Non-backtracking continuations of directed edge e."""
        head = self.directed[e][1]
        return [f for f in self.out_edges[head] if f != self.reverse(e)]


def load_core(path: Union[str, Path]) -> FiniteGraphCore:
    """Read an edge-list file: one `u v` pair per line, `#` comments."""
    path = Path(path)
    edges = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{line_no}: expected 'u v', got '{line}'")
            edges.append((int(parts[0]), int(parts[1])))
    return FiniteGraphCore(edges, name=path.stem)


def save_core(core: FiniteGraphCore, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# {core.name}: {core.num_vertices} vertices, {len(core.edges)} edges\n")
        for u, v in core.edges:
            f.write(f"{u} {v}\n")


# Non-backtracking operator
def hashimoto_matrix(core: FiniteGraphCore) -> csr_matrix:
    rows, cols = [], []
    for e in range(len(core.directed)):
        for f in core.successors(e):
            rows.append(e)
            cols.append(f)
    n = len(core.directed)
    data = np.ones(len(rows), dtype=np.int64)
    return csr_matrix((data, (rows, cols)), shape=(n, n))


def hashimoto_radius(core: FiniteGraphCore, tol: float = 1e-10, max_iter: int = 100_000) -> SpectralEstimate:
    """Spectral radius of the non-backtracking operator B.

    Power iteration on B + I from the all-ones vector; the Collatz-Wielandt
    quotients bracket rho(B) + 1 at every step.
    """
    if tol <= 0:
        raise ValueError(f"Tolerance must be positive, got {tol}")
    if not core.is_connected():
        raise ValueError(f"Core '{core.name}' is disconnected")
    shifted = hashimoto_matrix(core).astype(float)
    shifted = (shifted + identity(shifted.shape[0], format="csr")).tocsr()
    x = np.ones(shifted.shape[0])
    lo, hi = 0.0, math.inf
    for iteration in range(1, max_iter + 1):
        y = shifted @ x
        quotients = y / x
        lo, hi = max(lo, quotients.min()), min(hi, quotients.max())
        if hi - lo <= tol:
            break
        x = y / y.max()
    else:
        logger.warning(f"hashimoto_radius({core.name}) stopped at {max_iter} iterations, gap {hi - lo:.3e}")
    value = (lo + hi) / 2 - 1
    return SpectralEstimate(value=value, tolerance=max((hi - lo) / 2, tol / 2), iterations=iteration)


def cogrowth(core: FiniteGraphCore, tol: float = 1e-10) -> float:
    """Critical exponent of pi_1(core) on the covering tree: log rho(B)."""
    value = hashimoto_radius(core, tol).value
    return math.log(value) if value > 0 else 0.0


def nb_path_counts(core: FiniteGraphCore, n_max: int) -> List[int]:
    """Exact counts of non-backtracking paths of length 1..n_max by the transfer recursion."""
    counts = np.ones(len(core.directed), dtype=object)
    result = [int(counts.sum())]
    succ = [core.successors(e) for e in range(len(core.directed))]
    for _ in range(1, n_max):
        nxt = np.zeros(len(core.directed), dtype=object)
        for e, c in enumerate(counts):
            if c:
                for f in succ[e]:
                    nxt[f] += c
        counts = nxt
        result.append(int(counts.sum()))
    return result


def nb_paths_dfs(core: FiniteGraphCore, n: int, closed: bool = False) -> int:
    """Enumerate non-backtracking paths of length n edge by edge (oracle)."""
    total = 0
    for start in range(len(core.directed)):
        stack = [(start, 1)]
        origin = core.directed[start][0]
        while stack:
            e, length = stack.pop()
            if length == n:
                if not closed:
                    total += 1
                elif core.directed[e][1] == origin and core.reverse(e) != start:
                    total += 1
                continue
            for f in core.successors(e):
                stack.append((f, length + 1))
    return total


def closed_nb_counts(core: FiniteGraphCore, n_max: int) -> List[int]:
    """Cyclically non-backtracking closed paths of length 1..n_max, via trace(B^n)."""
    b = hashimoto_matrix(core).toarray().astype(object)
    power = np.identity(b.shape[0], dtype=object)
    traces = []
    for _ in range(n_max):
        power = power.dot(b)
        traces.append(int(np.trace(power)))
    return traces


def empirical_growth(core: FiniteGraphCore, n1: int = 10, n2: int = 20) -> float:
    """Log-slope of non-backtracking path counts between lengths n1 and n2."""
    counts = nb_path_counts(core, n2)
    return (math.log(counts[n2 - 1]) - math.log(counts[n1 - 1])) / (n2 - n1)


# Random walks
def grigorchuk_radius(omega: float, d: int) -> float:
    """SRW spectral radius of a d-regular graph from its co-growth exponent."""
    if d < 3:
        raise ValueError(f"Degree must be at least 3, got {d}")
    if omega < 0:
        raise ValueError(f"Co-growth must be nonnegative, got {omega}")
    root = math.sqrt(d - 1)
    growth = math.exp(omega)
    if growth >= root:
        return (root / d) * (root / growth + growth / root)
    return 2 * root / d


def tree_return_probability(d: int, steps: int) -> List[Fraction]:
    """Exact p_n(o, o) on the d-regular tree for n = 0..steps (radial chain)."""
    dist = {0: Fraction(1)}
    out = [Fraction(1)]
    up, down = Fraction(d - 1, d), Fraction(1, d)
    for _ in range(steps):
        nxt: Dict[int, Fraction] = {}
        for level, mass in dist.items():
            if level == 0:
                nxt[1] = nxt.get(1, 0) + mass
            else:
                nxt[level + 1] = nxt.get(level + 1, 0) + mass * up
                nxt[level - 1] = nxt.get(level - 1, 0) + mass * down
        dist = nxt
        out.append(dist.get(0, Fraction(0)))
    return out


def _walk_operator(graph: Union[SchreierGraph, FiniteGraphCore], max_steps: int):
    """Adjacency lists of the region a returning walk of max_steps can reach.

    Returns (neighbour lists, base index, degree, usable steps). Mass that
    leaves the region is dropped; returns up to `usable steps` are exact.
    """
    if isinstance(graph, FiniteGraphCore):
        d = graph.degree
        if d is None:
            raise ValueError(f"Core '{graph.name}' is not regular")
        nbrs = [[graph.directed[e][1] for e in graph.out_edges[v]] for v in range(graph.num_vertices)]
        return nbrs, 0, d, max_steps

    if graph.spec.kind == SubgroupKind.TRIVIAL:
        radius = max_steps // 2
        d = graph.degree
        # radial chain: level 0 has d edges up; level n has d-1 up, 1 down
        nbrs = [[1] * d if radius >= 1 else []]
        nbrs += [[n + 1] * (d - 1) * (n < radius) + [n - 1] for n in range(1, radius + 1)]
        return nbrs, 0, d, max_steps

    radius = max_steps // 2
    graph.ensure_radius(radius + 1)
    if graph.truncated:
        radius = max(0, graph.radius - 1)
        logger.warning(f"SRW region truncated to radius {radius}; using {2 * radius} steps")
    index = {}
    region = [v for v in range(graph.vertex_count()) if graph.dist[v] <= radius and graph.is_interior(v)]
    for i, v in enumerate(region):
        index[v] = i
    nbrs = [[index[u] for u in graph.neighbors(v) if u in index] for v in region]
    return nbrs, index[graph.base], graph.degree, min(max_steps, 2 * radius) if graph.truncated else max_steps


def srw_radius(
    graph: Union[SchreierGraph, FiniteGraphCore], max_steps: int, exact_steps: int = EXACT_SRW_STEPS
) -> SpectralEstimate:
    """Certified lower bound sup_n p_2n(o, o)^(1/2n) on the SRW spectral radius.

    Exact integer walk counts up to `exact_steps`, log-scaled floats beyond.
    The tolerance is the change of the estimate over the second half of the run.
    """
    if max_steps < 2 or max_steps % 2:
        raise ValueError(f"max_steps must be a positive even integer, got {max_steps}")
    nbrs, base, d, steps = _walk_operator(graph, max_steps)
    n = len(nbrs)
    best = 0.0
    history: List[Tuple[int, float]] = []

    counts: Dict[int, int] = {base: 1}
    exact_limit = min(exact_steps, steps)
    for t in range(1, exact_limit + 1):
        nxt: Dict[int, int] = {}
        for v, c in counts.items():
            for u in nbrs[v]:
                nxt[u] = nxt.get(u, 0) + c
        counts = nxt
        if t % 2 == 0 and counts.get(base):
            p = Fraction(counts[base], d**t)
            best = max(best, math.exp((math.log(p.numerator) - math.log(p.denominator)) / t))
            history.append((t, best))

    if steps > exact_limit and counts:
        rows = [u for v in range(n) for u in nbrs[v]]
        cols = [v for v in range(n) for _ in nbrs[v]]
        transfer = csr_matrix((np.full(len(rows), 1.0 / d), (rows, cols)), shape=(n, n))
        total = sum(counts.values())
        x = np.zeros(n)
        for v, c in counts.items():
            x[v] = c / total
        log_scale = math.log(total) - exact_limit * math.log(d)
        for t in range(exact_limit + 1, steps + 1):
            x = transfer @ x
            peak = x.max()
            if peak <= 0:
                break
            if peak < 1e-150:
                x = x / peak
                log_scale += math.log(peak)
            if t % 2 == 0 and x[base] > 0:
                best = max(best, math.exp((math.log(x[base]) + log_scale) / t))
                history.append((t, best))

    half = [b for t, b in history if t <= steps // 2]
    tolerance = best - half[-1] if half else best
    return SpectralEstimate(value=min(best, 1.0), tolerance=max(tolerance, 1e-12), iterations=steps)


# Amenability
def core_folner_ratios(core: FiniteGraphCore) -> List[Fraction]:
    """Ratios of BFS-order vertex prefixes of size at most |V| / 2."""
    order = list(nx.bfs_tree(core.to_networkx(), 0))
    d = core.degree or max(core.degrees())
    ratios = []
    members = set()
    for v in order[: core.num_vertices // 2]:
        members.add(v)
        boundary = sum(1 for u in members for e in core.out_edges[u] if core.directed[e][1] not in members)
        ratios.append(Fraction(boundary, d * len(members)))
    return ratios


def amenability_report(
    graph: Union[SchreierGraph, FiniteGraphCore],
    max_steps: int = 2**10,
    strategies: Sequence[str] = ("balls", "intervals", "greedy"),
    ratio_threshold: float = 0.1,
    radius_threshold: float = 0.95,
) -> AmenabilityReport:
    """Joint Folner/SRW evidence: small ratios must co-occur with r close to 1."""
    notes = [MOHAR_NOTE]
    if isinstance(graph, FiniteGraphCore):
        srw = srw_radius(graph, max_steps)
        ratios = core_folner_ratios(graph)
        best = min(ratios) if ratios else None
        notes.append("finite graph: ratios restricted to |A| <= |V|/2, r = 1")
        consistent = srw.value > radius_threshold
        return AmenabilityReport(
            folner_best=best,
            folner_ratios=ratios,
            srw=srw,
            consistent=consistent,
            verdict="finite" if consistent else "inconsistent",
            notes=notes,
        )

    ratios: List[Fraction] = []
    for strategy in strategies:
        ratios.extend(c.ratio for c in folner_candidates(graph, strategy))
    # ratios first: the walk explores further than the Folner scale
    srw = srw_radius(graph, max_steps)
    best = min(ratios) if ratios else None
    small_ratios = best is not None and best <= ratio_threshold
    radius_one = srw.value >= radius_threshold
    consistent = small_ratios == radius_one
    if not consistent:
        verdict = "inconsistent"
        logger.warning(f"Amenability evidence disagrees: best ratio {best}, r >= {srw.value:.4f}")
    else:
        verdict = "amenable" if small_ratios else "non-amenable"
    return AmenabilityReport(
        folner_best=best,
        folner_ratios=ratios,
        srw=srw,
        consistent=consistent,
        verdict=verdict,
        notes=notes,
    )
