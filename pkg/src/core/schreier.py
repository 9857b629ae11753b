"""
Schreier coset graphs of subgroups of F_k.
Lazily explored quotients of the Cayley tree, ray projections and Folner candidates.
"""

import logging
from fractions import Fraction
from itertools import islice
from typing import Callable, Dict, Hashable, Iterable, Iterator, List, Optional, Tuple, Union

from src.core import words
from src.core.models import (
    EscapeCertificate,
    FolnerCandidate,
    Letter,
    RayProjection,
    RecurrentEvidence,
    SubgroupKind,
    SubgroupSpec,
    Word,
)

logger = logging.getLogger(__name__)

CosetKey = Hashable
StepFn = Callable[[CosetKey, int], CosetKey]


def fold_generators(generators: List[Word]) -> Tuple[Dict[Tuple[int, int], int], int]:
    """Stallings-fold the bouquet of generator loops.

    Returns (transitions, base) where transitions[(vertex, code)] is the target
    of the edge labelled `code` (both orientations present).
    """
    edges: List[Tuple[int, int, int]] = []
    count = 1
    for gen in generators:
        if not gen:
            continue
        current = 0
        for i, code in enumerate(gen):
            target = 0 if i == len(gen) - 1 else count
            if target != 0:
                count += 1
            edges.append((current, code, target))
            current = target

    parent = list(range(count))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    changed = True
    while changed:
        changed = False
        table: Dict[Tuple[int, int], int] = {}
        for u, code, v in edges:
            for src, label, dst in ((find(u), code, find(v)), (find(v), -code, find(u))):
                seen = table.get((src, label))
                if seen is None:
                    table[(src, label)] = dst
                elif seen != dst:
                    parent[find(seen)] = find(dst)
                    changed = True
                    break
            if changed:
                break

    relabel: Dict[int, int] = {}
    base = find(0)
    relabel[base] = 0
    transitions: Dict[Tuple[int, int], int] = {}
    for u, code, v in edges:
        ru, rv = find(u), find(v)
        for r in (ru, rv):
            if r not in relabel:
                relabel[r] = len(relabel)
        transitions[(relabel[ru], code)] = relabel[rv]
        transitions[(relabel[rv], -code)] = relabel[ru]
    return transitions, 0


def _make_step(spec: SubgroupSpec) -> Tuple[CosetKey, StepFn, bool]:
    """Coset normal form for a subgroup kind: (identity key, step, closed-form distance)."""
    if spec.kind == SubgroupKind.KERNEL_Z:
        vectors = spec.weight_vectors()
        zero = tuple(0 for _ in vectors[0])

        def step(key, code):
            w = vectors[abs(code) - 1]
            s = 1 if code > 0 else -1
            return tuple(k + s * x for k, x in zip(key, w))

        return zero, step, False

    if spec.kind == SubgroupKind.KERNEL_CYCLIC:
        m = spec.modulus
        weights = [int(w) for w in spec.weights]

        def step(key, code):
            s = 1 if code > 0 else -1
            return (key + s * weights[abs(code) - 1]) % m

        return 0, step, False

    if spec.kind == SubgroupKind.FINITELY_GENERATED:
        transitions, base = fold_generators([words.parse(g) for g in spec.generators])

        def step(key, code):
            vertex, suffix = key
            if suffix:
                if suffix[-1] == -code:
                    return (vertex, suffix[:-1])
                return (vertex, suffix + (code,))
            target = transitions.get((vertex, code))
            if target is not None:
                return (target, ())
            return (vertex, (code,))

        return (base, ()), step, False

    def step(key, code):
        if key and key[-1] == -code:
            return key[:-1]
        return key + (code,)

    return (), step, True


class SchreierGraph:
    """Right coset graph H\\F_k: vertex Hx, edge Hx -> Hxs for each letter s.

    Vertices are numbered in BFS discovery order from the trivial coset.
    A vertex is interior once all 2k of its half-edges are known.
    """

    def __init__(self, spec: SubgroupSpec, max_vertices: Optional[int] = None) -> None:
        self.spec = spec
        self.rank = spec.rank
        self.degree = 2 * spec.rank
        self.letters = words.alphabet(spec.rank)
        self._slot = {code: i for i, code in enumerate(self.letters)}
        self.max_vertices = max_vertices
        identity, self._step, self._closed_form = _make_step(spec)
        self.keys: List[CosetKey] = []
        self.dist: List[int] = []
        self._index: Dict[CosetKey, int] = {}
        self._adj: Dict[int, Tuple[int, ...]] = {}
        self._layers: List[List[int]] = []
        self.radius = 0
        self.truncated = False
        self.complete = False
        self.base = self._register(identity, 0)

    # Setup API
    def _register(self, key: CosetKey, dist: int) -> int:
        index = len(self.keys)
        self.keys.append(key)
        self.dist.append(dist)
        self._index[key] = index
        while len(self._layers) <= dist:
            self._layers.append([])
        self._layers[dist].append(index)
        return index

    def _budget_left(self) -> bool:
        return self.max_vertices is None or len(self.keys) < self.max_vertices

    def ensure_radius(self, radius: int) -> bool:
        """Explore every coset within `radius` of the base. False if the budget ran out."""
        while self.radius < radius and not self.complete:
            layer = self._layers[self.radius] if self.radius < len(self._layers) else []
            for v in layer:
                if v in self._adj:
                    continue
                nbrs = []
                for code in self.letters:
                    key = self._step(self.keys[v], code)
                    u = self._index.get(key)
                    if u is None:
                        if not self._budget_left():
                            if not self.truncated:
                                logger.warning(
                                    f"Schreier graph truncated at {len(self.keys)} vertices (radius {self.radius})"
                                )
                            self.truncated = True
                            return False
                        u = self._register(key, self.dist[v] + 1)
                    nbrs.append(u)
                self._adj[v] = tuple(nbrs)
            self.radius += 1
            if self.radius >= len(self._layers) or not self._layers[self.radius]:
                self.complete = True
                logger.info(f"Schreier graph is finite with {len(self.keys)} vertices")
        return True

    # Views / Queries
    def vertex_count(self) -> int:
        return len(self.keys)

    def is_interior(self, v: int) -> bool:
        return v in self._adj

    def interior_vertices(self) -> List[int]:
        return [v for v in range(len(self.keys)) if v in self._adj]

    def slot(self, code: int) -> int:
        return self._slot[code]

    def neighbors(self, v: int) -> Optional[Tuple[int, ...]]:
        """The 2k neighbours of v in letter order (a loop appears twice), extending on demand."""
        if v in self._adj:
            return self._adj[v]
        if self._closed_form:
            nbrs = []
            for code in self.letters:
                key = self._step(self.keys[v], code)
                u = self._index.get(key)
                if u is None:
                    if not self._budget_left():
                        self.truncated = True
                        return None
                    u = self._register(key, len(key))
                nbrs.append(u)
            self._adj[v] = tuple(nbrs)
            return self._adj[v]
        if not self.ensure_radius(self.dist[v] + 1):
            return self._adj.get(v)
        return self._adj.get(v)

    def step(self, v: int, code: int) -> Optional[int]:
        nbrs = self.neighbors(v)
        return None if nbrs is None else nbrs[self._slot[code]]

    def vertex_of(self, word: Iterable[int]) -> Optional[int]:
        v = self.base
        for code in word:
            v = self.step(v, code)
            if v is None:
                return None
        return v

    def edge_rows(self) -> Iterator[Dict[str, int]]:
        """Undirected edges of the explored region, one row per positive half-edge."""
        for v in sorted(self._adj):
            for code in self.letters:
                if code > 0:
                    yield {
                        "src": v,
                        "dst": self._adj[v][self._slot[code]],
                        "generator": code - 1,
                        "sign": 1,
                    }


def build(spec: SubgroupSpec, radius: int, max_vertices: Optional[int] = None) -> SchreierGraph:
    if radius < 0:
        raise ValueError(f"Radius must be nonnegative, got {radius}")
    graph = SchreierGraph(spec, max_vertices=max_vertices)
    graph.ensure_radius(radius)
    logger.info(
        f"Built Schreier graph ({spec.kind.value}) radius {graph.radius}: {graph.vertex_count()} vertices"
    )
    return graph


def distances_from(graph: SchreierGraph, source: int, radius: int) -> Dict[int, int]:
    """Graph distances from another base vertex, up to `radius`."""
    seen = {source: 0}
    frontier = [source]
    for r in range(radius):
        nxt = []
        for v in frontier:
            nbrs = graph.neighbors(v)
            if nbrs is None:
                continue
            for u in nbrs:
                if u not in seen:
                    seen[u] = r + 1
                    nxt.append(u)
        frontier = nxt
    return seen


# Rays
def project_ray(
    word_stream: Iterable[Union[Letter, int]], graph: SchreierGraph, length: Optional[int] = None
) -> RayProjection:
    """Follow a reduced letter stream from the base coset; the profile excludes the base."""
    stream = islice(word_stream, length) if length is not None else word_stream
    labels: List[int] = []
    path: List[int] = []
    profile: List[int] = []
    v = graph.base
    for letter in stream:
        code = words.letter_code(letter)
        if labels and labels[-1] == -code:
            raise ValueError("ray is not freely reduced")
        nxt = graph.step(v, code)
        if nxt is None:
            logger.warning(f"Ray projection stopped at step {len(labels)}: graph budget exhausted")
            break
        v = nxt
        labels.append(code)
        path.append(v)
        profile.append(graph.dist[v])
    return RayProjection(labels=tuple(labels), vertex_path=path, distance_profile=profile)


def lift(projection: RayProjection) -> Word:
    """Label word of a projected path; its lift from the identity in the tree."""
    return tuple(projection.labels)


def classify_ray(
    proj: RayProjection, window: int, bound: int
) -> Union[EscapeCertificate, RecurrentEvidence]:
    """Escape certificate when the last `window` steps all stay above `bound`."""
    profile = proj.distance_profile
    horizon = len(profile)
    if horizon <= window:
        raise ValueError("insufficient horizon")
    returns = tuple(i for i, d in enumerate(profile) if d <= bound)
    certified = returns[-1] + 1 if returns else 0
    if horizon - certified >= window:
        return EscapeCertificate(certified_index=certified, bound=bound, horizon=horizon)
    return RecurrentEvidence(returns=returns, bound=bound, horizon=horizon)


# Folner sets
def _added_boundary(graph: SchreierGraph, members: set, v: int) -> int:
    nbrs = graph.neighbors(v)
    outside = sum(1 for u in nbrs if u not in members and u != v)
    inside = sum(1 for u in nbrs if u in members)
    return outside - inside


def _candidate(members: set, boundary: int, degree: int) -> FolnerCandidate:
    return FolnerCandidate(
        vertices=frozenset(members),
        boundary=boundary,
        ratio=Fraction(boundary, degree * len(members)),
    )


def folner_candidates(
    graph: SchreierGraph, strategy: str = "balls", max_size: Optional[int] = None
) -> List[FolnerCandidate]:
    """Candidate Folner sets with exact isoperimetric ratios |dA| / (d |A|).

    Only interior vertices are used, so every boundary count is exact. On a
    finite graph candidates stop at half the vertex count.
    """
    interior = graph.interior_vertices()
    cap = len(interior) if max_size is None else min(max_size, len(interior))
    if graph.complete:
        cap = min(cap, graph.vertex_count() // 2)
    candidates: List[FolnerCandidate] = []
    if cap < 1:
        return candidates

    if strategy == "balls":
        interior_set = set(interior)
        for r in range(graph.radius):
            ball = [v for v in range(graph.vertex_count()) if graph.dist[v] <= r]
            if len(ball) > cap or not all(v in interior_set for v in ball):
                break
            members: set = set()
            boundary = 0
            for v in ball:
                boundary += _added_boundary(graph, members, v)
                members.add(v)
            candidates.append(_candidate(members, boundary, graph.degree))
        return candidates

    if strategy == "intervals":
        members = set()
        boundary = 0
        for v in interior[:cap]:
            boundary += _added_boundary(graph, members, v)
            members.add(v)
            candidates.append(_candidate(members, boundary, graph.degree))
        return candidates

    if strategy == "greedy":
        interior_set = set(interior)
        members = {graph.base}
        boundary = _added_boundary(graph, set(), graph.base)
        candidates.append(_candidate(members, boundary, graph.degree))
        while len(members) < cap:
            frontier = sorted(
                {u for v in members for u in graph.neighbors(v) if u not in members and u in interior_set}
            )
            if not frontier:
                break
            best = min(frontier, key=lambda u: (_added_boundary(graph, members, u), u))
            boundary += _added_boundary(graph, members, best)
            members.add(best)
            candidates.append(_candidate(members, boundary, graph.degree))
        return candidates

    raise ValueError(f"Unknown Folner strategy '{strategy}'")
