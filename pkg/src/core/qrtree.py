"""
Quasi-radial trees in the free group.
Schedules of annular sets, repetitions and bridges, the tree of admissible
words they generate, its growth bracket and the escaping construction.
"""

import logging
import math
from fractions import Fraction
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from src.core import words
from src.core.models import (
    AnnularSet,
    AuditReport,
    ConstructionError,
    EscapeCertificate,
    GrowthEstimate,
    QRTree,
    StageWitness,
    StraightnessReport,
    SubgroupKind,
    SubgroupSpec,
    Word,
)
from src.core.schreier import SchreierGraph, classify_ray, project_ray

logger = logging.getLogger(__name__)

# (stage number, L_n, Delta_n) -> candidate annular elements
ElementSource = Callable[[int, int, int], Sequence[Word]]
# (stage number, L_n, Delta_n) -> {element length: how many}, exact for the separated A_n
StageCounter = Callable[[int, int, int], Dict[int, int]]


# Selection and straightness
def select_separated(A: Union[AnnularSet, Sequence[Word]], sep: int) -> List[Word]:
    """Greedy maximal subset whose elements are pairwise more than `sep` apart.

    Two words closer than `sep` share a prefix of length at least
    (2 * shortest - sep) / 2, so candidates are only compared within buckets
    of that prefix.
    """
    elements = list(A.elements if isinstance(A, AnnularSet) else A)
    if sep < 0:
        raise ValueError(f"Separation must be non-negative, got {sep}")
    if sep == 0 or len(elements) <= 1:
        return elements
    shortest = min(len(w) for w in elements)
    depth = max(0, -(-(2 * shortest - sep) // 2))
    buckets: Dict[Word, List[Word]] = {}
    chosen: List[Word] = []
    for w in elements:
        bucket = buckets.setdefault(w[:depth], [])
        if all(len(w) + len(v) - 2 * words.gromov_product(w, v) > sep for v in bucket):
            bucket.append(w)
            chosen.append(w)
    return chosen


def max_junction(left: Sequence[Word], right: Sequence[Word]) -> Tuple[int, Optional[Tuple[Word, Word]]]:
    """Largest cancellation(x, y) over x in left, y in right, with a pair realizing it.

    cancellation(x, y) is the common prefix of x^-1 and y; in a sorted merge the
    longest cross prefix is always found between neighbours.
    """
    tagged = sorted(
        [(words.inverse(x), 0, x) for x in left] + [(y, 1, y) for y in right]
    )
    worst, pair = 0, None
    for (k1, t1, w1), (k2, t2, w2) in zip(tagged, tagged[1:]):
        if t1 == t2:
            continue
        common = words.gromov_product(k1, k2)
        if pair is None or common > worst:
            worst = common
            pair = (w1, w2) if t1 == 0 else (w2, w1)
    return worst, pair


def check_straightness(
    A: Sequence[Word], b_prev: Word = (), b_next: Word = (), tau: int = 0, repeated: bool = True
) -> StraightnessReport:
    """Junction conditions for a block A^K between bridges b_prev and b_next.

    With `repeated` false (K = 1) elements of A never meet each other.
    """
    A = list(A)
    worst, offender = max_junction(A, A) if repeated else (0, None)
    for left, right in (([b_prev], A), (A, [b_next])):
        if left == [()] or right == [()]:
            continue
        w, pair = max_junction(left, right)
        if w > worst:
            worst, offender = w, pair
    ok = worst <= tau
    return StraightnessReport(ok=ok, worst=worst, offender=None if ok else offender)


# Schedules
class Schedule:
    """Stages (L_n, Delta_n, A_n, K_n, b_n, omega_n) with straightness tau and separation R.

    Stage elements come from `source` and are materialized on first use, then
    separated and checked against L2 and the junction conditions.
    """

    def __init__(
        self,
        L: Sequence[int],
        deltas: Sequence[int],
        K: Sequence[int],
        bridges: Sequence[Word],
        omegas: Sequence[float],
        tau: int,
        R: int,
        witnesses: Sequence[StageWitness] = (),
        source: Optional[ElementSource] = None,
        prefix: Word = (),
        counter: Optional[StageCounter] = None,
    ) -> None:
        self.L = list(L)
        self.deltas = list(deltas)
        self.K = list(K)
        self.bridges = [tuple(b) for b in bridges]
        self.omegas = list(omegas)
        self.tau = tau
        self.R = R
        self.witnesses = list(witnesses)
        self.prefix = tuple(prefix)
        self.axis_distances: Optional[List[int]] = None
        self._source = source
        self._counter = counter
        self._elements: Dict[int, List[Word]] = {}
        self._counts: Dict[int, Dict[int, int]] = {}

    def __len__(self) -> int:
        return len(self.L)

    def separation(self, i: int) -> int:
        return 2 * self.deltas[i] + 2 * self.R

    def is_materialized(self, i: int) -> bool:
        return i in self._elements

    def length_counts(self, i: int) -> Optional[Dict[int, int]]:
        """{length: count} of A_n without materializing it, or None when unknown."""
        if i in self._elements:
            counts: Dict[int, int] = {}
            for a in self._elements[i]:
                counts[len(a)] = counts.get(len(a), 0) + 1
            return counts
        if i not in self._counts and self._counter is not None:
            self.set_counts(i, self._counter(i + 1, self.L[i], self.deltas[i]))
        return self._counts.get(i)

    def set_counts(self, i: int, counts: Dict[int, int]) -> None:
        counts = {int(k): int(v) for k, v in counts.items() if v > 0}
        total = sum(counts.values())
        if total == 0:
            raise ValueError(f"Stage {i + 1}: no annular elements")
        if math.log(total) < self.L[i] * self.omegas[i] - 1e-9:
            raise ValueError(f"Stage {i + 1}: |A_n| = {total} is below e^(L omega)")
        self._counts[i] = counts

    def size(self, i: int) -> Optional[int]:
        counts = self.length_counts(i)
        return None if counts is None else sum(counts.values())

    def size_lower_bound(self, i: int) -> int:
        """|A_n| if known, otherwise the L2 guarantee ceil(e^(L omega))."""
        known = self.size(i)
        if known is not None:
            return known
        return max(1, math.ceil(math.exp(self.L[i] * self.omegas[i]) - 1e-9))

    def set_elements(self, i: int, elements: Sequence[Word]) -> None:
        self._elements[i] = self._validate(i, list(elements))

    def elements(self, i: int) -> List[Word]:
        if i not in self._elements:
            if self._source is None:
                raise ValueError(f"Stage {i + 1} has no element source")
            raw = self._source(i + 1, self.L[i], self.deltas[i])
            selected = select_separated(raw, self.separation(i))
            logger.info(f"Stage {i + 1}: {len(selected)} of {len(raw)} annular elements kept")
            if i in self._counts and len(selected) != sum(self._counts[i].values()):
                raise ConstructionError(
                    f"Stage {i + 1}: counted {sum(self._counts[i].values())} elements, built {len(selected)}"
                )
            self._elements[i] = self._validate(i, selected)
        return self._elements[i]

    def stage_rows(self) -> List[Dict[str, object]]:
        rows = []
        for i in range(len(self)):
            known = sum(self._counts[i].values()) if i in self._counts else None
            row: Dict[str, object] = {
                "stage": i + 1,
                "L": self.L[i],
                "delta": self.deltas[i],
                "K": self.K[i],
                "bridge": words.format_word(self.bridges[i]),
                "B": len(self.bridges[i]),
                "omega": self.omegas[i],
                "size": len(self._elements[i]) if i in self._elements else known,
            }
            if self.axis_distances is not None:
                row["W_hat"] = self.axis_distances[i]
                row["escape_margin"] = self.axis_distances[i] - self.L[i] - self.deltas[i]
            rows.append(row)
        return rows

    def to_dict(self) -> Dict[str, object]:
        return {
            "tau": self.tau,
            "R": self.R,
            "prefix": words.format_word(self.prefix),
            "stages": self.stage_rows(),
            "witnesses": [
                {
                    "stage": w.stage,
                    "k_bridge": w.k_bridge,
                    "k_cumulative": w.k_cumulative,
                    "bridge_ratio": str(w.bridge_ratio),
                    "cumulative_lhs": w.cumulative_lhs,
                    "cumulative_rhs": None if w.cumulative_rhs is None else str(w.cumulative_rhs),
                }
                for w in self.witnesses
            ],
        }

    # Internals
    def _validate(self, i: int, elements: List[Word]) -> List[Word]:
        n = i + 1
        if not elements:
            raise ValueError(f"Stage {n}: no annular elements")
        if math.log(len(elements)) < self.L[i] * self.omegas[i] - 1e-9:
            raise ValueError(
                f"Stage {n}: |A_n| = {len(elements)} is below e^(L omega) = "
                f"{math.exp(self.L[i] * self.omegas[i]):.1f}"
            )
        b_prev = self.bridges[i - 1] if i > 0 else self.prefix
        report = check_straightness(elements, b_prev, self.bridges[i], self.tau, repeated=self.K[i] > 1)
        if not report.ok:
            pair = tuple(words.format_word(w) for w in report.offender)
            raise ValueError(f"Stage {n}: junction cancellation {report.worst} > tau at {pair}")
        if i > 0 and not self.bridges[i - 1] and (i - 1) in self._elements:
            worst, pair = max_junction(self._elements[i - 1], elements)
            if worst > self.tau:
                raise ValueError(f"Stage {n}: cancellation {worst} > tau across the stage boundary")
        return elements


def make_schedule(
    L_sequence: Sequence[int],
    bridge_source: Union[Sequence[Word], Callable[[int], Word]],
    omega_targets: Union[float, Sequence[float]],
    tau: int,
    R: Optional[int] = None,
    deltas: Union[int, Sequence[int]] = 1,
    element_source: Optional[ElementSource] = None,
    k_max: int = 10_000,
    materialize: int = 0,
    prefix: Word = (),
    counter: Optional[StageCounter] = None,
) -> Schedule:
    """Choose K_n stage by stage.

    K_n is the smallest integer with B_n / (K_n L_n) <= 1/n that also makes
    (L_{m+1} + Delta_{m+1}) <= (1/m) * sum_{n <= m} (K_n (L_n + Delta_n) + B_n)
    at m = n. Both inequalities are kept as witnesses.
    """
    L = list(L_sequence)
    if not L:
        raise ValueError("L_sequence is empty")
    if any(L[i + 1] <= L[i] for i in range(len(L) - 1)):
        raise ValueError("L_sequence must be strictly increasing")
    count = len(L)
    deltas = [deltas] * count if isinstance(deltas, int) else list(deltas)
    omegas = [float(omega_targets)] * count if isinstance(omega_targets, (int, float)) else list(omega_targets)
    if callable(bridge_source):
        bridges = [tuple(bridge_source(n)) for n in range(1, count + 1)]
    else:
        bridges = [tuple(b) for b in bridge_source][:count]
    if len(deltas) != count or len(omegas) != count or len(bridges) != count:
        raise ValueError(f"Expected {count} deltas, omega targets and bridges")
    for n, (l, d) in enumerate(zip(L, deltas), 1):
        if not 0 <= d < l:
            raise ValueError(f"Stage {n}: need 0 <= Delta < L, got L={l}, Delta={d}")
    if tau > 0 and L[0] < 10 * tau:
        raise ValueError(f"Stage 1: L = {L[0]} is below 10 * tau = {10 * tau}")
    R = 2 * tau + 1 if R is None else R

    K: List[int] = []
    witnesses: List[StageWitness] = []
    total = 0
    for i in range(count):
        n = i + 1
        B = len(bridges[i])
        k_bridge = max(1, -(-n * B // L[i]))
        if i + 1 < count:
            lhs = L[i + 1] + deltas[i + 1]
            need = n * lhs - total - B
            k_cumulative = max(1, -(-need // (L[i] + deltas[i])))
        else:
            lhs = None
            k_cumulative = 0
        k = max(k_bridge, k_cumulative)
        if k > k_max:
            raise ValueError(f"Stage {n}: K_n = {k} exceeds the budget {k_max}")
        total += k * (L[i] + deltas[i]) + B
        K.append(k)
        witnesses.append(
            StageWitness(
                stage=n,
                k_bridge=k_bridge,
                k_cumulative=k_cumulative,
                bridge_ratio=Fraction(B, k * L[i]),
                cumulative_lhs=lhs,
                cumulative_rhs=Fraction(total, n) if lhs is not None else None,
            )
        )
    logger.info(f"Schedule K_n = {K}")
    schedule = Schedule(L, deltas, K, bridges, omegas, tau, R, witnesses, element_source, prefix, counter)
    for i in range(min(materialize, count)):
        schedule.elements(i)
    return schedule


def straight_source(rank: int, first_letters: Sequence[int], last_letters: Sequence[int]) -> ElementSource:
    """Annular elements with prescribed first and last letters (tau = 0 when they never cancel)."""
    last = set(last_letters)

    def source(n: int, L: int, delta: int) -> List[Word]:
        found = []
        for length in range(L - delta, L + delta + 1):
            found.extend(
                w for w in words.iter_words(rank, length, first_letters=first_letters) if w[-1] in last
            )
        return found

    return source


def straight_counter(rank: int, first_letters: Sequence[int], last_letters: Sequence[int]) -> StageCounter:
    """Counts for straight_source. Exact for Delta = 0, R = 1 and one last letter:
    distinct words of one length ending alike are then at least 4 apart."""
    if len(set(last_letters)) != 1:
        raise ValueError("Straight counts need a single last letter")

    def counter(n: int, L: int, delta: int) -> Dict[int, int]:
        if delta != 0:
            raise ValueError(f"Stage {n}: straight counts need Delta = 0, got {delta}")
        return {L: words.count_words(rank, L, first_letters=first_letters, last_letters=last_letters)}

    return counter


def straight_rates(
    rank: int, L_sequence: Sequence[int], first_letters: Sequence[int], last_letters: Sequence[int], delta: int, sep: int
) -> List[float]:
    """omega_n = log |A_n| / L_n, with |A_n| bounded below by the raw count over the sep-ball."""
    rates = []
    for L in L_sequence:
        raw = sum(
            words.count_words(rank, m, first_letters=first_letters, last_letters=last_letters)
            for m in range(L - delta, L + delta + 1)
        )
        kept = raw if delta == 0 and sep <= 2 and len(set(last_letters)) == 1 else raw // words.ball_size(rank, sep)
        rates.append(math.log(max(1, kept)) / L)
    return rates


# Trees
def _plan(schedule: Schedule) -> Iterator[Tuple[int, bool]]:
    """(stage index, is_bridge) for every level after the prefix."""
    for i in range(len(schedule)):
        for _ in range(schedule.K[i]):
            yield i, False
        if schedule.bridges[i]:
            yield i, True


def build_tree(
    schedule: Schedule, depth_budget: Optional[int] = None, node_budget: int = 1_000_000
) -> QRTree:
    """Admissible-word prefixes of the schedule, level by level, within budgets.

    Bridges are their own levels with a single child per node.
    """
    tau = schedule.tau
    tree_words: List[Word] = [()]
    parents = [-1]
    depths = [0]
    stages = [0]
    pieces: List[Word] = [()]
    dist_root = [0]
    path_length = [0]
    levels: List[List[int]] = [[0]]
    index: Dict[Word, int] = {(): 0}
    truncated = False
    completed = 0

    def grow(frontier: List[int], choices: List[Word], stage: int) -> List[int]:
        created = []
        for parent in frontier:
            base = tree_words[parent]
            for piece in choices:
                word = words.multiply(base, piece)
                cancelled = (len(base) + len(piece) - len(word)) // 2
                if cancelled > tau:
                    raise ConstructionError(
                        f"Junction cancellation {cancelled} > tau={tau} at "
                        f"{words.format_word(base)}.{words.format_word(piece)}"
                    )
                node = len(tree_words)
                if word in index:
                    raise ConstructionError(
                        f"Injectivity collision: nodes {index[word]} and {node} "
                        f"both give {words.format_word(word)}"
                    )
                index[word] = node
                tree_words.append(word)
                parents.append(parent)
                depths.append(depths[parent] + 1)
                stages.append(stage)
                pieces.append(piece)
                dist_root.append(len(word))
                path_length.append(path_length[parent] + len(piece))
                created.append(node)
        return created

    plan = list(_plan(schedule))
    if schedule.prefix:
        plan.insert(0, (-1, True))
    finished_in_stage = {i: 0 for i in range(len(schedule))}
    for stage, is_bridge in plan:
        frontier = levels[-1]
        if depth_budget is not None and len(levels) - 1 >= depth_budget:
            truncated = True
            break
        if is_bridge:
            choices = [schedule.prefix if stage < 0 else schedule.bridges[stage]]
        else:
            lower = schedule.size_lower_bound(stage)
            if len(tree_words) + len(frontier) * lower > node_budget:
                truncated = True
                break
            choices = schedule.elements(stage)
        if len(tree_words) + len(frontier) * len(choices) > node_budget:
            truncated = True
            break
        levels.append(grow(frontier, choices, stage + 1))
        logger.info(f"Level {len(levels) - 1} (stage {stage + 1}): {len(levels[-1])} nodes")
        if stage >= 0:
            finished_in_stage[stage] += 1
            target = schedule.K[stage] + (1 if schedule.bridges[stage] else 0)
            if finished_in_stage[stage] == target:
                completed += 1
    if truncated:
        logger.warning(f"Tree truncated at depth {len(levels) - 1} with {len(tree_words)} nodes")
    return QRTree(
        words=tree_words,
        parents=parents,
        depths=depths,
        stages=stages,
        pieces=pieces,
        dist_root=dist_root,
        path_length=path_length,
        levels=levels,
        tau=tau,
        completed_stages=completed,
        truncated=truncated,
    )


def family_rays(tree: QRTree) -> Iterator[Word]:
    """Label words of the root-to-leaf paths ending at the deepest level."""
    for node in tree.levels[-1]:
        yield tree.words[node]


def root_path(tree: QRTree, node: int) -> List[int]:
    path = []
    while node >= 0:
        path.append(node)
        node = tree.parents[node]
    return path[::-1]


def cayley_tree(rank: int, depth: int) -> QRTree:
    """The ball of the Cayley tree as a tree of single-letter pieces."""
    tree_words: List[Word] = [()]
    parents = [-1]
    levels: List[List[int]] = [[0]]
    for _ in range(depth):
        level = []
        for parent in levels[-1]:
            for code in words.alphabet(rank):
                base = tree_words[parent]
                if base and base[-1] == -code:
                    continue
                level.append(len(tree_words))
                tree_words.append(base + (code,))
                parents.append(parent)
        levels.append(level)
    lengths = [len(w) for w in tree_words]
    return QRTree(
        words=tree_words,
        parents=parents,
        depths=lengths,
        stages=lengths,
        pieces=[w[-1:] for w in tree_words],
        dist_root=lengths,
        path_length=lengths,
        levels=levels,
        tau=0,
        completed_stages=depth,
        truncated=False,
    )


# Growth
def _log_level_sum(tree: QRTree, level: int, s: float) -> float:
    d = np.array([tree.dist_root[v] for v in tree.levels[level]], dtype=float)
    return float(logsumexp(-s * d))


def _root(f: Callable[[float], float]) -> float:
    if f(0.0) <= 0:
        return 0.0
    hi = 1.0
    for _ in range(64):
        if f(hi) < 0:
            return float(brentq(f, 0.0, hi, xtol=1e-12))
        hi *= 2
    raise ValueError("Poincare sum does not change regime")


def growth_rate(
    tree: QRTree, schedule: Optional[Schedule] = None, s_grid: Optional[Sequence[float]] = None
) -> GrowthEstimate:
    """Bracket the growth rate of the tree from its deepest level.

    The frontier rate solves sum_{v in level D} e^{-s d(o, v)} = 1; the ratio
    rate equates that sum with the one of the last level having fewer nodes.
    """
    deepest = len(tree.levels) - 1
    frontier = _root(lambda s: _log_level_sum(tree, deepest, s))
    previous = deepest
    while previous > 0 and len(tree.levels[previous]) >= len(tree.levels[deepest]):
        previous -= 1
    if previous == deepest:
        ratio = frontier
    else:
        ratio = _root(
            lambda s: _log_level_sum(tree, deepest, s) - _log_level_sum(tree, previous, s)
        )
    table: List[Dict[str, object]] = []
    if schedule is not None:
        if s_grid is None:
            floor = min(schedule.omegas)
            s_grid = [0.5 * floor, 0.75 * floor, 0.9 * floor]
        for i in range(len(schedule)):
            if not schedule.is_materialized(i):
                continue
            lengths = np.array([len(a) for a in schedule.elements(i)], dtype=float)
            for s in s_grid:
                lhs = schedule.K[i] * float(logsumexp(-s * lengths))
                rhs = s * len(schedule.bridges[i])
                table.append(
                    {"stage": i + 1, "s": s, "log_lhs": lhs, "log_rhs": rhs, "holds": lhs > rhs}
                )
    if tree.completed_stages < 3:
        logger.warning(f"Growth bracket from {tree.completed_stages} completed stages")
    return GrowthEstimate(
        bracket=(min(frontier, ratio), max(frontier, ratio)),
        frontier_rate=frontier,
        ratio_rate=ratio,
        stage_table=table,
        stages_completed=tree.completed_stages,
        precondition_met=tree.completed_stages >= 3,
    )


def _stage_log_sum(counts: Dict[int, int], s: float) -> float:
    lengths = np.array(list(counts), dtype=float)
    weights = np.array(list(counts.values()), dtype=float)
    return float(logsumexp(-s * lengths, b=weights))


def series_growth(
    schedule: Schedule, stages: Optional[int] = None, s_grid: Optional[Sequence[float]] = None
) -> GrowthEstimate:
    """Growth bracket of the full schedule from stage counts, without building the tree.

    Level sums factor stage by stage: after stage N,
    log P(s) = -s |prefix| + sum_{n <= N} (K_n log sum_{a in A_n} e^{-s |a|} - s B_n).
    The frontier rate solves log P(s) = 0; the ratio rate solves the last
    stage's factor = 0. Lengths add, so with tau > 0 both are lower bounds.
    """
    factors: List[Dict[int, int]] = []
    for i in range(len(schedule) if stages is None else min(stages, len(schedule))):
        counts = schedule.length_counts(i)
        if counts is None:
            break
        factors.append(counts)
    if not factors:
        raise ValueError("No stage has known counts")
    last = len(factors) - 1

    def stage_factor(i: int, s: float) -> float:
        return schedule.K[i] * _stage_log_sum(factors[i], s) - s * len(schedule.bridges[i])

    frontier = _root(lambda s: sum(stage_factor(i, s) for i in range(last + 1)) - s * len(schedule.prefix))
    ratio = _root(lambda s: stage_factor(last, s))
    table: List[Dict[str, object]] = []
    for s in s_grid or ():
        for i in range(last + 1):
            lhs = schedule.K[i] * _stage_log_sum(factors[i], s)
            rhs = s * len(schedule.bridges[i])
            table.append({"stage": i + 1, "s": s, "log_lhs": lhs, "log_rhs": rhs, "holds": lhs > rhs})
    logger.info(f"Series growth over {last + 1} stages: frontier {frontier:.4f}, ratio {ratio:.4f}")
    return GrowthEstimate(
        bracket=(min(frontier, ratio), max(frontier, ratio)),
        frontier_rate=frontier,
        ratio_rate=ratio,
        stage_table=table,
        stages_completed=last + 1,
        precondition_met=last + 1 >= 3,
    )


# Audits
def _cylinder_word(tree: QRTree, node: int) -> Word:
    word = tree.words[node]
    return word[: max(0, len(word) - tree.tau)]


def injectivity(tree: QRTree) -> AuditReport:
    seen: Dict[Word, int] = {}
    detail = []
    for node, word in enumerate(tree.words):
        if word in seen:
            detail.append(f"{seen[word]}~{node}:{words.format_word(word)}")
        seen.setdefault(word, node)
    return AuditReport(name="injectivity", checked=len(tree.words), failures=len(detail), detail=detail[:10])


def shadow_laminarity(tree: QRTree, max_depth: int = 6) -> AuditReport:
    """Shadows (cylinders of the node word less its last tau letters) are nested
    exactly along ancestor chains and disjoint otherwise."""
    nodes = [v for v in range(len(tree.words)) if tree.depths[v] <= max_depth]
    by_cylinder: Dict[Word, List[int]] = {}
    for v in nodes:
        by_cylinder.setdefault(_cylinder_word(tree, v), []).append(v)
    detail = []
    checked = 0
    for v in nodes:
        ancestors = set(root_path(tree, v))
        cyl = _cylinder_word(tree, v)
        for u in ancestors:
            checked += 1
            if cyl[: len(_cylinder_word(tree, u))] != _cylinder_word(tree, u):
                detail.append(f"ancestor {u} of {v} not nested")
        for j in range(len(cyl) + 1):
            for u in by_cylinder.get(cyl[:j], ()):
                if u not in ancestors:
                    checked += 1
                    detail.append(f"{u} and {v} nested without ancestry")
    return AuditReport(name="shadow_laminarity", checked=checked, failures=len(detail), detail=detail[:10])


def sibling_separation(tree: QRTree, schedule: Schedule) -> AuditReport:
    """Children of one parent on an annular level are more than 2 Delta_n + 2R apart."""
    children: Dict[int, List[int]] = {}
    for v in range(1, len(tree.words)):
        children.setdefault(tree.parents[v], []).append(v)
    detail = []
    checked = 0
    for parent, kids in children.items():
        stage = tree.stages[kids[0]] - 1
        if stage < 0 or len(kids) < 2:
            continue
        sep = schedule.separation(stage)
        group = [tree.words[v] for v in kids]
        checked += 1
        if len(select_separated(group, sep)) != len(group):
            detail.append(f"children of {parent} closer than {sep}")
    return AuditReport(name="sibling_separation", checked=checked, failures=len(detail), detail=detail[:10])


def quasi_geodesic_ledger(tree: QRTree) -> AuditReport:
    """d(o, v) >= path_length - 2 tau (#junctions) >= (1 - 2 tau / L_min) path_length."""
    L_min = min((len(p) for p in tree.pieces[1:]), default=1)
    detail = []
    for v in range(1, len(tree.words)):
        junctions = tree.depths[v] - 1
        floor = tree.path_length[v] - 2 * tree.tau * junctions
        if tree.dist_root[v] < floor or tree.dist_root[v] < (1 - 2 * tree.tau / L_min) * tree.path_length[v]:
            detail.append(f"node {v}: |w| = {tree.dist_root[v]} below {floor}")
    return AuditReport(
        name="quasi_geodesic_ledger", checked=len(tree.words) - 1, failures=len(detail), detail=detail[:10]
    )


# Escaping construction
def _weight(spec: SubgroupSpec, word: Word) -> Tuple[int, ...]:
    vectors = spec.weight_vectors()
    total = [0] * len(vectors[0])
    for code in word:
        sign = 1 if code > 0 else -1
        for j, x in enumerate(vectors[abs(code) - 1]):
            total[j] += sign * x
    return tuple(total)


def _loop_edges(core: Word) -> Tuple[set, set]:
    """Letters an arc may not start or end with: they would run along the loop."""
    return {core[0], -core[-1]}, {core[-1], -core[0]}


def _arc_source(spec: SubgroupSpec, core: Word, wrap: int) -> ElementSource:
    """Pieces core^wrap . arc . core^wrap with arcs leaving and re-entering the loop off its edges."""
    rank = spec.rank
    zero = tuple(0 for _ in spec.weight_vectors()[0])
    head = words.power(core, wrap)
    banned_first, banned_last = _loop_edges(core)
    first = [c for c in words.alphabet(rank) if c not in banned_first]

    def source(n: int, L: int, delta: int) -> List[Word]:
        found = []
        padding = 2 * len(head)
        for length in range(max(1, L - padding - delta), L - padding + delta + 1):
            for arc in words.iter_words(rank, length, first_letters=first):
                if arc[-1] not in banned_last and _weight(spec, arc) == zero:
                    found.append(head + arc + head)
        return found

    return source


def arc_counts(spec: SubgroupSpec, core: Word, max_length: int) -> List[int]:
    """counts[m] = arcs of length m that _arc_source admits, by a walk over (last letter, weight)."""
    vectors = spec.weight_vectors()
    zero = tuple(0 for _ in vectors[0])
    bounds = [max(abs(v[j]) for v in vectors) for j in range(len(zero))]
    banned_first, banned_last = _loop_edges(core)

    def shifted(weight: Tuple[int, ...], code: int) -> Tuple[int, ...]:
        sign = 1 if code > 0 else -1
        return tuple(w + sign * x for w, x in zip(weight, vectors[abs(code) - 1]))

    def can_return(weight: Tuple[int, ...], steps: int) -> bool:
        return all(abs(w) <= steps * b for w, b in zip(weight, bounds))

    letters = words.alphabet(spec.rank)
    states: Dict[Tuple[int, Tuple[int, ...]], int] = {}
    for c in letters:
        if c not in banned_first:
            key = (c, shifted(zero, c))
            states[key] = states.get(key, 0) + 1
    counts = [0] * (max_length + 1)
    for m in range(1, max_length + 1):
        if m > 1:
            step: Dict[Tuple[int, Tuple[int, ...]], int] = {}
            for (c, weight), n in states.items():
                for d in letters:
                    if d == -c:
                        continue
                    key = (d, shifted(weight, d))
                    if can_return(key[1], max_length - m):
                        step[key] = step.get(key, 0) + n
            states = step
        counts[m] = sum(n for (c, weight), n in states.items() if weight == zero and c not in banned_last)
    return counts


def _arc_counter(table: Sequence[int], padding: int) -> StageCounter:
    """Exact counts of the escaping stages for Delta = 0 and wrap >= 1: distinct pieces of
    one length differ before their closing loop, so they are more than 2 apart."""

    def counter(n: int, L: int, delta: int) -> Dict[int, int]:
        if delta != 0:
            raise ValueError(f"Stage {n}: arc counts are exact only for Delta = 0")
        m = L - padding
        return {L: table[m] if 0 < m < len(table) else 0}

    return counter


def escaping_heights(L_sequence: Sequence[int], delta: int) -> List[int]:
    """Default heights: the least w_n > L_n + Delta that is above w_{n-1} and raises the margin."""
    L = list(L_sequence)
    heights: List[int] = []
    margin = 0
    for i in range(len(L) + 1):
        span = L[min(i, len(L) - 1)] + delta
        w = max(span + 1, heights[-1] + 1 if heights else 0)
        while w - span <= margin:
            w += 1
        heights.append(w)
        margin = w - span
    return heights


def _check_heights(heights: Sequence[int], L: Sequence[int], delta: int) -> None:
    count = len(L)
    if len(heights) < count + 1:
        raise ValueError(f"Need {count + 1} heights for {count} stages, got {len(heights)}")
    margins = [heights[i] - L[i] - delta for i in range(count)]
    if margins[0] < 1:
        raise ValueError(f"Height {heights[0]} does not clear L_1 + Delta = {L[0] + delta}")
    for i in range(1, count):
        if margins[i] <= margins[i - 1]:
            raise ValueError(f"Escape margins must increase strictly, got {margins[i - 1]} then {margins[i]}")
    if any(heights[i + 1] <= heights[i] for i in range(count)):
        raise ValueError("Heights must increase strictly")


def _climb(spec: SubgroupSpec, core: Word) -> int:
    climb = next(
        (i + 1 for i, w in enumerate(spec.weight_vectors()) if any(w) and -(i + 1) not in (core[0], core[-1])),
        None,
    )
    if climb is None:
        raise ValueError("No generator escapes without cancelling into the axis")
    return climb


def _check_escaping_input(spec: SubgroupSpec, h: Word) -> Word:
    if spec.kind == SubgroupKind.KERNEL_CYCLIC:
        raise ValueError("subgroup has finite index")
    if spec.kind != SubgroupKind.KERNEL_Z:
        raise ValueError(f"Escaping construction needs a kernel_z subgroup, got {spec.kind.value}")
    h = words.reduce(h)
    if not h:
        raise ValueError("identity has no axis")
    zero = tuple(0 for _ in spec.weight_vectors()[0])
    if _weight(spec, h) != zero:
        raise ValueError(f"'{words.format_word(h)}' is not in the subgroup")
    return h


def escaping_axes(spec: SubgroupSpec, h: Word, heights: Sequence[int]) -> List[Tuple[Word, int]]:
    """h_n = g_n h g_n^-1 with g_n = x^{w_n}, and the distance W_n of its projected axis from the base."""
    h = _check_escaping_input(spec, h)
    axis = words.axis_of(h)
    climb = _climb(spec, axis.cyclic_core)
    graph = SchreierGraph(spec)
    graph.ensure_radius(max(heights) + 1)
    axes = []
    for w in heights:
        g = words.power((climb,), w)
        axes.append(
            (
                words.multiply(g, h, words.inverse(g)),
                graph.dist[graph.vertex_of(words.multiply(g, axis.conjugator))],
            )
        )
    return axes


def escaping_schedule(
    spec: SubgroupSpec,
    h: Word,
    count: int,
    L_sequence: Optional[Sequence[int]] = None,
    delta: int = 1,
    wrap: int = 4,
    omega_targets: Optional[Sequence[float]] = None,
    heights: Optional[Sequence[int]] = None,
) -> Schedule:
    """Stages on the loops of h_n = g_n h g_n^-1 with g_n = x^{w_n} escaping.

    A_n holds arcs on the projected axis of h_n slid along the loop `wrap`
    times at both ends; bridges are the shortest paths between consecutive
    axes. Heights w_0..w_count default to escaping_heights; given heights must
    keep W_n - L_n - Delta strictly increasing. Default omega_n is log |A_n| / L_n
    from the arc counts, exact for Delta = 0 and bounded below by the raw count
    over the separation ball otherwise.
    """
    h = _check_escaping_input(spec, h)
    L = list(L_sequence) if L_sequence is not None else [16 + 2 * n for n in range(count)]
    if len(L) < count:
        raise ValueError(f"Need {count} stage lengths, got {len(L)}")
    L = L[:count]
    axis = words.axis_of(h)
    core = axis.cyclic_core
    climb = _climb(spec, core)
    heights = list(heights) if heights is not None else escaping_heights(L, delta)
    _check_heights(heights, L, delta)

    padding = 2 * wrap * len(core)
    table = arc_counts(spec, core, max(0, max(L) + delta - padding))
    if omega_targets is not None:
        omegas = list(omega_targets)
    else:
        sep = 2 * delta + 2
        omegas = []
        for l in L:
            raw = sum(table[m] for m in range(max(1, l - padding - delta), l - padding + delta + 1) if m < len(table))
            kept = raw if delta == 0 and wrap >= 1 else raw // words.ball_size(spec.rank, sep)
            omegas.append(math.log(max(1, kept)) / l)
    graph = SchreierGraph(spec)
    graph.ensure_radius(heights[-1] + 1)
    prefix = words.multiply(words.power((climb,), heights[0]), axis.conjugator)
    bridges = [
        words.multiply(
            words.inverse(axis.conjugator), words.power((climb,), heights[i + 1] - heights[i]), axis.conjugator
        )
        for i in range(count)
    ]
    schedule = make_schedule(
        L,
        bridges,
        omegas,
        tau=0,
        deltas=delta,
        element_source=_arc_source(spec, core, wrap),
        prefix=prefix,
        counter=_arc_counter(table, padding) if delta == 0 and wrap >= 1 else None,
    )
    schedule.axis_distances = [
        graph.dist[graph.vertex_of(words.power((climb,), heights[i]))] for i in range(count)
    ]
    logger.info(f"Escaping heights {heights[:count]}")
    return schedule


def escape_audit(
    tree: QRTree, schedule: Schedule, spec: SubgroupSpec
) -> Tuple[AuditReport, List[EscapeCertificate]]:
    """Project every family ray into the Schreier graph and certify escape.

    After the ray enters stage n it never comes back within W_n - L_n - Delta_n
    of the base.
    """
    if schedule.axis_distances is None:
        raise ValueError("Schedule carries no axis distances")
    graph = SchreierGraph(spec)
    graph.ensure_radius(max(schedule.axis_distances) + max(schedule.L) + max(schedule.deltas) + 2)
    floors = [w - l - d for w, l, d in zip(schedule.axis_distances, schedule.L, schedule.deltas)]
    window = 0
    detail = []
    certificates: List[EscapeCertificate] = []
    rays = 0
    for leaf in tree.levels[-1]:
        rays += 1
        chain = root_path(tree, leaf)
        ray = tree.words[leaf]
        proj = project_ray(ray, graph)
        window = len(ray) - len(schedule.prefix)
        verdict = classify_ray(proj, window, floors[0])
        if not isinstance(verdict, EscapeCertificate):
            detail.append(f"ray {leaf} returns within {floors[0]}")
            continue
        certificates.append(verdict)
        # stage n starts where the ray leaves the parent of its first stage-n node
        start = {}
        for node in chain[1:]:
            st = tree.stages[node] - 1
            if st >= 0 and st not in start:
                start[st] = tree.path_length[tree.parents[node]]
        for st, pos in start.items():
            if any(d < floors[st] for d in proj.distance_profile[pos:]):
                detail.append(f"ray {leaf} drops below {floors[st]} after stage {st + 1}")
                break
    report = AuditReport(name="escape", checked=rays, failures=len(detail), detail=detail[:10])
    return report, certificates


def nonconical_family(
    spec: SubgroupSpec,
    h: Word,
    count: int,
    L_sequence: Optional[Sequence[int]] = None,
    delta: int = 1,
    wrap: int = 4,
    node_budget: int = 200_000,
    depth_budget: Optional[int] = None,
    heights: Optional[Sequence[int]] = None,
) -> Dict[str, object]:
    """Escaping schedule, its tree, escape certificates and the growth brackets.

    "series" is the bracket of the whole schedule from its stage counts, None
    when the counts are unknown (Delta > 0).
    """
    schedule = escaping_schedule(spec, h, count, L_sequence, delta, wrap, heights=heights)
    tree = build_tree(schedule, depth_budget=depth_budget, node_budget=node_budget)
    audit, certificates = escape_audit(tree, schedule, spec)
    return {
        "schedule": schedule,
        "tree": tree,
        "escape": audit,
        "certificates": certificates,
        "growth": growth_rate(tree, schedule),
        "series": series_growth(schedule) if schedule.length_counts(0) is not None else None,
    }
