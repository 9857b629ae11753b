"""
Myrberg construction in the free group.
Loxodromic streams as bridges, separator triples, the interleaved words
a_n f_n b_n h_n and finite-horizon Myrberg certificates.
"""

import logging
import math
import random
from fractions import Fraction
from itertools import islice
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from src.core import words
from src.core.arcs import separator_tau
from src.core.models import (
    ConstructionError,
    GrowthEstimate,
    MyrbergCertificate,
    MyrbergStage,
    MyrbergWitness,
    QRTree,
    SeparatorTriple,
    StageClass,
    StageWitness,
    Word,
)
from src.core.qrtree import Schedule, build_tree, growth_rate, root_path, series_growth

logger = logging.getLogger(__name__)

SEPARATOR_CORES = ("ab", "aB", "aab")
# (L_{m+1} + Delta) * m <= CUMULATIVE_SLACK * sum of the first m blocks
CUMULATIVE_SLACK = 4
# shortest first stage; from there on log |A_n| / L_n >= log 3 - 0.5
L_MIN = 13


# Stream
def loxodromic_stream(rank: int = 2) -> Iterator[Word]:
    """Every nontrivial reduced word, powers included, once and in length-lex order."""
    return words.iter_length_lex(rank, 1)


def stream_index(word: Sequence[int], rank: int = 2) -> int:
    """1-based position of a nontrivial reduced word in loxodromic_stream(rank)."""
    word = tuple(word)
    if not word or not words.is_reduced(word):
        raise ValueError(f"'{words.format_word(word)}' is not a nontrivial reduced word")
    letters = words.alphabet(rank)
    position = sum(words.sphere_size(rank, n) for n in range(1, len(word)))
    for i, code in enumerate(word):
        allowed = [c for c in letters if i == 0 or c != -word[i - 1]]
        if code not in allowed:
            raise ValueError(f"Letter code {code} outside rank {rank}")
        position += allowed.index(code) * (2 * rank - 1) ** (len(word) - i - 1)
    return position + 1


# Separators
def separator_triple(rank: int = 2, min_length: int = 2) -> SeparatorTriple:
    """Powers of ab, aB, aab with every member at least `min_length` long."""
    if rank < 2:
        raise ValueError(f"Separator triples need rank >= 2, got {rank}")
    F = []
    for text in SEPARATOR_CORES:
        core = words.parse(text)
        F.append(words.power(core, max(1, -(-min_length // len(core)))))
    for i in range(len(F)):
        for j in range(i + 1, len(F)):
            if not words.independent(F[i], F[j]):
                raise ConstructionError(f"Separators {i} and {j} share an axis")
    return SeparatorTriple(F=F, tau=separator_tau(F))


def _excluded(f: Word, w: Word, tau: int) -> bool:
    """The projection of [o, w o] onto the axis of f is longer than tau."""
    return words.projection_diameter(words.axis_of(f), ((), w)) > tau


def choose_subfamily(
    A_tilde: Sequence[Word],
    b: Word,
    F: Sequence[Word],
    tau: Optional[int] = None,
    weights: Optional[Sequence[int]] = None,
) -> Tuple[List[Word], Word]:
    """Largest A in A_tilde and f in F with a.f and f.b both cancelling at most tau.

    Each a and b rule out at most one member of F, so the winner keeps a third.
    With `weights`, each element stands for that many members sharing its last
    tau + 1 letters and sizes are weighted.
    """
    tau = separator_tau(F) if tau is None else tau
    weights = [1] * len(A_tilde) if weights is None else list(weights)
    if len(weights) != len(A_tilde):
        raise ValueError("One weight per element")
    total = sum(weights)
    best_f: Optional[Word] = None
    best: List[Word] = []
    best_size = 0
    for f in F:
        if _excluded(f, b, tau):
            continue
        kept = [(a, w) for a, w in zip(A_tilde, weights) if not _excluded(f, words.inverse(a), tau)]
        size = sum(w for _, w in kept)
        if best_f is None or size > best_size:
            best_f, best, best_size = f, [a for a, _ in kept], size
    if best_f is None or 3 * best_size < total:
        raise ConstructionError(
            f"Pigeonhole failed for b={words.format_word(b)}: kept {best_size} of {total}"
        )
    return best, best_f


# Stages
def bridge_power(b: Word, tau: int) -> Word:
    """Smallest power of b whose axis run survives tau cancellation at both ends
    with at least a period and |b| - 2 tau letters left."""
    axis = words.axis_of(b)
    period = len(axis.cyclic_core)
    need = max(period + 2 * tau, 2 * len(axis.conjugator) + period)
    return words.power(b, -(-need // period))


def _compose(a: Word, f: Word, b_power: Word, h: Word, b: Word) -> Tuple[Word, Tuple[int, int]]:
    ledger = words.concat_ledger([a, f, b_power, h])
    if not ledger.cascade_free:
        raise ConstructionError(f"Piece {words.format_word(a)} cascades through its separators")
    c1, c2, c3 = ledger.cancellations
    start = (len(a) - c1) + (len(f) - c1 - c2)
    axis = words.axis_of(b)
    run_start = len(axis.conjugator)
    run_end = len(b_power) - len(axis.conjugator)
    lo = max(run_start, c2)
    hi = min(run_end, len(b_power) - c3)
    return ledger.word, (start + lo - c2, start + hi - c2)


def _tail(p: Word, length: int, rank: int) -> Word:
    """The first letter of the alphabet that does not backtrack after p, repeated."""
    x = next(c for c in words.alphabet(rank) if c != -p[-1])
    return (x,) * length


def _class_representative(rank: int, q: int, key: Word, last: int) -> Optional[Word]:
    return next((p for p in words.iter_words(rank, q, prefix=key) if p[-1] == last), None)


def _stage_classes(rank: int, L: int, delta: int, R: int, tau: int) -> List[Tuple[Word, int, int, Word]]:
    """(key, last letter, count, representative member) for every nonempty class.

    Members are p . x^(L - q) over all reduced p of length q = L - delta - R, so
    distinct members share at most q - 1 letters and stay 2 delta + 2R apart.
    Junctions read only the first tau + 1 and last tau + 1 letters of a member,
    which the class fixes.
    """
    q = L - delta - R
    if q < 1 or L - q < tau + 1:
        raise ValueError(f"Stage L={L}: no room for a free prefix and a tail of {tau + 1} letters")
    classes = []
    for key in words.iter_words(rank, min(q, tau + 1)):
        for last in words.alphabet(rank):
            count = words.count_words(rank, q, prefix=key, last_letters=[last])
            if count:
                p = _class_representative(rank, q, key, last)
                classes.append((key, last, count, p + _tail(p, L - q, rank)))
    return classes


def stage_members(record: MyrbergStage) -> Iterator[Tuple[Word, Word, Tuple[int, int]]]:
    """Every (a, piece, axis span) of a stage, class by class."""
    tail_length = record.L - record.q
    for cls in record.classes:
        for p in words.iter_words(record.rank, record.q, prefix=cls.key):
            if p[-1] != cls.last:
                continue
            a = p + _tail(p, tail_length, record.rank)
            piece, span = _compose(a, record.f, record.bridge_power, record.h, record.bridge)
            yield a, piece, span


def draw_member(record: MyrbergStage, rng: random.Random) -> Tuple[Word, Word, Tuple[int, int]]:
    """A uniform random (a, piece, axis span) of the stage, without enumerating it."""
    r = rng.randrange(record.size)
    for cls in record.classes:
        if r < cls.count:
            break
        r -= cls.count
    letters = words.alphabet(record.rank)
    while True:
        p = list(cls.key)
        while len(p) < record.q:
            p.append(rng.choice([c for c in letters if c != -p[-1]]))
        if p[-1] == cls.last:
            break
    a = tuple(p) + _tail(tuple(p), record.L - record.q, record.rank)
    piece, span = _compose(a, record.f, record.bridge_power, record.h, record.bridge)
    return a, piece, span


def myrberg_lengths(bridge_lengths: Sequence[int], L_min: int = L_MIN) -> List[int]:
    """Smallest increasing L_n with |b_n^p| <= L_n / n."""
    L: List[int] = []
    for n, B in enumerate(bridge_lengths, 1):
        L.append(max(L_min, n * B, L[-1] + 1 if L else 0))
    return L


def _witnesses(L: Sequence[int], delta: int, B: Sequence[int]) -> List[StageWitness]:
    witnesses = []
    total = 0
    for i in range(len(L)):
        n = i + 1
        total += L[i] + delta + B[i]
        ratio = Fraction(B[i], L[i])
        if ratio > Fraction(1, n):
            raise ValueError(f"Stage {n}: bridge length {B[i]} exceeds L_n / n = {L[i]}/{n}")
        lhs = rhs = None
        if i + 1 < len(L):
            lhs = L[i + 1] + delta
            rhs = Fraction(CUMULATIVE_SLACK * total, n)
            if lhs > rhs:
                raise ValueError(f"Stage {n}: L_(n+1) + delta = {lhs} exceeds {float(rhs):.1f}")
        witnesses.append(
            StageWitness(
                stage=n,
                k_bridge=1,
                k_cumulative=1 if lhs is not None else 0,
                bridge_ratio=ratio,
                cumulative_lhs=lhs,
                cumulative_rhs=rhs,
            )
        )
    return witnesses


def build_myrberg_schedule(
    stages: int,
    L_sequence: Optional[Sequence[int]] = None,
    stream: Optional[Iterable[Word]] = None,
    F: Optional[Sequence[Word]] = None,
    rank: int = 2,
    delta: int = 1,
    L_min: int = L_MIN,
) -> Tuple[Schedule, List[MyrbergStage]]:
    """Stages a_n f_n b_n^p h_n with K_n = 1 over the first `stages` stream elements.

    A_n is counted class by class and never enumerated here; the schedule
    materializes a stage only when the tree reaches it within budget. The
    scheduled rate is omega_n = log |A_n| / L_n.
    """
    if F is None:
        tau = separator_triple(rank).tau
        F = separator_triple(rank, 2 * tau + 1).F
    F = [tuple(f) for f in F]
    tau = separator_tau(F)
    if min(len(f) for f in F) < 2 * tau + 1:
        raise ValueError(f"Separators must be at least {2 * tau + 1} letters long")
    R = 2 * tau + 1
    bridges = list(islice(stream if stream is not None else loxodromic_stream(rank), stages))
    if len(bridges) < stages:
        raise ValueError(f"Stream ended after {len(bridges)} elements")
    powers = [bridge_power(b, tau) for b in bridges]
    L = list(L_sequence) if L_sequence is not None else myrberg_lengths([len(p) for p in powers], L_min)
    if len(L) < stages:
        raise ValueError(f"Need {stages} stage lengths, got {len(L)}")
    L = L[:stages]
    if any(L[i + 1] <= L[i] for i in range(len(L) - 1)):
        raise ValueError("L_sequence must be strictly increasing")
    for n, l in enumerate(L, 1):
        if l < delta + R + 1:
            raise ValueError(f"Stage {n}: L = {l} leaves no room for separation {R}")
    witnesses = _witnesses(L, delta, [len(p) for p in powers])

    tables = [_stage_classes(rank, L[i], delta, R, tau) for i in range(stages)]
    records: List[MyrbergStage] = []
    h_prev: Optional[Word] = None
    for i in range(stages):
        pool = tables[i]
        if h_prev is not None:
            pool = [c for c in pool if words.cancellation(h_prev, c[3]) <= tau]
        total = sum(c[2] for c in pool)
        reps = [c[3] for c in pool]
        kept, f = choose_subfamily(reps, powers[i], F, tau, weights=[c[2] for c in pool])
        kept_set = set(kept)
        options = [h for h in F if words.cancellation(powers[i], h) <= tau]
        if not options:
            raise ConstructionError(f"No separator follows {words.format_word(powers[i])}")
        upcoming = tables[i + 1] if i + 1 < stages else []
        h = max(options, key=lambda x: sum(c[2] for c in upcoming if words.cancellation(x, c[3]) <= tau))
        classes = []
        for key, last, count, rep in pool:
            if rep not in kept_set:
                continue
            piece, span = _compose(rep, f, powers[i], h, bridges[i])
            classes.append(StageClass(key=key, last=last, count=count, length=len(piece), span=span))
        record = MyrbergStage(
            index=i + 1,
            L=L[i],
            rank=rank,
            q=L[i] - delta - R,
            size=sum(c.count for c in classes),
            candidates=total,
            f=f,
            bridge=bridges[i],
            bridge_power=powers[i],
            h=h,
            classes=classes,
        )
        records.append(record)
        logger.info(f"Myrberg stage {i + 1}: b={words.format_word(bridges[i])}, |A|={record.size} of {total}")
        h_prev = h

    omegas = [math.log(r.size) / r.L for r in records]

    def source(n: int, L_n: int, delta_n: int) -> List[Word]:
        return [piece for _, piece, _ in stage_members(records[n - 1])]

    schedule = Schedule(
        L, [delta] * stages, [1] * stages, [()] * stages, omegas, tau, R, witnesses, source=source
    )
    for i, record in enumerate(records):
        counts: Dict[int, int] = {}
        for cls in record.classes:
            counts[cls.length] = counts.get(cls.length, 0) + cls.count
        schedule.set_counts(i, counts)
    return schedule, records


def build_myrberg_tree(
    stages: int, node_budget: int = 1_000_000, depth_budget: Optional[int] = None, **kwargs
) -> Tuple[QRTree, Schedule, List[MyrbergStage]]:
    schedule, records = build_myrberg_schedule(stages, **kwargs)
    tree = build_tree(schedule, depth_budget=depth_budget, node_budget=node_budget)
    return tree, schedule, records


# Rays
def _place(chosen: Iterable[Tuple[Word, Tuple[int, int]]]) -> Tuple[Word, List[Tuple[int, int]]]:
    """Concatenate pieces and carry each axis span into ray coordinates."""
    ray: Word = ()
    positions = []
    for piece, (start, end) in chosen:
        c = words.cancellation(ray, piece)
        if c > start:
            raise ConstructionError("Junction cancellation reaches a bridge run")
        offset = len(ray) - 2 * c
        ray = words.multiply(ray, piece)
        positions.append((offset + start, offset + end))
    return ray, positions


def sample_family_rays(
    records: Sequence[MyrbergStage], count: int, seed: int = 0
) -> List[Tuple[Word, List[Tuple[int, int]]]]:
    """Uniform random root-to-leaf paths through every stage, with bridge positions."""
    rng = random.Random(seed)
    rays = []
    for _ in range(count):
        chosen = []
        for record in records:
            _, piece, span = draw_member(record, rng)
            chosen.append((piece, span))
        rays.append(_place(chosen))
    return rays


def tree_ray(
    tree: QRTree, leaf: int, records: Sequence[MyrbergStage]
) -> Tuple[Word, List[Tuple[int, int]]]:
    """The ray of a tree leaf with the bridge positions of its stages."""
    spans = [{cls.length: cls.span for cls in record.classes} for record in records]
    chain = root_path(tree, leaf)[1:]
    return _place((tree.pieces[v], spans[tree.stages[v] - 1][len(tree.pieces[v])]) for v in chain)


# Certificates
def _axis_periods(b: Word) -> Tuple[Word, Word]:
    core = words.axis_of(b).cyclic_core
    return core, words.inverse(core)


def _longest_axis_run(ray: Word, b: Word) -> Tuple[int, Optional[int]]:
    """Longest stretch of the ray along a translate of the axis of b."""
    best, where = 0, None
    for period in _axis_periods(b):
        m = len(period)
        for r in range(m):
            run = 0
            for p, code in enumerate(ray):
                if code == period[(p + r) % m]:
                    run += 1
                    if run > best:
                        best, where = run, p - run + 1
                else:
                    run = 0
    return best, where


def _is_axis_window(segment: Word, b: Word) -> bool:
    for period in _axis_periods(b):
        m = len(period)
        if any(all(c == period[(j + r) % m] for j, c in enumerate(segment)) for r in range(m)):
            return True
    return False


def myrberg_certificate(
    ray: Sequence[int],
    stream_prefix: Sequence[Word],
    R: int,
    positions: Optional[Sequence[Tuple[int, int]]] = None,
) -> MyrbergCertificate:
    """For each b_i, a translate of Ax(b_i) whose R-neighbourhood meets the ray in
    diameter run + 2R, with run at least max(period, |b_i| - 2R)."""
    ray = tuple(ray)
    stream_prefix = [tuple(b) for b in stream_prefix]
    if positions is not None and len(positions) < len(stream_prefix):
        raise ValueError("insufficient horizon")
    required = [max(len(words.axis_of(b).cyclic_core), len(b) - 2 * R) for b in stream_prefix]
    if required and len(ray) < max(required):
        raise ValueError("insufficient horizon")
    witnesses = []
    for i, (b, need) in enumerate(zip(stream_prefix, required), 1):
        run, where = _longest_axis_run(ray, b)
        witnesses.append(
            MyrbergWitness(
                b=b,
                index=i,
                witness_position=where,
                diameter=run + 2 * R,
                required=need,
                passed=run >= need,
            )
        )
    positional = None
    if positions is not None:
        positional = all(
            end - start >= need and _is_axis_window(ray[start:end], b)
            for b, need, (start, end) in zip(stream_prefix, required, positions)
        )
    passed = all(w.passed for w in witnesses) and positional is not False
    if not passed:
        failed = [words.format_word(w.b) for w in witnesses if not w.passed]
        logger.warning(f"Myrberg certificate failed for {failed or 'stage positions'}")
    return MyrbergCertificate(
        witnesses=witnesses, R=R, horizon=len(stream_prefix), passed=passed, positional=positional
    )


def myrberg_growth_check(
    tree: QRTree, schedule: Schedule, tol: float = 0.1
) -> Tuple[GrowthEstimate, GrowthEstimate, bool]:
    """Growth of the built tree and of the whole schedule from its stage counts.

    The schedule bracket must not fall below the weakest scheduled rate by more than tol.
    """
    built = growth_rate(tree, schedule)
    series = series_growth(schedule)
    ok = series.bracket[0] >= min(schedule.omegas) - tol
    if not ok:
        logger.warning(f"Growth bracket {series.bracket} below omega floor {min(schedule.omegas):.3f}")
    return built, series, ok
