"""
Data models and structures for the quasi-radial tree lab.
Contains the result records and error types shared across the core modules.
"""

from enum import Enum
from fractions import Fraction
from typing import Any, Dict, FrozenSet, List, NamedTuple, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# A reduced word is a tuple of letter codes: generator i is i+1, its inverse -(i+1).
Word = Tuple[int, ...]


class ConstructionError(RuntimeError):
    """A construction produced something it must not (collision, no separator)."""


class ConfigError(ValueError):
    """Invalid experiment configuration; `key` names the offending entry."""

    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"{key}: {message}")
        self.key = key


# Words


class Letter(NamedTuple):
    generator_index: int
    sign: int  # +1 or -1


class Axis(NamedTuple):
    """Axis of a loxodromic word: conjugator . core^Z . conjugator^-1."""

    conjugator: Word
    cyclic_core: Word


class AnnularSet(NamedTuple):
    L: int
    delta: int
    elements: List[Word]  # length-lex order
    truncated: bool


class ConcatLedger(NamedTuple):
    """Junction bookkeeping for a concatenation of reduced pieces."""

    word: Word  # reduced product
    cancellations: List[int]  # one per junction
    cascade_free: bool  # no piece is eaten from both sides


# Schreier graphs


class RayProjection(NamedTuple):
    labels: Word
    vertex_path: List[int]
    distance_profile: List[int]  # base excluded


class EscapeCertificate(NamedTuple):
    certified_index: int  # profile > bound at every index >= this
    bound: int
    horizon: int


class RecurrentEvidence(NamedTuple):
    returns: Tuple[int, ...]  # indices with profile <= bound
    bound: int
    horizon: int


class FolnerCandidate(NamedTuple):
    vertices: FrozenSet[int]
    boundary: int  # boundary edges with multiplicity
    ratio: Fraction  # |dA| / (d |A|)


class SubgroupKind(str, Enum):
    """Subgroup families with an exact coset normal form."""

    KERNEL_Z = "kernel_z"
    KERNEL_CYCLIC = "kernel_cyclic"
    FINITELY_GENERATED = "finitely_generated"
    TRIVIAL = "trivial"


class SubgroupSpec(BaseModel):
    """A subgroup of F_k given as a kernel or by generators."""

    kind: SubgroupKind = Field(..., description="Subgroup family")
    rank: int = Field(default=2, ge=1, description="Rank k of the free group")
    weights: List[Union[int, List[int]]] = Field(
        default_factory=list,
        description="Image of each generator (integers, or vectors for Z^m targets)",
    )
    modulus: Optional[int] = Field(default=None, ge=2, description="Modulus m for kernel_cyclic")
    generators: List[str] = Field(
        default_factory=list, description="ASCII generators for finitely_generated"
    )

    @model_validator(mode="after")
    def _check_variant(self) -> "SubgroupSpec":
        if self.kind in (SubgroupKind.KERNEL_Z, SubgroupKind.KERNEL_CYCLIC):
            if len(self.weights) != self.rank:
                raise ValueError(f"Expected {self.rank} weights, got {len(self.weights)}")
            vectors = [w if isinstance(w, list) else [w] for w in self.weights]
            if len({len(v) for v in vectors}) != 1:
                raise ValueError("Weight vectors must share one dimension")
            if all(x == 0 for v in vectors for x in v):
                raise ValueError("Weights must not all be zero")
            if self.kind == SubgroupKind.KERNEL_CYCLIC:
                if self.modulus is None:
                    raise ValueError("kernel_cyclic needs a modulus")
                if any(isinstance(w, list) for w in self.weights):
                    raise ValueError("kernel_cyclic weights must be integers")
        if self.kind == SubgroupKind.FINITELY_GENERATED and not self.generators:
            raise ValueError("Generator list must be nonempty")
        return self

    def weight_vectors(self) -> List[Tuple[int, ...]]:
        return [tuple(w) if isinstance(w, list) else (w,) for w in self.weights]


# Graph cores


class SpectralEstimate(NamedTuple):
    value: float
    tolerance: float
    iterations: int


class AmenabilityReport(NamedTuple):
    folner_best: Optional[Fraction]  # None when no candidate exists
    folner_ratios: List[Fraction]
    srw: SpectralEstimate
    consistent: bool
    verdict: str  # "amenable", "non-amenable", "finite" or "inconsistent"
    notes: List[str]


# Arcs and double cosets


class ImmersedLoop(NamedTuple):
    """Cyclically non-backtracking loop given by directed edge ids of a core."""

    edges: Tuple[int, ...]


class ArcFamily(NamedTuple):
    gamma: ImmersedLoop
    t: int
    delta: int
    arcs: List[Tuple[int, ...]]  # directed edge sequences
    count: int
    truncated: bool


class ArcGrowthReport(NamedTuple):
    lengths: List[int]
    counts: List[int]  # |Arc(gamma, t, delta)| per t
    rate: float  # least-squares log-count slope
    omega: float
    epsilon: float
    verdict: str  # "pass", "fail" or "inconclusive"
    bracket: Tuple[float, float]  # min/max of count * exp(-omega t)


class DoubleCosetReport(NamedTuple):
    n: int
    delta: int
    annulus_size: int
    distinct: int  # distinct double cosets hit by the separator map
    N: int
    M: int
    max_fiber: int
    histogram: Dict[int, int]  # fiber size -> number of double cosets
    delta0: int  # measured max |d(Ho, f1 g f2 Ko) - |g||
    tau: int
    below_n0: int  # annulus words shorter than the separator threshold
    passes: bool
    truncated: bool


# Quasi-radial trees


class StraightnessReport(NamedTuple):
    ok: bool
    worst: int  # largest junction cancellation seen
    offender: Optional[Tuple[Word, Word]]  # pair realizing `worst` when it exceeds tau


class StageWitness(NamedTuple):
    """Witnessed inequalities behind the choice of K_n."""

    stage: int
    k_bridge: int  # smallest K with B/(K L) <= 1/n
    k_cumulative: int  # smallest K for the cumulative length condition (0 on the last stage)
    bridge_ratio: Fraction  # B/(K L)
    cumulative_lhs: Optional[int]  # L_{m+1} + Delta_{m+1}
    cumulative_rhs: Optional[Fraction]  # (1/m) * sum of completed block lengths


class QRTree(NamedTuple):
    """Rooted tree of admissible words; node 0 is the identity."""

    words: List[Word]
    parents: List[int]  # -1 at the root
    depths: List[int]
    stages: List[int]  # stage index of the piece ending at the node (0 at the root)
    pieces: List[Word]  # label of the edge from the parent
    dist_root: List[int]  # |word| = d(o, node o)
    path_length: List[int]  # sum of piece lengths along the root path
    levels: List[List[int]]  # node ids per depth
    tau: int
    completed_stages: int
    truncated: bool


class GrowthEstimate(NamedTuple):
    bracket: Tuple[float, float]
    frontier_rate: float  # root of P_D(s) = 1
    ratio_rate: float  # root of P_D(s) = P_{D-1}(s)
    stage_table: List[Dict[str, object]]  # per-stage rows: stage, s, lhs, rhs, holds
    stages_completed: int
    precondition_met: bool  # at least three completed stages


class AuditReport(NamedTuple):
    name: str
    checked: int
    failures: int
    detail: List[str]  # first offending cases


# Myrberg construction


class SeparatorTriple(NamedTuple):
    F: List[Word]  # three pairwise independent loxodromics
    tau: int  # largest common prefix among members and among their inverses


class StageClass(NamedTuple):
    """Stage members sharing their first tau + 1 letters and their tail letter."""

    key: Word  # first min(q, tau + 1) letters of the prefix
    last: int  # last letter of the prefix, which fixes the tail
    count: int  # prefixes in the class
    length: int  # |a.f.b^p.h| for every member
    span: Tuple[int, int]  # surviving axis run of b^p, the same for every member


class MyrbergStage(NamedTuple):
    index: int  # stream index of the bridge
    L: int
    rank: int
    q: int  # free prefix length; members are p . x^(L - q)
    size: int  # |A_n| after the junction filter and the pigeonhole
    candidates: int  # |A_tilde| before the pigeonhole
    f: Word
    bridge: Word  # stream element b_n
    bridge_power: Word  # b_n^p placed in the word
    h: Word
    classes: List[StageClass]  # the admitted classes, counts summing to size


class MyrbergWitness(NamedTuple):
    b: Word
    index: int  # stream index
    witness_position: Optional[int]  # start of the longest axis run in the ray
    diameter: int  # run length + 2R
    required: int
    passed: bool


class MyrbergCertificate(NamedTuple):
    witnesses: List[MyrbergWitness]
    R: int
    horizon: int  # number of stream elements checked
    passed: bool
    positional: Optional[bool]  # stage-position audit, when positions are known


# Dimension


class MassDistribution(NamedTuple):
    s: float
    epsilon: float
    masses: List[float]  # nu(node), 1 at the root, children split their parent
    log_masses: List[float]
    exact: Optional[List[Fraction]]  # rational masses for a rational base e^(-s eps)


class BoxCountingEstimate(NamedTuple):
    slope: float  # against log(1/r)
    normalized_slope: float  # slope / epsilon
    residual: float  # RMS residual of the least-squares fit
    points: List[Tuple[float, float]]  # (log(1/r), log N(r))


class DimensionCertificate(NamedTuple):
    s: float
    s_certified: float  # exponent actually certified (rational base in exact mode)
    epsilon: float
    valid: bool
    max_violation: float  # max over nodes of log nu(v) + s eps d(o, v)
    worst_node: int
    depth: int
    exact: bool
    slope: Optional[float]
    residual: Optional[float]
    product_ledger: List[Dict[str, object]]  # stagewise log of (sum e^(-s eps |a|))^K e^(-s eps B)
    stabilization_depth: Optional[int]


# Floyd metric


class WeightedBall(NamedTuple):
    graph: object  # networkx.Graph with "weight" = lambda^d(o, e) on every edge
    lam: float
    radius: int
    basepoint: Word


class FloydDistance(NamedTuple):
    value: float
    truncation_bound: float  # 2 lambda^R / (1 - lambda)
    certified: bool  # both points within R/2 of the basepoint


class ShadowBallReport(NamedTuple):
    depth: int  # d(o, v)
    r: float  # lambda^d(o, v)
    c1: float  # shadow inside B(xi, c1 r)
    c2: float  # B(xi, c2 r) inside the shadow (inf when nothing lies outside)
    inside: int
    outside: int
    kappa: float  # rho^v(o, xi)
    nested: bool  # c1 r and c2 r bracket the shadow for this sample


class FloydDimensionReport(NamedTuple):
    lam: float
    epsilon: float  # -log lambda
    slope: float
    expected: float  # omega / -log lambda
    residual: float
    points: List[Tuple[float, float]]


# Experiments


class ExperimentKind(str, Enum):
    COGROWTH = "cogrowth"
    ARCS = "arcs"
    QRTREE = "qrtree"
    NONCONICAL = "nonconical"
    MYRBERG = "myrberg"
    FLOYD = "floyd"
    DIMENSION = "dimension"


class ExperimentConfig(BaseModel):
    """One experiment run; flat keys, dotted names map to underscores."""

    model_config = ConfigDict(extra="forbid")

    kind: ExperimentKind = Field(..., description="Experiment to run")
    seed: int = Field(default=0, ge=0, description="Seed for every sampler in the run")
    rank: int = Field(default=2, ge=2, description="Rank k of the free group")

    # graph cores
    cores: List[str] = Field(
        default_factory=lambda: ["bouquet", "theta", "barbell", "cycle", "random3"],
        description="Core names under cores/ or paths to edge-list files",
    )
    core: Optional[str] = Field(default=None, description="Single core for arc experiments")
    loop: List[int] = Field(default_factory=list, description="Directed edge ids of the immersed loop")
    omega: Optional[float] = Field(default=None, description="Target exponent; defaults to the core co-growth")
    srw_steps: int = Field(default=2**14, gt=0, description="Random-walk steps for spectral radius bounds")

    # subgroups
    subgroup_kind: Optional[SubgroupKind] = Field(default=None, description="Subgroup family")
    subgroup_weights: List[Union[int, List[int]]] = Field(default_factory=list, description="Generator images")
    subgroup_modulus: Optional[int] = Field(default=None, ge=2, description="Modulus for kernel_cyclic")
    subgroup_generators: List[str] = Field(default_factory=list, description="ASCII subgroup generators")

    # constructions
    stages: Optional[int] = Field(default=None, ge=1, description="Number of stages")
    L: List[int] = Field(default_factory=list, description="Annulus radii L_n, strictly increasing")
    delta: int = Field(default=1, ge=0, description="Annulus width Delta")
    tau: Optional[int] = Field(default=None, ge=0, description="Junction cancellation bound")
    wrap: int = Field(default=4, ge=0, description="Loop turns allowed at both ends of escaping arcs")
    t_min: int = Field(default=8, ge=1, description="Shortest arc length in growth fits")
    t_max: Optional[int] = Field(default=None, ge=8, description="Longest arc length in growth fits")
    h: Optional[str] = Field(default=None, description="ASCII word h")
    k: Optional[str] = Field(default=None, description="ASCII word k")
    n: Optional[int] = Field(default=None, ge=0, description="Annulus radius for double cosets")

    # boundaries
    lam: List[float] = Field(default_factory=list, description="Floyd parameters in (0, 1)")
    samples: int = Field(default=100, gt=0, description="Sampled rays, pairs or triples")
    horizon: Optional[int] = Field(default=None, ge=0, description="Stream elements to certify")
    s_fraction: float = Field(default=0.9, gt=0, le=1, description="Certified s as a fraction of the growth rate")
    epsilon: float = Field(default=1.0, gt=0, description="Visual metric parameter")

    # budgets and outputs
    budget_nodes: int = Field(default=1_000_000, gt=0, description="Tree node budget")
    budget_seconds: Optional[float] = Field(default=None, gt=0, description="Wall-clock budget")
    output_dir: Optional[str] = Field(default=None, description="Base folder for run outputs")
    threads: int = Field(default=1, ge=1, description="Worker threads")

    @field_validator("lam")
    @classmethod
    def _check_lambda(cls, lam: List[float]) -> List[float]:
        if any(not 0 < x < 1 for x in lam):
            raise ValueError("lambda must lie in (0, 1)")
        return lam

    @field_validator("L")
    @classmethod
    def _check_increasing(cls, L: List[int]) -> List[int]:
        if any(b <= a for a, b in zip(L, L[1:])):
            raise ValueError("L must be strictly increasing")
        return L

    def subgroup(self) -> SubgroupSpec:
        if self.subgroup_kind is None:
            raise ConfigError("subgroup.kind", "required for this experiment")
        return SubgroupSpec(
            kind=self.subgroup_kind,
            rank=self.rank,
            weights=self.subgroup_weights,
            modulus=self.subgroup_modulus,
            generators=self.subgroup_generators,
        )


class RunRecord(BaseModel):
    """Everything one run produced; all fields but wall_clock and outputs are reproducible."""

    kind: ExperimentKind
    config_hash: str
    artifact_version: str
    config: Dict[str, Any]
    reports: Dict[str, Any] = Field(default_factory=dict)
    verdicts: Dict[str, bool] = Field(default_factory=dict)
    truncated: bool = False
    failed_step: Optional[str] = None
    error: Optional[str] = None
    wall_clock: float = 0.0
    outputs: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failed_step is None and all(self.verdicts.values())

    def exact_fields(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", exclude={"wall_clock", "outputs"})


class AcceptanceResult(NamedTuple):
    number: int
    name: str
    passed: bool
    runtime: float  # seconds
    limit: float
    measured: Dict[str, Any]  # exact values compared with the expected-values file
    detail: str
    diff: List[str]  # "key: expected X, got Y"
