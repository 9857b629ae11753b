"""
Experiment runners for quasi-radial tree experiments.
Each experiment kind is a list of named steps; run() executes them in order,
writes CSV/JSON/.dat outputs and assembles the RunRecord.
"""

import logging
import math
import random
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from functools import partial
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from src.config import constants
from src.config.config import config_hash, resolve_output_dir
from src.core import dimension as D
from src.core import floyd as FL
from src.core import myrberg as M
from src.core import qrtree as Q
from src.core import schreier as S
from src.core import words
from src.core.arcs import arc_growth_check, double_coset_audit, immersed_loop
from src.core.graphcore import (
    FiniteGraphCore,
    amenability_report,
    closed_nb_counts,
    cogrowth,
    empirical_growth,
    grigorchuk_radius,
    hashimoto_radius,
    load_core,
    nb_path_counts,
    nb_paths_dfs,
    save_core,
    tree_return_probability,
)
from src.core.models import ConfigError, ExperimentConfig, ExperimentKind, QRTree, RunRecord
from src.data.data_export import (
    create_run_folder,
    finalize_run,
    to_jsonable,
    write_plot_data,
    write_series_csv,
)

logger = logging.getLogger(__name__)


class RunContext:
    """Mutable state shared by the steps of one run."""

    def __init__(self, config: ExperimentConfig) -> None:
        self.config = config
        self.reports: Dict[str, Any] = {}
        self.verdicts: Dict[str, bool] = {}
        self.series: Dict[str, List[Dict[str, Any]]] = {}
        self.plots: Dict[str, Tuple[List[Tuple[float, float]], Tuple[str, str]]] = {}
        self.truncated = False
        self.state: Dict[str, Any] = {}
        self.out_dir: Optional[Path] = None
        self.files: List[str] = []

    def report(self, name: str, value: Any) -> None:
        self.reports[name] = to_jsonable(value)

    def verdict(self, name: str, passed: bool) -> None:
        self.verdicts[name] = bool(passed)
        if not passed:
            logger.warning(f"Verdict '{name}' failed")

    def plot(self, name: str, points, labels: Tuple[str, str]) -> None:
        self.plots[name] = ([(float(x), float(y)) for x, y in points], labels)


Step = Tuple[str, Callable[[RunContext], None]]


# Shared helpers
def resolve_core(name: str) -> FiniteGraphCore:
    """A shipped core name or a path to an edge-list file."""
    path = Path(name)
    if not path.suffix:
        path = constants.CORES_DIR / f"{name}.edges"
    if not path.exists():
        raise ConfigError("core", f"no edge-list file for '{name}'")
    return load_core(path)


def finite_rate(tree: QRTree) -> float:
    """log |deepest level| / longest word on it: the growth the finite tree exhibits."""
    level = tree.levels[-1]
    longest = max(tree.dist_root[v] for v in level)
    return math.log(len(level)) / longest if longest else 0.0


def _free_rate(config: ExperimentConfig) -> float:
    return math.log(2 * config.rank - 1)


def _straight_schedule(ctx: RunContext) -> None:
    config = ctx.config
    top = config.rank
    first = [c for c in words.alphabet(config.rank) if c != -top]
    tau = config.tau or 0
    exact = config.delta == 0 and tau == 0
    if config.omega is not None:
        omega = config.omega
    else:
        omega = Q.straight_rates(config.rank, config.L, first, [top], config.delta, 2 * config.delta + 2 * (2 * tau + 1))
    schedule = Q.make_schedule(
        config.L,
        [()] * len(config.L),
        omega,
        tau=tau,
        deltas=config.delta,
        element_source=Q.straight_source(config.rank, first, [top]),
        counter=Q.straight_counter(config.rank, first, [top]) if exact else None,
    )
    ctx.state["schedule"] = schedule
    ctx.report("schedule", schedule.to_dict())


def _build_tree(ctx: RunContext) -> None:
    tree = Q.build_tree(ctx.state["schedule"], node_budget=ctx.config.budget_nodes)
    ctx.state["tree"] = tree
    ctx.truncated |= tree.truncated
    ctx.report(
        "tree",
        {
            "nodes": len(tree.words),
            "levels": [len(level) for level in tree.levels],
            "completed_stages": tree.completed_stages,
            "truncated": tree.truncated,
        },
    )
    ctx.series["stages"] = ctx.state["schedule"].stage_rows()
    ctx.series["tree"] = _tree_rows(tree)


def _tree_rows(tree: QRTree) -> List[Dict[str, Any]]:
    return [
        {
            "node_id": v,
            "parent_id": tree.parents[v],
            "stage": tree.stages[v],
            "word": words.format_word(tree.words[v]),
            "dist_root": tree.dist_root[v],
        }
        for v in range(len(tree.words))
    ]


def _tree_audits(ctx: RunContext) -> None:
    tree, schedule = ctx.state["tree"], ctx.state["schedule"]
    for audit in (
        Q.injectivity(tree),
        Q.shadow_laminarity(tree, constants.STRUCTURAL_DEPTH),
        Q.sibling_separation(tree, schedule),
        Q.quasi_geodesic_ledger(tree),
        D.mass_flow_audit(tree, D.mass_distribution(tree, 0.5 * min(schedule.omegas))),
    ):
        ctx.report(f"audit:{audit.name}", audit)
        ctx.verdict(f"audit:{audit.name}", audit.failures == 0)


def _growth_target(ctx: RunContext) -> Tuple[float, float]:
    """Rate the growth bracket must reach, with its tolerance."""
    config = ctx.config
    if config.kind == ExperimentKind.NONCONICAL:
        return _free_rate(config), constants.NONCONICAL_GROWTH_TOLERANCE
    if config.omega is not None:
        return config.omega, constants.GROWTH_TOLERANCE
    return min(ctx.state["schedule"].omegas), constants.GROWTH_TOLERANCE


def _growth(ctx: RunContext) -> None:
    tree, schedule = ctx.state["tree"], ctx.state["schedule"]
    estimate = Q.growth_rate(tree, schedule)
    ctx.report("growth", estimate)
    ctx.series["growth_table"] = estimate.stage_table
    ctx.plot(
        "level_sizes",
        [(d, math.log(len(level))) for d, level in enumerate(tree.levels)],
        ("depth", "log_nodes"),
    )
    if schedule.length_counts(0) is not None:
        # the whole schedule when its stages are counted, not only the built levels
        estimate = Q.series_growth(schedule)
        ctx.report("series_growth", estimate)
    target, tol = _growth_target(ctx)
    ctx.report("growth_target", {"target": target, "tolerance": tol, "lower": estimate.bracket[0]})
    ctx.verdict("growth", estimate.bracket[0] >= target - tol)


# Co-growth
def _cogrowth_core(ctx: RunContext, name: str) -> None:
    core = resolve_core(name)
    core.validate()
    spectral = hashimoto_radius(core, 1e-10)
    omega = math.log(spectral.value)
    n1, n2 = constants.COGROWTH_LENGTHS
    empirical = empirical_growth(core, n1, n2)
    counts = nb_path_counts(core, n2)
    n = constants.COGROWTH_ORACLE_LENGTH
    # edge-by-edge enumeration against the transfer-matrix counts
    oracle = nb_paths_dfs(core, n) == counts[n - 1] and closed_nb_counts(core, n)[-1] == nb_paths_dfs(
        core, n, closed=True
    )
    amenability = amenability_report(core, constants.COGROWTH_SRW_STEPS)
    row: Dict[str, Any] = {
        "core_id": name,
        "vertices": core.num_vertices,
        "edges": len(core.edges),
        "d": core.degree,
        "betti": core.betti_number(),
        "rho": spectral.value,
        "omega": omega,
        "r_formula": grigorchuk_radius(omega, core.degree) if core.degree >= 3 else None,
        "r_mc": amenability.srw.value,
        "folner_best": float(amenability.folner_best) if amenability.folner_best is not None else None,
        "empirical": empirical,
        "gap": abs(omega - empirical),
        "oracle": oracle,
    }
    ctx.series.setdefault("cogrowth", []).append(row)
    ctx.report(f"core:{name}", row)
    if ctx.out_dir is not None:
        path = ctx.out_dir / f"{name}.edges"
        save_core(core, path)
        ctx.files.append(str(path))
    ctx.plot(
        f"nb_counts_{name}",
        [(n, math.log(c)) for n, c in enumerate(counts, 1) if c > 0],
        ("length", "log_count"),
    )
    ctx.verdict(f"cogrowth:{name}", row["gap"] <= constants.COGROWTH_TOLERANCE and oracle)
    if row["r_formula"] is not None:
        # the walk gives a lower bound on the radius the formula predicts
        ctx.verdict(f"grigorchuk:{name}", row["r_mc"] <= row["r_formula"] + 1e-9)


def _schreier_radius(ctx: RunContext) -> None:
    config = ctx.config
    spec = config.subgroup()
    radius = config.n if config.n is not None else 64
    graph = S.build(spec, radius, max_vertices=config.budget_nodes)
    ctx.truncated |= graph.truncated
    report = amenability_report(graph, max_steps=config.srw_steps)
    steps = min(constants.TREE_RETURN_STEPS, config.srw_steps)
    # every Schreier graph is a quotient of the tree, so returns are at least as likely
    tree_floor = float(tree_return_probability(graph.degree, steps)[steps]) ** (1 / steps)
    row: Dict[str, Any] = {
        "subgroup": spec.kind.value,
        "vertices": graph.vertex_count(),
        "verdict": report.verdict,
        "folner_best": report.folner_best,
        "srw": report.srw.value,
        "srw_tolerance": report.srw.tolerance,
        "tree_floor": tree_floor,
        "consistent": report.consistent,
    }
    if config.omega is not None:
        formula = grigorchuk_radius(config.omega, graph.degree)
        row["grigorchuk"] = formula
        # the walk gives a lower bound on the radius the formula predicts
        ctx.verdict("grigorchuk", report.srw.value <= formula + 1e-9)
    if not graph.truncated:
        ctx.verdict("tree_floor", report.srw.value >= tree_floor - 1e-12)
    spheres = Counter(S.distances_from(graph, graph.base, min(radius, graph.radius)).values())
    ctx.series["schreier_spheres"] = [{"radius": r, "vertices": spheres[r]} for r in sorted(spheres)]
    ctx.report("schreier", row)
    ctx.series["schreier_edges"] = list(graph.edge_rows())
    ctx.verdict("amenability", report.consistent)


def cogrowth_steps(config: ExperimentConfig) -> List[Step]:
    steps: List[Step] = [(f"core:{name}", partial(_cogrowth_core, name=name)) for name in config.cores]
    if config.subgroup_kind is not None:
        steps.append(("schreier", _schreier_radius))
    return steps


# Arcs
def _arc_growth(ctx: RunContext) -> None:
    config = ctx.config
    core = resolve_core(config.core)
    gamma = immersed_loop(core, config.loop)
    omega = config.omega if config.omega is not None else cogrowth(core)
    report = arc_growth_check(
        core, gamma, config.t_max, config.delta, omega, t_min=config.t_min, budget=config.budget_nodes
    )
    ctx.truncated |= report.verdict == "inconclusive"
    low, high = report.bracket
    ratio = high / low if low > 0 else math.inf
    ctx.report("arc_growth", report)
    ctx.report("bracket_ratio", ratio)
    ctx.series["arcs"] = [
        {"t": t, "count": c, "rate": math.log(c) / t if c > 0 else None, "scaled": c * math.exp(-omega * t)}
        for t, c in zip(report.lengths, report.counts)
    ]
    ctx.plot(
        "arc_counts",
        [(t, math.log(c)) for t, c in zip(report.lengths, report.counts) if c > 0],
        ("t", "log_count"),
    )
    ctx.verdict("arc_growth", report.verdict == "pass")
    ctx.verdict("arc_bracket", ratio <= constants.ARC_BRACKET_RATIO)


def _double_cosets(ctx: RunContext) -> None:
    config = ctx.config
    triple = M.separator_triple(config.rank, 5)
    report = double_coset_audit(
        words.parse(config.h),
        words.parse(config.k),
        config.n,
        config.delta,
        triple.F,
        rank=config.rank,
        budget=config.budget_nodes,
        tau=config.tau,
    )
    ctx.truncated |= report.truncated
    ctx.report("double_cosets", report)
    ctx.series["fibers"] = [{"fiber_size": size, "cosets": count} for size, count in sorted(report.histogram.items())]
    ctx.verdict("double_cosets", report.passes)


def arcs_steps(config: ExperimentConfig) -> List[Step]:
    steps: List[Step] = [("arc_growth", _arc_growth)]
    if config.h and config.k and config.n is not None:
        steps.append(("double_cosets", _double_cosets))
    return steps


# Quasi-radial trees
def qrtree_steps(config: ExperimentConfig) -> List[Step]:
    return [
        ("schedule", _straight_schedule),
        ("tree", _build_tree),
        ("audits", _tree_audits),
        ("growth", _growth),
    ]


def _nonconical_family(ctx: RunContext) -> None:
    config = ctx.config
    family = Q.nonconical_family(
        config.subgroup(),
        words.parse(config.h),
        config.stages,
        L_sequence=config.L or None,
        delta=config.delta,
        wrap=config.wrap,
        node_budget=config.budget_nodes,
    )
    tree = family["tree"]
    ctx.state.update(family)
    ctx.truncated |= tree.truncated
    escape = family["escape"]
    ctx.report("schedule", family["schedule"].to_dict())
    ctx.report("escape", escape)
    ctx.report("certificates", {"count": len(family["certificates"]), "rays": len(tree.levels[-1])})
    ctx.series["stages"] = family["schedule"].stage_rows()
    ctx.series["tree"] = _tree_rows(tree)
    ctx.series["certificates"] = [
        {"ray": i, **c._asdict()} for i, c in enumerate(family["certificates"])
    ]
    ctx.verdict("escape", escape.failures == 0 and len(family["certificates"]) == len(tree.levels[-1]))


def _boundary_slope(ctx: RunContext) -> None:
    tree = ctx.state["tree"]
    try:
        estimate = D.box_counting([tree.words[v] for v in tree.levels[-1]], ctx.config.epsilon)
    except ValueError as e:
        logger.warning(f"No box-counting slope: {e}")
        ctx.report("dimension", None)
        return
    ctx.report("dimension", estimate)
    ctx.plot("box_counting", estimate.points, ("log_inv_r", "log_N"))


def nonconical_steps(config: ExperimentConfig) -> List[Step]:
    return [
        ("family", _nonconical_family),
        ("audits", _tree_audits),
        ("growth", _growth),
        ("dimension", _boundary_slope),
    ]


# Myrberg
def _myrberg_schedule(ctx: RunContext) -> None:
    config = ctx.config
    schedule, records = M.build_myrberg_schedule(
        config.stages, L_sequence=config.L or None, rank=config.rank, delta=config.delta
    )
    ctx.state["schedule"], ctx.state["records"] = schedule, records
    ctx.report("schedule", schedule.to_dict())
    ctx.series["myrberg_stages"] = [
        {
            "stage": i,
            "stream_index": r.index,
            "L": r.L,
            "q": r.q,
            "kept": r.size,
            "candidates": r.candidates,
            "omega": omega,
            "f": words.format_word(r.f),
            "bridge": words.format_word(r.bridge),
            "bridge_power": words.format_word(r.bridge_power),
            "h": words.format_word(r.h),
        }
        for i, (r, omega) in enumerate(zip(records, schedule.omegas), 1)
    ]


def _myrberg_tree(ctx: RunContext) -> None:
    _build_tree(ctx)
    _tree_audits(ctx)
    built, series, ok = M.myrberg_growth_check(ctx.state["tree"], ctx.state["schedule"])
    ctx.report("growth", built)
    ctx.report("series_growth", series)
    ctx.verdict("growth", ok)


def _myrberg_certificates(ctx: RunContext) -> None:
    config = ctx.config
    schedule, records = ctx.state["schedule"], ctx.state["records"]
    horizon = config.horizon if config.horizon is not None else len(records)
    if horizon > len(records):
        raise ValueError(f"insufficient horizon: {horizon} stream elements requested, {len(records)} placed")
    prefix = [r.bridge for r in records[:horizon]]
    rays = M.sample_family_rays(records, config.samples, seed=config.seed)
    certify = partial(M.myrberg_certificate, stream_prefix=prefix, R=schedule.tau)
    with ThreadPoolExecutor(max_workers=config.threads) as executor:
        certificates = list(executor.map(lambda item: certify(item[0], positions=item[1][:horizon]), rays))
    ctx.series["certificates"] = [
        {
            "sample": i,
            "ray_length": len(ray),
            "passed": cert.passed,
            "positional": cert.positional,
            "min_margin": min((w.diameter - w.required for w in cert.witnesses), default=0),
        }
        for i, ((ray, _), cert) in enumerate(zip(rays, certificates))
    ]
    ctx.series["witnesses"] = [
        {
            "sample": i,
            "b": words.format_word(w.b),
            "index": w.index,
            "witness_position": w.witness_position,
            "diameter": w.diameter,
        }
        for i, cert in enumerate(certificates)
        for w in cert.witnesses
    ]
    failed = [i for i, cert in enumerate(certificates) if not cert.passed]
    ctx.report("certificates", {"samples": len(certificates), "horizon": horizon, "failed": failed[:10]})
    ctx.verdict("certificates", not failed)


def myrberg_steps(config: ExperimentConfig) -> List[Step]:
    return [
        ("schedule", _myrberg_schedule),
        ("tree", _myrberg_tree),
        ("certificates", _myrberg_certificates),
    ]


# Floyd
def _floyd_identities(ctx: RunContext, lam: float) -> None:
    config = ctx.config
    for audit in (
        FL.equivariance_audit(lam, config.samples, seed=config.seed, rank=config.rank),
        FL.basepoint_audit(lam, config.samples, seed=config.seed, rank=config.rank),
        FL.triangle_audit(lam, config.samples, seed=config.seed, rank=config.rank),
    ):
        ctx.report(f"{audit.name}:{lam:.6g}", audit)
        ctx.verdict(f"{audit.name}:{lam:.6g}", audit.failures == 0)


def _floyd_visual(ctx: RunContext, lam: float) -> None:
    config = ctx.config
    report, rows = FL.floyd_visual_audit(lam, config.samples, seed=config.seed, rank=config.rank)
    ctx.report(f"floyd_visual:{lam:.6g}", report)
    ctx.series[f"floyd_visual_{lam:.6g}"] = rows
    ctx.verdict(f"floyd_visual:{lam:.6g}", report.failures == 0)


def _floyd_geometry(ctx: RunContext, lam: float) -> None:
    config = ctx.config
    rows = FL.visibility_profile(lam, [0.1, 0.25, 0.5, 1.0, 1.5, 2.0], config.samples, seed=config.seed, rank=config.rank)
    ctx.series[f"visibility_{lam:.6g}"] = rows
    ctx.plot(
        f"visibility_{lam:.6g}",
        [(row["kappa"], row["phi"]) for row in rows if row["phi"] is not None],
        ("kappa", "phi"),
    )
    xi = FL.random_word(random.Random(config.seed), config.rank, 14)
    shadow = FL.shadow_ball_compare(xi, 4, lam, samples=config.samples, seed=config.seed, rank=config.rank)
    ctx.report(f"shadow:{lam:.6g}", shadow)
    ctx.verdict(f"shadow:{lam:.6g}", shadow.nested)
    threshold = FL.large_floyd_threshold(lam, 0.5, samples=config.samples, seed=config.seed, rank=config.rank)
    ctx.report(f"large_floyd_threshold:{lam:.6g}", threshold)


def _floyd_dimension(ctx: RunContext, lam: float) -> None:
    config = ctx.config
    depth = config.n if config.n is not None else 8
    report = FL.floyd_dimension_experiment(list(words.iter_words(config.rank, depth)), lam, _free_rate(config))
    ctx.report(f"floyd_dimension:{lam:.6g}", report)
    ctx.plot(f"floyd_box_counting_{lam:.6g}", report.points, ("log_inv_r", "log_N"))
    ctx.verdict(
        f"floyd_dimension:{lam:.6g}", abs(report.slope - report.expected) <= constants.FLOYD_SLOPE_TOLERANCE
    )


def _floyd_tree(ctx: RunContext) -> Tuple[QRTree, List[Any]]:
    """A small Myrberg tree shared by the Floyd dimension steps."""
    if "floyd_tree" not in ctx.state:
        tree, _, records = M.build_myrberg_tree(
            constants.FLOYD_MYRBERG_STAGES,
            node_budget=ctx.config.budget_nodes,
            rank=ctx.config.rank,
            L_min=constants.FLOYD_MYRBERG_L_MIN,
        )
        ctx.truncated |= tree.truncated
        ctx.state["floyd_tree"] = (tree, records)
    return ctx.state["floyd_tree"]


def _floyd_myrberg(ctx: RunContext, lam: float) -> None:
    tree, records = _floyd_tree(ctx)
    leaves = tree.levels[-1]
    omega = Q.growth_rate(tree).frontier_rate
    report = FL.floyd_dimension_experiment([tree.words[v] for v in leaves], lam, omega)
    ctx.report(f"floyd_myrberg_dimension:{lam:.6g}", report)
    ctx.verdict(
        f"floyd_myrberg_dimension:{lam:.6g}", abs(report.slope - report.expected) <= constants.FLOYD_SLOPE_TOLERANCE
    )
    rng = random.Random(ctx.config.seed)
    rows = []
    for leaf in rng.sample(leaves, min(ctx.config.samples, len(leaves))):
        ray, _ = M.tree_ray(tree, leaf, records)
        kappas = FL.kappa_along_ray(ray, range(1, len(ray)), lam)
        rows.append({"leaf": leaf, "ray_length": len(ray), "kappa_min": min(kappas), "kappa_max": max(kappas)})
    ctx.series[f"floyd_kappa_{lam:.6g}"] = rows
    ctx.verdict(f"floyd_kappa:{lam:.6g}", all(row["kappa_min"] >= constants.FLOYD_KAPPA for row in rows))


def floyd_steps(config: ExperimentConfig) -> List[Step]:
    steps: List[Step] = []
    for lam in config.lam:
        steps.extend(
            [
                (f"identities:{lam:.6g}", partial(_floyd_identities, lam=lam)),
                (f"visual:{lam:.6g}", partial(_floyd_visual, lam=lam)),
                (f"geometry:{lam:.6g}", partial(_floyd_geometry, lam=lam)),
                (f"dimension:{lam:.6g}", partial(_floyd_dimension, lam=lam)),
                (f"myrberg_dimension:{lam:.6g}", partial(_floyd_myrberg, lam=lam)),
            ]
        )
    return steps


# Dimension
def _certify(ctx: RunContext) -> None:
    config = ctx.config
    tree, schedule = ctx.state["tree"], ctx.state["schedule"]
    omega = config.omega if config.omega is not None else _free_rate(config)
    s = config.s_fraction * omega
    certificate = D.certify_lower_bound(tree, s, config.epsilon, schedule=schedule)
    rate = finite_rate(tree)
    ctx.report("certificate", certificate)
    ctx.report("finite_rate", {"rate": rate, "gap_to_free_rate": _free_rate(config) - rate})
    ctx.series["product_ledger"] = certificate.product_ledger
    ctx.series["cylinders"] = D.cylinder_cover(tree, epsilon=config.epsilon)
    ctx.verdict("certificate", certificate.valid)
    if certificate.slope is not None:
        ctx.verdict(
            "slope", abs(certificate.slope - omega / config.epsilon) <= constants.DIMENSION_SLOPE_TOLERANCE
        )
        estimate = D.box_counting([tree.words[v] for v in tree.levels[-1]], config.epsilon)
        ctx.plot("box_counting", estimate.points, ("log_inv_r", "log_N"))
    mass = D.mass_distribution(tree, s, config.epsilon)
    flow = D.mass_flow_audit(tree, mass)
    ctx.report("mass_flow", flow)
    ctx.verdict("mass_flow", flow.failures == 0)


def dimension_steps(config: ExperimentConfig) -> List[Step]:
    return [
        ("schedule", _straight_schedule),
        ("tree", _build_tree),
        ("certificate", _certify),
    ]


RUNNERS: Dict[ExperimentKind, Callable[[ExperimentConfig], List[Step]]] = {
    ExperimentKind.COGROWTH: cogrowth_steps,
    ExperimentKind.ARCS: arcs_steps,
    ExperimentKind.QRTREE: qrtree_steps,
    ExperimentKind.NONCONICAL: nonconical_steps,
    ExperimentKind.MYRBERG: myrberg_steps,
    ExperimentKind.FLOYD: floyd_steps,
    ExperimentKind.DIMENSION: dimension_steps,
}


def run(
    config: ExperimentConfig,
    out_dir: Optional[str] = None,
    folder_config: Optional[Dict[str, Any]] = None,
    write_plots: bool = True,
) -> RunRecord:
    """Run the configured experiment step by step and write its outputs."""
    digest = config_hash(config)
    results_dir, filename_base = create_run_folder(
        config.kind.value, digest, resolve_output_dir(out_dir, config), folder_config
    )
    steps = RUNNERS[config.kind](config)
    print(f"🚀 Running {config.kind.value} experiment ({len(steps)} steps, config {digest[:8]})")
    print(f"📊 Outputs: {results_dir}")

    ctx = RunContext(config)
    ctx.out_dir = Path(results_dir)
    failed_step = None
    error = None
    start = time.perf_counter()
    for number, (name, step) in enumerate(steps, 1):
        if config.budget_seconds is not None and time.perf_counter() - start > config.budget_seconds:
            ctx.truncated = True
            logger.warning(f"Time budget of {config.budget_seconds}s spent before step '{name}'")
            print(f"🛑 Stopped after {number - 1}/{len(steps)} steps: time budget spent")
            break
        logger.info(f"Step {number}/{len(steps)}: {name}")
        try:
            step(ctx)
        except ConfigError:
            raise
        except Exception as e:
            failed_step = name
            error = f"{type(e).__name__}: {e}"
            print(f"\n⚠️  ERROR: Step '{name}' failed with error: {e}")
            print(f"💾 Outputs of {number - 1} completed steps are kept.")
            break
    wall_clock = time.perf_counter() - start

    outputs: List[str] = list(ctx.files)
    for name, rows in ctx.series.items():
        if rows:
            outputs.append(str(write_series_csv(rows, results_dir, filename_base, name)))
    if write_plots:
        for name, (points, labels) in ctx.plots.items():
            outputs.append(str(write_plot_data(points, results_dir, filename_base, name, labels)))

    record = RunRecord(
        kind=config.kind,
        config_hash=digest,
        artifact_version=constants.ARTIFACT_VERSION,
        config=config.model_dump(mode="json"),
        reports=ctx.reports,
        verdicts=ctx.verdicts,
        truncated=ctx.truncated,
        failed_step=failed_step,
        error=error,
        wall_clock=wall_clock,
        outputs=outputs,
    )
    finalize_run(record, results_dir, filename_base)
    if failed_step is None:
        print(f"✅ Experiment {config.kind.value} finished in {wall_clock:.1f}s")
    return record
