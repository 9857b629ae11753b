"""
Acceptance suite for the quasi-radial tree lab.
Runs the nine desk-scale criteria and compares their exact values with configs/expected_values.json.
"""

import json
import logging
import math
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

from src.config import constants
from src.core import dimension as D
from src.core import floyd as FL
from src.core import myrberg as M
from src.core import qrtree as Q
from src.core import schreier as S
from src.core import words
from src.core.arcs import arc_growth_check, double_coset_audit, immersed_loop
from src.core.graphcore import (
    cogrowth,
    empirical_growth,
    grigorchuk_radius,
    hashimoto_radius,
    load_core,
    srw_radius,
)
from src.core.models import AcceptanceResult, SubgroupKind, SubgroupSpec
from src.data.data_export import to_jsonable

logger = logging.getLogger(__name__)

LINE = SubgroupSpec(kind=SubgroupKind.KERNEL_Z, weights=[1, 0])
TREE = SubgroupSpec(kind=SubgroupKind.TRIVIAL)
LOG3 = math.log(3)

Outcome = Tuple[bool, Dict[str, Any], str]


def _core(name: str):
    return load_core(constants.CORES_DIR / f"{name}.edges")


def check_cogrowth() -> Outcome:
    rho = {}
    worst = 0.0
    for name in constants.SHIPPED_CORES:
        core = _core(name)
        spectral = hashimoto_radius(core, 1e-10)
        n1, n2 = constants.COGROWTH_LENGTHS
        worst = max(worst, abs(math.log(spectral.value) - empirical_growth(core, n1, n2)))
        rho[name] = round(spectral.value, 6)
    return worst <= constants.COGROWTH_TOLERANCE, {"rho": rho}, f"max |log rho - slope| = {worst:.2e}"


def check_grigorchuk() -> Outcome:
    line = srw_radius(S.SchreierGraph(LINE), constants.SRW_STEPS)
    formula = grigorchuk_radius(LOG3, 4)
    tree = srw_radius(S.SchreierGraph(TREE), constants.SRW_TREE_STEPS)
    tree_gap = abs(tree.value - math.sqrt(3) / 2)
    passed = (
        line.value >= constants.SRW_LINE_FLOOR
        and abs(formula - 1.0) < 1e-12
        and tree_gap <= constants.SRW_TREE_TOLERANCE
    )
    detail = f"line r >= {line.value:.4f}, tree r >= {tree.value:.4f} (gap {tree_gap:.4f})"
    return passed, {"line_formula": round(formula, 9)}, detail


def check_arc_growth() -> Outcome:
    t_min, t_max = constants.ARC_T_RANGE
    passed = True
    measured: Dict[str, Any] = {}
    notes = []
    for name in ("theta", "barbell"):
        core = _core(name)
        gamma = immersed_loop(core, constants.SHIPPED_CORES[name])
        report = arc_growth_check(core, gamma, t_max, 1, cogrowth(core), t_min=t_min)
        low, high = report.bracket
        ratio = high / low if low > 0 else math.inf
        passed &= report.verdict == "pass" and ratio <= constants.ARC_BRACKET_RATIO
        measured[f"{name}_counts"] = report.counts
        notes.append(f"{name}: c2/c1 = {ratio:.2f}")
    return passed, measured, ", ".join(notes)


def check_double_cosets() -> Outcome:
    triple = M.separator_triple(2, 5)
    sizes = []
    passed = True
    worst = 0
    for n in range(1, constants.DOUBLE_COSET_MAX_N + 1):
        report = double_coset_audit(words.parse("a"), words.parse("b"), n, 0, triple.F)
        passed &= report.passes and not report.truncated
        sizes.append(report.annulus_size)
        worst = max(worst, report.max_fiber)
    return passed, {"annulus_sizes": sizes}, f"largest fiber {worst}"


def check_dimension() -> Outcome:
    a, A, b = 1, -1, 2
    L = list(constants.DIMENSION_L)
    first, last = [a, A, b], [b]
    schedule = Q.make_schedule(
        L,
        [()] * len(L),
        Q.straight_rates(2, L, first, last, 0, 2),
        tau=0,
        deltas=0,
        element_source=Q.straight_source(2, first, last),
        counter=Q.straight_counter(2, first, last),
    )
    tree = Q.build_tree(schedule, node_budget=constants.DIMENSION_NODE_LIMIT)
    certificate = D.certify_lower_bound(tree, constants.DIMENSION_S_FRACTION * LOG3, schedule=schedule)
    slope_ok = certificate.slope is not None and abs(certificate.slope - LOG3) <= constants.DIMENSION_SLOPE_TOLERANCE
    passed = certificate.valid and len(tree.words) <= constants.DIMENSION_NODE_LIMIT and slope_ok
    slope = "n/a" if certificate.slope is None else f"{certificate.slope:.4f}"
    detail = (
        f"max violation {certificate.max_violation:.3e}, slope {slope} vs log 3,"
        f" omegas {schedule.omegas[0]:.4f}..{schedule.omegas[-1]:.4f}"
    )
    return passed, {"leaves": len(tree.levels[-1])}, detail


def check_nonconical() -> Outcome:
    family = Q.nonconical_family(
        LINE,
        words.parse("b"),
        len(constants.NONCONICAL_L),
        L_sequence=constants.NONCONICAL_L,
        delta=0,
        wrap=constants.NONCONICAL_WRAP,
        node_budget=constants.NONCONICAL_NODE_BUDGET,
    )
    schedule, tree, series = family["schedule"], family["tree"], family["series"]
    margins = [row["escape_margin"] for row in schedule.stage_rows()]
    escaping = family["escape"].failures == 0 and len(family["certificates"]) == len(tree.levels[-1])
    passed = (
        escaping
        and all(x < y for x, y in zip(margins, margins[1:]))
        and series is not None
        and series.bracket[0] >= LOG3 - constants.NONCONICAL_GROWTH_TOLERANCE
    )
    measured = {"axis_distances": schedule.axis_distances[:4], "prefix": words.format_word(schedule.prefix)}
    detail = f"{len(family['certificates'])} escape certificates"
    if series is not None:
        detail += f", bracket {series.bracket[0]:.4f}..{series.bracket[1]:.4f} over {len(schedule.L)} stages"
    return passed, measured, detail


def check_myrberg() -> Outcome:
    schedule, records = M.build_myrberg_schedule(constants.MYRBERG_HORIZON)
    prefix = [r.bridge for r in records]
    failed = 0
    for ray, positions in M.sample_family_rays(records, constants.MYRBERG_SAMPLES, seed=0):
        certificate = M.myrberg_certificate(ray, prefix, schedule.tau, positions)
        if not (certificate.passed and certificate.positional):
            failed += 1
    omegas = schedule.omegas
    rising = min(omegas) >= LOG3 - 0.5 and omegas[-1] >= LOG3 - constants.NONCONICAL_GROWTH_TOLERANCE
    tree = Q.build_tree(schedule, node_budget=constants.MYRBERG_NODE_BUDGET)
    _, series, growth_ok = M.myrberg_growth_check(tree, schedule, constants.GROWTH_TOLERANCE)
    measured = {"L": schedule.L, "b12": words.format_word(records[-1].bridge)}
    detail = (
        f"{failed}/{constants.MYRBERG_SAMPLES} rays failed, omega {omegas[0]:.4f}..{omegas[-1]:.4f},"
        f" bracket {series.bracket[0]:.4f}..{series.bracket[1]:.4f}"
    )
    return failed == 0 and rising and growth_ok, measured, detail


def check_floyd() -> Outcome:
    passed = True
    notes = []
    tree, _, records = M.build_myrberg_tree(constants.FLOYD_MYRBERG_STAGES, L_min=constants.FLOYD_MYRBERG_L_MIN)
    leaves = tree.levels[-1]
    omega = Q.growth_rate(tree).frontier_rate
    rays = [M.tree_ray(tree, v, records)[0] for v in leaves[:: max(1, len(leaves) // 50)]]
    for lam in (0.5, math.exp(-1)):
        trials = constants.FLOYD_TRIALS
        audits = [
            FL.equivariance_audit(lam, trials),
            FL.basepoint_audit(lam, trials),
            FL.floyd_visual_audit(lam, trials)[0],
        ]
        report = FL.floyd_dimension_experiment([tree.words[v] for v in leaves], lam, omega)
        gap = abs(report.slope - report.expected)
        kappa = min(min(FL.kappa_along_ray(ray, range(1, len(ray)), lam)) for ray in rays)
        passed &= (
            all(a.failures == 0 for a in audits)
            and gap <= constants.FLOYD_SLOPE_TOLERANCE
            and kappa >= constants.FLOYD_KAPPA
        )
        notes.append(
            f"lambda={lam:.4f}: {sum(a.failures for a in audits)} failures, slope gap {gap:.2e}, kappa >= {kappa:.3f}"
        )
    return passed, {"ball_radius_3": FL.floyd_ball(3, 0.5).graph.number_of_nodes()}, "; ".join(notes)


def check_structural() -> Outcome:
    a, A, b = 1, -1, 2
    depth = constants.STRUCTURAL_DEPTH
    cayley = Q.cayley_tree(2, depth)
    schedule = Q.make_schedule(
        [3, 4], [words.parse("aBab"), ()], 0.1, tau=0, deltas=0, element_source=Q.straight_source(2, [a, A, b], [b])
    )
    straight = Q.build_tree(schedule)
    myrberg_tree, myrberg_schedule, _ = M.build_myrberg_tree(
        constants.FLOYD_MYRBERG_STAGES, L_min=constants.FLOYD_MYRBERG_L_MIN
    )
    family = Q.nonconical_family(
        LINE, words.parse("b"), 2, L_sequence=[8, 10], delta=0, wrap=1, node_budget=constants.STRUCTURAL_NODE_BUDGET
    )
    escaping, escaping_schedule = family["tree"], family["schedule"]
    audits = [
        Q.injectivity(cayley),
        Q.shadow_laminarity(cayley, depth),
        D.mass_flow_audit(cayley, D.mass_distribution(cayley, 0.7)),
        D.ultrametric_audit(list(words.iter_words(2, 4))),
        Q.injectivity(straight),
        Q.shadow_laminarity(straight, depth),
        Q.sibling_separation(straight, schedule),
    ]
    for tree, tree_schedule in ((myrberg_tree, myrberg_schedule), (escaping, escaping_schedule)):
        audits.extend(
            [
                Q.injectivity(tree),
                Q.shadow_laminarity(tree, depth),
                Q.sibling_separation(tree, tree_schedule),
                Q.quasi_geodesic_ledger(tree),
                D.mass_flow_audit(tree, D.mass_distribution(tree, 0.5 * min(tree_schedule.omegas))),
            ]
        )
    audits.append(family["escape"])
    failures = sum(audit.failures for audit in audits)
    checked = sum(audit.checked for audit in audits)
    return failures == 0, {"cayley_nodes_depth_6": len(cayley.words)}, f"{checked} checks, {failures} failures"


CRITERIA: List[Tuple[int, str, Callable[[], Outcome]]] = [
    (1, "cogrowth", check_cogrowth),
    (2, "grigorchuk", check_grigorchuk),
    (3, "arc_growth", check_arc_growth),
    (4, "double_cosets", check_double_cosets),
    (5, "dimension", check_dimension),
    (6, "nonconical", check_nonconical),
    (7, "myrberg", check_myrberg),
    (8, "floyd", check_floyd),
    (9, "structural", check_structural),
]


def _selected(filter: Optional[str], number: int, name: str) -> bool:
    if not filter:
        return True
    tokens = [t.strip() for t in filter.split(",") if t.strip()]
    return any(t == str(number) or t in name for t in tokens)


def load_expected(path: Union[str, Path]) -> Tuple[Optional[Dict[str, Any]], Optional[str]]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        return None, f"expected values file {path} not found"
    except json.JSONDecodeError as e:
        return None, f"invalid JSON in {path}: {e}"
    if not isinstance(data, dict):
        return None, f"{path} must hold a JSON object"
    return data, None


def diff_expected(expected: Dict[str, Any], measured: Dict[str, Any]) -> List[str]:
    measured = json.loads(json.dumps(to_jsonable(measured)))
    return [
        f"{key}: expected {value!r}, got {measured.get(key)!r}"
        for key, value in expected.items()
        if measured.get(key) != value
    ]


def verify_acceptance(
    filter: Optional[str] = None, expected_path: Union[str, Path] = constants.EXPECTED_VALUES_PATH
) -> Dict[str, Any]:
    """Run the selected criteria; every failed verdict, diff or time overrun counts as a failure."""
    expected, problem = load_expected(expected_path)
    if problem:
        print(f"⚠️  {problem}")
    selected = [(n, name, check) for n, name, check in CRITERIA if _selected(filter, n, name)]
    print(f"🧪 Running {len(selected)}/{len(CRITERIA)} acceptance criteria...")

    results: List[AcceptanceResult] = []
    for number, name, check in selected:
        limit = constants.ACCEPTANCE_RUNTIMES[name]
        logger.info(f"Criterion {number}: {name}")
        start = time.perf_counter()
        try:
            passed, measured, detail = check()
        except Exception as e:
            passed, measured, detail = False, {}, f"{type(e).__name__}: {e}"
            print(f"\n⚠️  ERROR: Criterion {number} ({name}) failed with error: {e}")
        runtime = time.perf_counter() - start
        if expected is None:
            diff = [problem]
        else:
            diff = diff_expected(expected.get(name, {}), measured)
        if runtime > limit:
            detail += f"; took {runtime:.1f}s of {limit}s"
        results.append(
            AcceptanceResult(
                number=number,
                name=name,
                passed=passed and not diff and runtime <= limit,
                runtime=runtime,
                limit=limit,
                measured=to_jsonable(measured),
                detail=detail,
                diff=diff,
            )
        )
        print(f"Progress: {len(results)}/{len(selected)} criteria checked")

    failures = sum(1 for r in results if not r.passed)
    return {
        "results": results,
        "planned": len(selected),
        "failures": failures,
        "expected_path": str(expected_path),
    }
