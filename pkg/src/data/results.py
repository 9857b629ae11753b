"""
Results display for quasi-radial tree experiments.
Handles console output of run records and the acceptance table.
"""

from typing import Any, Dict

from src.core.models import RunRecord


def _short(value: Any, width: int = 60) -> str:
    text = str(value)
    return text if len(text) <= width else text[: width - 3] + "..."


def print_run_results(record: RunRecord) -> None:
    """Print the verdicts and headline numbers of one run."""

    print("\n" + "=" * 80)
    print(f"🏆 {record.kind.value.upper()} RESULTS")
    print("=" * 80)

    if record.failed_step is not None:
        print(f"\n⚠️  Run Status: PARTIAL COMPLETION")
        print(f"Failed at Step: {record.failed_step}")
        print(f"Error: {record.error}")
    elif record.truncated:
        print(f"\n⚠️  Run Status: TRUNCATED BY BUDGET")
    else:
        print(f"\n✅ Run Status: COMPLETED SUCCESSFULLY")
    print(f"Config Hash: {record.config_hash}")
    print(f"Wall Clock: {record.wall_clock:.2f}s")

    print("\n" + "🧾 VERDICTS".center(80))
    print("-" * 80)
    if not record.verdicts:
        print("No verdicts recorded.")
    for name, passed in sorted(record.verdicts.items()):
        print(f"{'✅' if passed else '❌'} {name}")

    print("\n" + "📊 REPORTS".center(80))
    print("-" * 80)
    for name, report in record.reports.items():
        if isinstance(report, dict):
            print(f"\n{name}:")
            for key, value in report.items():
                print(f"  • {key}: {_short(value)}")
        else:
            print(f"\n{name}: {_short(report)}")


def print_acceptance_results(summary: Dict[str, Any]) -> None:
    """Print the acceptance table and any diffs against the expected values."""

    results = summary["results"]

    print("\n" + "=" * 80)
    print("🏆 ACCEPTANCE RESULTS")
    print("=" * 80)

    if summary["failures"]:
        print(f"\n⚠️  Acceptance Status: {summary['failures']} FAILURE(S)")
    else:
        print(f"\n✅ Acceptance Status: ALL {summary['planned']} CRITERIA PASSED")
    print(f"Expected Values: {summary['expected_path']}")

    print("\n" + "📋 CRITERIA".center(80))
    print("-" * 80)
    print(f"{'#':<3} {'Criterion':<15} {'Status':<8} {'Time':<10} {'Detail'}")
    print("-" * 80)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        timing = f"{r.runtime:.1f}/{r.limit:.0f}s"
        print(f"{r.number:<3} {r.name:<15} {status:<8} {timing:<10} {_short(r.detail, 40)}")

    diffs = [r for r in results if r.diff]
    if diffs:
        print("\n" + "🔍 EXPECTED VALUE DIFFS".center(80))
        print("-" * 80)
        for r in diffs:
            print(f"\n{r.name}:")
            for line in r.diff:
                print(f"  • {line}")
