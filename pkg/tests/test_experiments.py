import json
import math
from pathlib import Path

import pytest

from src.config.config import validate_config
from src.core.models import ConfigError, ExperimentKind
from src.core.qrtree import cayley_tree
from src.simulation import experiments as E


def cogrowth_config(**extra):
    return validate_config({"kind": "cogrowth", "cores": ["theta"], **extra})


def test_cogrowth_run_on_theta(tmp_path):
    record = E.run(cogrowth_config(), out_dir=str(tmp_path))
    assert record.passed
    assert record.failed_step is None
    assert abs(record.reports["core:theta"]["omega"] - math.log(2)) <= 1e-9
    assert record.verdicts == {"cogrowth:theta": True, "grigorchuk:theta": True}

    files = {Path(p).name for p in record.outputs}
    short = record.config_hash[:8]
    assert f"cogrowth_{short}_cogrowth.csv" in files
    assert f"cogrowth_{short}_summary.csv" in files
    assert f"cogrowth_{short}_nb_counts_theta.dat" in files
    assert "theta.edges" in files
    for path in record.outputs:
        assert Path(path).exists()

    saved = json.loads(Path(record.outputs[-1]).read_text())
    assert saved["config_hash"] == record.config_hash
    assert saved["verdicts"] == {"cogrowth:theta": True, "grigorchuk:theta": True}


def test_runs_are_reproducible(tmp_path):
    config = cogrowth_config()
    first = E.run(config, out_dir=str(tmp_path / "a"))
    second = E.run(config, out_dir=str(tmp_path / "b"))
    assert first.exact_fields() == second.exact_fields()


def test_plots_can_be_switched_off(tmp_path):
    record = E.run(cogrowth_config(), out_dir=str(tmp_path), write_plots=False)
    assert not any(p.endswith(".dat") for p in record.outputs)


def test_unknown_core_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError) as info:
        E.run(cogrowth_config(cores=["nowhere"]), out_dir=str(tmp_path))
    assert info.value.key == "core"


def test_failing_step_leaves_partial_record(tmp_path, monkeypatch):
    def explode(ctx):
        raise RuntimeError("ran out of words")

    def steps(config):
        return E.cogrowth_steps(config) + [("explode", explode)]

    monkeypatch.setitem(E.RUNNERS, ExperimentKind.COGROWTH, steps)
    record = E.run(cogrowth_config(), out_dir=str(tmp_path))
    assert not record.passed
    assert record.failed_step == "explode"
    assert "ran out of words" in record.error
    assert "core:theta" in record.reports
    assert record.outputs[-1].endswith("_partial_record.json")
    assert Path(record.outputs[-1]).exists()


def test_custom_folder_naming(tmp_path):
    folder = {"custom_folder_name": "sweep", "use_custom_only": True}
    record = E.run(cogrowth_config(), out_dir=str(tmp_path), folder_config=folder)
    assert Path(record.outputs[0]).parent == tmp_path / "sweep"


def test_qrtree_run(tmp_path):
    config = validate_config({"kind": "qrtree", "L": ["3", "4"], "delta": "0", "tau": "0"})
    record = E.run(config, out_dir=str(tmp_path))
    assert record.failed_step is None
    assert not record.truncated
    audits = {k: v for k, v in record.verdicts.items() if k.startswith("audit:")}
    assert audits and all(audits.values())
    short = record.config_hash[:8]
    tree_csv = tmp_path.glob(f"**/qrtree_{short}_tree.csv")
    (path,) = list(tree_csv)
    assert path.read_text().splitlines()[0] == "node_id,parent_id,stage,word,dist_root"
    assert record.verdicts["growth"]
    assert "series_growth" in record.reports


def test_nonconical_run(tmp_path):
    config = validate_config(
        {
            "kind": "nonconical",
            "subgroup_kind": "kernel_z",
            "subgroup_weights": ["1", "0"],
            "h": "b",
            "stages": "2",
            "L": ["8", "10"],
            "delta": "1",
            "wrap": "1",
            "budget_nodes": "100000",
        }
    )
    record = E.run(config, out_dir=str(tmp_path))
    assert record.failed_step is None
    assert record.verdicts["escape"]
    assert [row["W_hat"] for row in record.reports["schedule"]["stages"]] == [10, 13]


def test_finite_rate_of_cayley_ball():
    rate = E.finite_rate(cayley_tree(2, 4))
    assert rate == pytest.approx(math.log(4 * 27) / 4)


def test_cogrowth_row_fields(tmp_path):
    record = E.run(cogrowth_config(), out_dir=str(tmp_path))
    row = record.reports["core:theta"]
    assert row["core_id"] == "theta"
    assert row["d"] == 3
    assert row["r_formula"] == pytest.approx(1.0)
    assert 0 < row["r_mc"] <= 1.0
    assert row["folner_best"] is not None
    assert row["oracle"] is True


def test_nonconical_counted_run_reaches_log3(tmp_path):
    config = validate_config(
        {
            "kind": "nonconical",
            "subgroup_kind": "kernel_z",
            "subgroup_weights": ["1", "0"],
            "h": "b",
            "stages": "100",
            "L": [str(L) for L in range(8, 208, 2)],
            "delta": "0",
            "wrap": "1",
            "budget_nodes": "100000",
        }
    )
    record = E.run(config, out_dir=str(tmp_path))
    assert record.failed_step is None
    assert record.verdicts["growth"]
    assert record.reports["series_growth"]["bracket"][0] >= math.log(3) - 0.15
    assert record.reports["growth_target"]["target"] == pytest.approx(math.log(3))
    assert record.verdicts["audit:shadow_laminarity"]


def test_myrberg_run_writes_witnesses(tmp_path):
    config = validate_config({"kind": "myrberg", "stages": "3", "horizon": "3", "samples": "4", "budget_nodes": "20000"})
    record = E.run(config, out_dir=str(tmp_path))
    assert record.failed_step is None
    assert record.verdicts["certificates"]
    assert "series_growth" in record.reports
    short = record.config_hash[:8]
    (path,) = list(tmp_path.glob(f"**/myrberg_{short}_witnesses.csv"))
    lines = path.read_text().splitlines()
    assert lines[0] == "sample,b,index,witness_position,diameter"
    assert len(lines) == 1 + 4 * 3


def test_arc_rows_carry_rates(tmp_path):
    config = validate_config({"kind": "arcs", "core": "theta", "loop": ["0", "3"], "t_min": "8", "t_max": "10"})
    record = E.run(config, out_dir=str(tmp_path))
    short = record.config_hash[:8]
    (path,) = list(tmp_path.glob(f"**/arcs_{short}_arcs.csv"))
    header, first = path.read_text().splitlines()[:2]
    assert header == "t,count,rate,scaled"
    t, count, rate = first.split(",")[:3]
    assert float(rate) == pytest.approx(math.log(int(count)) / int(t))


def test_floyd_run_on_myrberg_tree(tmp_path):
    config = validate_config({"kind": "floyd", "lam": ["0.5"], "samples": "20", "n": "6"})
    record = E.run(config, out_dir=str(tmp_path))
    assert record.failed_step is None
    assert record.verdicts["floyd_myrberg_dimension:0.5"]
    assert record.verdicts["floyd_kappa:0.5"]
    assert "floyd_myrberg_dimension:0.5" in record.reports


def test_schreier_run_reports_tree_floor(tmp_path):
    config = cogrowth_config(
        cores=["theta"], subgroup_kind="kernel_z", subgroup_weights=["1", "0"], n="16", srw_steps="256"
    )
    record = E.run(config, out_dir=str(tmp_path))
    assert record.failed_step is None
    row = record.reports["schreier"]
    assert 0 < row["tree_floor"] <= 1.0
    assert record.verdicts.get("tree_floor", True)
    short = record.config_hash[:8]
    (path,) = list(tmp_path.glob(f"**/cogrowth_{short}_schreier_spheres.csv"))
    lines = path.read_text().splitlines()
    assert lines[0] == "radius,vertices"
    assert lines[1] == "0,1"


def test_dimension_run_writes_cylinders(tmp_path):
    config = validate_config({"kind": "dimension", "L": ["3", "4"], "delta": "0", "tau": "0", "s_fraction": "0.5"})
    record = E.run(config, out_dir=str(tmp_path))
    assert record.failed_step is None
    assert record.verdicts["mass_flow"]
    short = record.config_hash[:8]
    (path,) = list(tmp_path.glob(f"**/dimension_{short}_cylinders.csv"))
    assert len(path.read_text().splitlines()) > 1
