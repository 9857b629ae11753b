import json

import pytest

from src.config import constants
from src.config import config as C
from src.core.models import ConfigError, ExperimentKind, SubgroupKind


def test_key_values_with_comments_aliases_and_lists():
    raw = C.parse_key_values(
        "# comment\n"
        "kind = floyd\n"
        "\n"
        "lambda = 0.5, 0.25   # two parameters\n"
        "budget.nodes = 500\n"
        "subgroup.weights = 1:0, 0:1\n"
    )
    assert raw == {
        "kind": "floyd",
        "lam": ["0.5", "0.25"],
        "budget_nodes": "500",
        "subgroup_weights": [["1", "0"], ["0", "1"]],
    }
    config = C.validate_config(raw)
    assert config.kind is ExperimentKind.FLOYD
    assert config.lam == [0.5, 0.25]
    assert config.budget_nodes == 500
    assert config.subgroup_weights == [[1, 0], [0, 1]]


@pytest.mark.parametrize(
    "text,key",
    [
        ("kind = floyd\nthis line has no equals sign\n", "this line has no equals sign"),
        ("kind = floyd\n= 3\n", "line 2"),
        ("kind = floyd\nlambda =\n", "lambda"),
        ("kind = floyd\nlambda = 0.5\nlam = 0.3\n", "lam"),
    ],
)
def test_malformed_lines_name_the_key(text, key):
    with pytest.raises(ConfigError) as info:
        C.parse_key_values(text)
    assert info.value.key == key


@pytest.mark.parametrize(
    "raw,key",
    [
        ({"kind": "floyd", "colour": "red", "lam": ["0.5"]}, "colour"),
        ({"kind": "myrberg", "stages": "many"}, "stages"),
        ({"kind": "floyd", "lam": ["1.5"]}, "lambda"),
        ({"kind": "qrtree", "L": ["4", "3"]}, "L"),
        ({"kind": "myrberg", "stages": "3", "budget_nodes": "0"}, "budget.nodes"),
        ({"kind": "arcs", "core": "theta", "loop": ["0", "3"]}, "t_max"),
        ({"kind": "nonconical", "h": "b", "stages": "2"}, "subgroup_kind"),
        ({"kind": "orbit"}, "kind"),
    ],
)
def test_invalid_configs_name_the_key(raw, key):
    with pytest.raises(ConfigError) as info:
        C.validate_config(raw)
    assert info.value.key == key


@pytest.mark.parametrize("kind", constants.EXPERIMENT_KINDS)
def test_shipped_configs_load(kind):
    config = C.load_config(constants.CONFIGS_DIR / f"{kind}.conf")
    assert config.kind.value == kind


def test_json_config_is_flattened(tmp_path):
    path = tmp_path / "nonconical.json"
    path.write_text(
        json.dumps(
            {
                "kind": "nonconical",
                "subgroup": {"kind": "kernel_z", "weights": [1, 0]},
                "h": "b",
                "stages": 2,
                "budget": {"nodes": 1000},
            }
        )
    )
    config = C.load_config(path)
    assert config.subgroup_kind is SubgroupKind.KERNEL_Z
    assert config.budget_nodes == 1000
    assert config.subgroup().weights == [1, 0]


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError) as info:
        C.load_config(tmp_path / "absent.conf")
    assert info.value.key == "config"


def test_config_hash_ignores_output_and_threads():
    base = C.validate_config({"kind": "myrberg", "stages": "3"})
    moved = C.apply_overrides(base, output_dir="/tmp/elsewhere", threads=4)
    reseeded = C.apply_overrides(base, seed=1)
    assert moved.threads == 4
    assert C.config_hash(base) == C.config_hash(moved)
    assert C.config_hash(base) != C.config_hash(reseeded)
    assert len(C.config_hash(base)) == 64


def test_apply_overrides_skips_none_and_revalidates():
    base = C.validate_config({"kind": "floyd", "lam": ["0.5"]})
    assert C.apply_overrides(base, lam=None, threads=None) is base
    with pytest.raises(ConfigError):
        C.apply_overrides(base, lam=[2.0])


def test_runner_defaults_fallback(tmp_path, capsys):
    defaults = C.load_runner_defaults(str(tmp_path / "missing.json"))
    assert defaults == constants.RUNNER_DEFAULTS
    assert "not found" in capsys.readouterr().out

    path = tmp_path / "experiment_config.json"
    path.write_text(json.dumps({"runner_config": {"verbose": True}}))
    merged = C.load_runner_defaults(str(path))
    assert merged["runner_config"]["verbose"] is True
    assert merged["runner_config"]["threads"] == 1
    assert merged["folder_naming"] == constants.RUNNER_DEFAULTS["folder_naming"]


def test_output_dir_precedence(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(constants.ENV_OUTPUT_DIR, raising=False)
    config = C.validate_config({"kind": "myrberg", "stages": "3", "output_dir": "from_config"})
    assert str(C.resolve_output_dir(None)) == constants.DEFAULT_OUTPUT_DIR
    assert str(C.resolve_output_dir(None, config)) == "from_config"
    monkeypatch.setenv(constants.ENV_OUTPUT_DIR, "from_env")
    assert str(C.resolve_output_dir(None, config)) == "from_env"
    assert str(C.resolve_output_dir("from_cli", config)) == "from_cli"
