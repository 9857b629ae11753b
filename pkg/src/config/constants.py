import math
from pathlib import Path

ARTIFACT_VERSION = "0.1.0"

REPO_ROOT = Path(__file__).resolve().parent.parent.parent
CORES_DIR = REPO_ROOT / "cores"
CONFIGS_DIR = REPO_ROOT / "configs"
EXPECTED_VALUES_PATH = REPO_ROOT / "configs" / "expected_values.json"

DEFAULT_OUTPUT_DIR = "results"
ENV_OUTPUT_DIR = "QRTREE_OUTPUT_DIR"

DEFAULT_EPSILON = 1.0
DEFAULT_LAMBDAS = [0.5, math.exp(-1)]

EXPERIMENT_KINDS = [
    "cogrowth",
    "arcs",
    "qrtree",
    "nonconical",
    "myrberg",
    "floyd",
    "dimension",
]

# Shipped cores with the loop used for arc experiments (directed edge ids)
SHIPPED_CORES = {
    "bouquet": [0],
    "theta": [0, 3],
    "barbell": [0],
    "cycle": [0, 2, 4, 6],
    "random3": [0, 6, 14, 16, 3],
}

# Keys a config must set for each experiment kind
REQUIRED_KEYS = {
    "cogrowth": ["cores"],
    "arcs": ["core", "loop", "t_max"],
    "qrtree": ["L"],
    "nonconical": ["subgroup_kind", "subgroup_weights", "h", "stages"],
    "myrberg": ["stages"],
    "floyd": ["lam"],
    "dimension": ["L", "s_fraction"],
}

# Flat keys read as comma-separated lists
LIST_KEYS = ["cores", "loop", "subgroup_weights", "subgroup_generators", "L", "lam"]

# Dotted config keys that differ from the field name after "." -> "_"
KEY_ALIASES = {
    "lambda": "lam",
    "budget.nodes": "budget_nodes",
    "budget.seconds": "budget_seconds",
    "output.dir": "output_dir",
}

RUNNER_DEFAULTS = {
    "folder_naming": {
        "custom_folder_name": None,
        "folder_suffix": None,
        "use_custom_only": False,
    },
    "runner_config": {
        "verbose": False,
        "threads": 1,
        "write_plots": True,
    },
}

# Acceptance thresholds
COGROWTH_TOLERANCE = 0.05
COGROWTH_LENGTHS = (10, 20)
COGROWTH_ORACLE_LENGTH = 6
COGROWTH_SRW_STEPS = 2**10
TREE_RETURN_STEPS = 64
SRW_STEPS = 2**14
SRW_LINE_FLOOR = 0.97
SRW_TREE_STEPS = 2**12
SRW_TREE_TOLERANCE = 0.02
ARC_T_RANGE = (8, 18)
ARC_BRACKET_RATIO = 20.0
DOUBLE_COSET_MAX_N = 6
DIMENSION_S_FRACTION = 0.9
# straight stages ending in b: |A_n| = (3^L + (-1)^L + 2) / 4, so omega_n -> log 3
DIMENSION_L = (13, 14, 15, 16)
DIMENSION_NODE_LIMIT = 1_000_000
DIMENSION_SLOPE_TOLERANCE = 0.1
NONCONICAL_GROWTH_TOLERANCE = 0.15
# Delta = 0 escaping stages L_n = 8, 10, ..., 206 on the line with loops
NONCONICAL_L = tuple(range(8, 208, 2))
NONCONICAL_WRAP = 1
NONCONICAL_NODE_BUDGET = 100_000
GROWTH_TOLERANCE = 0.1
MYRBERG_HORIZON = 12
MYRBERG_SAMPLES = 100
MYRBERG_NODE_BUDGET = 100_000
FLOYD_TRIALS = 1000
FLOYD_SLOPE_TOLERANCE = 0.1
# two-stage Myrberg tree for the Floyd box counting and the kappa audit
FLOYD_MYRBERG_STAGES = 2
FLOYD_MYRBERG_L_MIN = 8
FLOYD_KAPPA = 1.0
STRUCTURAL_DEPTH = 6
STRUCTURAL_NODE_BUDGET = 20_000

# Per-criterion wall-clock limits in seconds
ACCEPTANCE_RUNTIMES = {
    "cogrowth": 10,
    "grigorchuk": 60,
    "arc_growth": 120,
    "double_cosets": 60,
    "dimension": 300,
    "nonconical": 300,
    "myrberg": 60,
    "floyd": 180,
    "structural": 120,
}
