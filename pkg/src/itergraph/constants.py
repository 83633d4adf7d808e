"""Constants used by itergraph."""

from pathlib import Path

# Process exit codes, one per failure family.
INVALID_CONFIG_RC = 2
NUMERIC_ERROR_RC = 3
DATASET_ERROR_RC = 4
DIVERGENCE_RC = 5
GRADCHECK_FAILED_RC = 6

# Floor applied to degree/anchor normalizers and added inside the log barrier.
GUARD = 1e-12

# Recovery oracles materialize n x n matrices; refuse anything larger.
ORACLE_MAX_NODES = 500

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

HIDDEN_SIZE = 16
DEFAULT_LR = 0.01
DEFAULT_WEIGHT_DECAY = 5e-4
DEFAULT_DROPOUT = 0.5
DEFAULT_EPOCHS = 1000
DEFAULT_PATIENCE = 100
DEFAULT_BATCH_SIZE = 16

VARIANTS = ("idgl", "idgl-anch")

# Train/dev/test sizes published for each benchmark.
STANDARD_SPLITS: dict[str, tuple[int, int, int]] = {
    "cora": (140, 500, 1000),
    "citeseer": (120, 500, 1000),
    "pubmed": (60, 500, 1000),
    "wine": (10, 20, 158),
    "cancer": (10, 20, 539),
    "digits": (50, 100, 1647),
}

TABULAR_DATASETS = ("wine", "cancer", "digits")
CITATION_DATASETS = ("cora", "citeseer", "pubmed")

DATA_DIR_ENV = "ITERGRAPH_DATA_DIR"
DEFAULT_DATA_DIR = Path("data")

PACKAGE_DATA = Path(__file__).parent / "data"
PRESETS_FILE = PACKAGE_DATA / "presets.yml"
CONFIG_SCHEMA_FILE = PACKAGE_DATA / "config.schema.json"

# Add-mode perturbation switches to streaming pair sampling above this size.
STREAMING_PERTURB_NODES = 2000
