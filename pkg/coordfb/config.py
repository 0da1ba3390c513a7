import os
import logging
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)


def _env(name: str, default: str) -> str:
    return os.getenv(f"COORDFB_{name}", default)


# Numerical tolerances
PROB_TOL = float(_env("PROB_TOL", "1e-12"))  # normalization of tensors and kernels
INFO_TOL = float(_env("INFO_TOL", "1e-9"))  # information identities, admissibility
FILE_TOL = float(_env("FILE_TOL", "1e-9"))  # row-stochastic check on problem files

# Reproducibility
DEFAULT_SEED = int(_env("DEFAULT_SEED", "20150101"))

# Optimizer Configuration
DEFAULT_DELTA = float(_env("DEFAULT_DELTA", "0.01"))
DEFAULT_RESTARTS = int(_env("DEFAULT_RESTARTS", "6"))
DEFAULT_MAX_ITERATIONS = int(_env("DEFAULT_MAX_ITERATIONS", "200"))
DEFAULT_PENALTY_WEIGHT = float(_env("DEFAULT_PENALTY_WEIGHT", "50.0"))
DEFAULT_FEASIBILITY_TOL = float(_env("DEFAULT_FEASIBILITY_TOL", "1e-6"))
DEFAULT_STEP_SIZE = float(_env("DEFAULT_STEP_SIZE", "0.5"))
REPAIR_SWEEPS = int(_env("REPAIR_SWEEPS", "400"))
OPTIMIZER_WORKERS = int(_env("OPTIMIZER_WORKERS", "1"))
ORACLE_MAX_PARAMS = int(_env("ORACLE_MAX_PARAMS", "12"))
ORACLE_MAX_POINTS = int(_env("ORACLE_MAX_POINTS", "2000000"))
ORACLE_CHUNK = int(_env("ORACLE_CHUNK", "16384"))  # grid points evaluated per batch
ORACLE_VERIFY = int(_env("ORACLE_VERIFY", "16"))  # best grid points re-checked exactly
SPLIT_SEED_GRID = int(_env("SPLIT_SEED_GRID", "64"))  # finest seed lattice of the split search
SPLIT_SEED_POINTS = int(_env("SPLIT_SEED_POINTS", "300000"))
SPLIT_SEEDS = int(_env("SPLIT_SEEDS", "8"))
SPLIT_START_STEP = float(_env("SPLIT_START_STEP", "0.0625"))
SPLIT_MIN_STEP = float(_env("SPLIT_MIN_STEP", "0.0009765625"))
SPLIT_STENCIL_MAX = int(_env("SPLIT_STENCIL_MAX", "1024"))  # neighbours tried per pattern move
CARDINALITY_LADDER = int(_env("CARDINALITY_LADDER", "4"))  # solve every smaller alphabet up to this size

# Simulator Configuration
SEARCH_LIMIT = int(_env("SEARCH_LIMIT", "4096"))  # indices examined per codebook search
CODEBOOK_CHUNK = int(_env("CODEBOOK_CHUNK", "256"))
DEFAULT_BLOCK_LENGTH = int(_env("DEFAULT_BLOCK_LENGTH", "200"))
DEFAULT_BLOCKS = int(_env("DEFAULT_BLOCKS", "20"))
DEFAULT_TRIALS = int(_env("DEFAULT_TRIALS", "50"))
DEFAULT_COORD_TOL = float(_env("DEFAULT_COORD_TOL", "0.15"))
TYPICALITY_SIGMAS = float(_env("TYPICALITY_SIGMAS", "2.0"))  # per-cell deviations allowed by derived typicality tolerances

# Logging Configuration
LOG_LEVEL = _env("LOG_LEVEL", "INFO").upper()
LOG_FILE = _env("LOG_FILE", "")
ENABLE_RUN_HISTORY = _env("ENABLE_RUN_HISTORY", "false").lower() == "true"
RUN_HISTORY_FILE = _env("RUN_HISTORY_FILE", "runs.json")


def validate_config() -> bool:
    """Validate that every numeric setting is usable"""
    positive = [
        "PROB_TOL",
        "INFO_TOL",
        "FILE_TOL",
        "DEFAULT_DELTA",
        "DEFAULT_PENALTY_WEIGHT",
        "DEFAULT_FEASIBILITY_TOL",
        "DEFAULT_STEP_SIZE",
        "DEFAULT_COORD_TOL",
        "SPLIT_START_STEP",
        "SPLIT_MIN_STEP",
        "TYPICALITY_SIGMAS",
    ]
    for var in positive:
        if not globals().get(var) > 0:
            logger.error(f"Configuration {var} must be positive, got {globals().get(var)}")
            return False

    at_least_one = [
        "DEFAULT_RESTARTS",
        "DEFAULT_MAX_ITERATIONS",
        "REPAIR_SWEEPS",
        "OPTIMIZER_WORKERS",
        "ORACLE_MAX_PARAMS",
        "ORACLE_MAX_POINTS",
        "ORACLE_CHUNK",
        "ORACLE_VERIFY",
        "SPLIT_SEED_GRID",
        "SPLIT_SEED_POINTS",
        "SPLIT_SEEDS",
        "SPLIT_STENCIL_MAX",
        "CARDINALITY_LADDER",
        "SEARCH_LIMIT",
        "CODEBOOK_CHUNK",
        "DEFAULT_BLOCK_LENGTH",
        "DEFAULT_TRIALS",
    ]
    for var in at_least_one:
        if globals().get(var) < 1:
            logger.error(f"Configuration {var} must be at least 1, got {globals().get(var)}")
            return False

    if DEFAULT_BLOCKS < 2:
        logger.error(f"Configuration DEFAULT_BLOCKS must be at least 2, got {DEFAULT_BLOCKS}")
        return False

    if LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        logger.warning(f"Unknown LOG_LEVEL {LOG_LEVEL}, INFO will be used")

    return True
