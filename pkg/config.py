import os

from dotenv import load_dotenv

# Load environment variables from .env file before reading settings
load_dotenv()

def get_env_bool(key: str, default: bool = False) -> bool:
    """
    Get a boolean value from environment variables.
    Accepts: true, yes, 1 (case-insensitive) as True.
    """
    value = os.getenv(key, "").lower()
    if value in ("true", "yes", "1"):
        return True
    if value in ("false", "no", "0"):
        return False
    return default


def get_env_int(key: str, default: int) -> int:
    """Get a positive integer from environment variables, falling back to default."""
    value = os.getenv(key, "").strip()
    try:
        parsed = int(value)
    except ValueError:
        return default
    return parsed if parsed > 0 else default


def output_root(default: str) -> str:
    """Output root for run reports; LOGNLS_OUTPUT_ROOT wins over the config value."""
    return os.getenv("LOGNLS_OUTPUT_ROOT") or default


# Results database configuration
ENABLE_RESULTS_DB = get_env_bool("ENABLE_RESULTS_DB", default=False)
RESULTS_DB_PATH = os.getenv("RESULTS_DB_PATH", "results.db")

# Worker pool for per-epsilon sweeps
SWEEP_WORKERS = get_env_int("SWEEP_WORKERS", default=4)

LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
