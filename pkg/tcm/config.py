# tcm/config.py
"""
Runtime configuration: data directory, secret loading, env flags, logging.

Env vars are read through os.getenv() inside functions so that values set
after import (tests, secret.env) are always honoured.
"""
import logging
import logging.handlers as _logging_handlers
import os
import sys
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

BASE_DIR = Path(__file__).resolve().parent
PROJECT_ROOT = BASE_DIR.parent

LOG_FORMAT = "[%(levelname)s] %(message)s"
FILE_LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"

# Silence chatty third-party loggers
_QUIET_LIBS = ("httpx", "httpcore")

_secrets_loaded = False


def _default_data_dir() -> Path:
    if sys.platform.startswith("win"):
        base = os.getenv("LOCALAPPDATA") or os.getenv("APPDATA") or str(Path.home())
        return Path(base) / "tcm"
    if sys.platform == "darwin":
        return Path.home() / "Library" / "Application Support" / "tcm"
    base = os.getenv("XDG_DATA_HOME") or str(Path.home() / ".local" / "share")
    return Path(base) / "tcm"


def data_dir() -> Path:
    """TCM_DATA_DIR if set, else the platform default. Not created here."""
    return Path(os.getenv("TCM_DATA_DIR") or _default_data_dir())


def load_secrets() -> None:
    """
    Load secret.env once.
    Priority:
    1. <data dir>/secret.env if it exists
    2. <project root>/secret.env
    Existing environment variables are never overridden.
    """
    global _secrets_loaded
    if _secrets_loaded:
        return
    candidate = data_dir() / "secret.env"
    if candidate.exists():
        load_dotenv(dotenv_path=candidate)
    else:
        load_dotenv(dotenv_path=PROJECT_ROOT / "secret.env")
    _secrets_loaded = True


def parse_bool_env(name: str, default: bool = False) -> bool:
    """Parse boolean environment variable (1/true/yes = True, 0/false/no = False)"""
    val = os.getenv(name, "").lower()
    if val in ("1", "true", "yes"):
        return True
    if val in ("0", "false", "no"):
        return False
    return default


def llm_endpoint() -> str:
    return os.getenv("TCM_LLM_ENDPOINT", "").rstrip("/")


def llm_model() -> str:
    return os.getenv("TCM_LLM_MODEL", "")


def llm_api_key() -> str:
    return os.getenv("TCM_LLM_API_KEY", "")


def llm_timeout() -> float:
    raw = os.getenv("TCM_LLM_TIMEOUT", "60")
    try:
        return max(1.0, float(raw))
    except ValueError:
        logging.getLogger(__name__).warning(f"[Config] Ignoring bad TCM_LLM_TIMEOUT={raw!r}")
        return 60.0


def setup_logging(debug: Optional[bool] = None, quiet: bool = False) -> None:
    """
    Install the diagnostic-stream handler (and the optional rotating file
    handler). Safe to call more than once; handlers are replaced, not stacked.
    """
    if debug is None:
        debug = parse_bool_env("TCM_DEBUG", False)

    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_tcm_handler", False):
            root.removeHandler(handler)

    level = logging.DEBUG if debug else (logging.WARNING if quiet else logging.INFO)
    root.setLevel(level)

    stream_handler = logging.StreamHandler(sys.stderr)
    stream_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    stream_handler._tcm_handler = True
    root.addHandler(stream_handler)

    if parse_bool_env("TCM_LOG_TO_FILE", False):
        log_dir = data_dir() / "logs"
        log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = _logging_handlers.RotatingFileHandler(
            log_dir / "tcm.log", maxBytes=10 * 1024 * 1024, backupCount=3, encoding="utf-8"
        )
        file_handler.setFormatter(logging.Formatter(FILE_LOG_FORMAT, datefmt="%Y-%m-%d %H:%M:%S"))
        file_handler._tcm_handler = True
        root.addHandler(file_handler)

    for lib in _QUIET_LIBS:
        logging.getLogger(lib).setLevel(logging.WARNING)
