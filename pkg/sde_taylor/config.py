"""
Package-wide constants, the key=value config file loader and logging setup.
"""

import logging
import os
from typing import Dict, Optional

from sde_taylor.exceptions import ConfigError


# largest Legendre index the exact coefficient engine will build
MAX_BASIS_INDEX = 16

# C in the approximation condition M{(I - I^q)^2} <= C * dt^(2*gamma+1)
DEFAULT_ERROR_CONSTANT = 1.0

# caps for automatic q selection, keyed by multiplicity (tensor size grows as (q+1)^k)
AUTO_Q_LIMITS = {1: MAX_BASIS_INDEX, 2: MAX_BASIS_INDEX, 3: 8, 4: 4, 5: 2}

CSV_DIGITS = 12

CACHE_ENV_VAR = "SDE_TAYLOR_CACHE"

# paths per random stream block; fixed so results do not depend on worker count
PATH_BLOCK = 1000

DEFAULT_HORIZON = 1.0

LOG_FORMAT = "[%(levelname)s] %(name)s: %(message)s"


def setup_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)


def normalize_key(key: str) -> str:
    return key.strip().lstrip("-").replace("-", "_").lower()


def load_config_file(path: str) -> Dict[str, str]:
    """
    Parse a flat key=value config file.

    Args:
        path: file path

    Returns:
        {normalized key: raw string value}

    Raises:
        ConfigError: unreadable file or a line without '='
    """
    values = {}
    try:
        with open(path, 'r') as f:
            for lineno, line in enumerate(f, start=1):
                line = line.split('#', 1)[0].strip()
                if not line:
                    continue
                if '=' not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got '{line}'")
                key, value = line.split('=', 1)
                key = normalize_key(key)
                if not key:
                    raise ConfigError(f"{path}:{lineno}: empty key")
                values[key] = value.strip()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}")
    return values


def resolve_cache_dir(flag_value: Optional[str] = None) -> Optional[str]:
    """Flag first, then $SDE_TAYLOR_CACHE, otherwise no on-disk cache."""
    if flag_value:
        return flag_value
    env_value = os.environ.get(CACHE_ENV_VAR)
    if env_value:
        return env_value
    return None
