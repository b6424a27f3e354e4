"""
Command option resolution: flags > config file > django settings > defaults.

Config files are flat ``key=value`` files read with python-dotenv. Keys are
the long flag names with ``-`` replaced by ``_`` (``fuse_tol=1e-4``).
"""

import logging
from pathlib import Path
from typing import Any, Callable, Optional

from dotenv import dotenv_values

from .exceptions import ConfigError

logger = logging.getLogger(__name__)


def load_config_file(path: Optional[str]) -> dict:
    if not path:
        return {}
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}", code='E_CONFIG_NOT_FOUND')
    values = {key.strip().lower().replace('-', '_'): value for key, value in dotenv_values(path).items()}
    logger.debug(f"Loaded {len(values)} option(s) from {path}")
    return values


class OptionResolver:
    """Looks an option up in parsed flags first, then in the config file."""

    def __init__(self, options: dict, config: dict, allowed: Optional[set] = None):
        self.options = options
        self.config = config
        if allowed is not None:
            unknown = sorted(set(config) - allowed)
            if unknown:
                raise ConfigError(f"Unknown config key(s): {', '.join(unknown)}", code='E_CONFIG_KEY')

    def get(self, name: str, cast: Callable[[str], Any] = str, default: Any = None) -> Any:
        value = self.options.get(name)
        if value is not None and value is not False:
            return cast(value) if isinstance(value, str) else value
        raw = self.config.get(name)
        if raw is None or raw == '':
            return default
        try:
            return cast(raw)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Bad value for '{name}' in config file: {raw!r} ({e})")


def parse_bool(raw: str) -> bool:
    return str(raw).strip().lower() in ('true', '1', 'yes', 'on')


def parse_float_list(raw: str) -> list[float]:
    try:
        values = [float(part) for part in str(raw).split(',') if part.strip()]
    except ValueError as e:
        raise ConfigError(f"Expected comma-separated numbers, got '{raw}': {e}")
    if not values:
        raise ConfigError("Expected at least one value")
    return values


def parse_range(raw: str) -> list[float]:
    """``min:max:step`` (inclusive) or a comma list."""
    raw = str(raw).strip()
    if ':' not in raw:
        return parse_float_list(raw)
    try:
        low, high, step = (float(part) for part in raw.split(':'))
    except ValueError as e:
        raise ConfigError(f"Expected min:max:step, got '{raw}': {e}")
    if step <= 0 or high < low:
        raise ConfigError(f"Range needs step > 0 and max >= min, got '{raw}'")
    count = int(round((high - low) / step)) + 1
    return [round(low + i * step, 12) for i in range(count) if low + i * step <= high + 1e-12]
