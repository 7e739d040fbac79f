"""Run-wide settings read from the ``settings:`` block of config.yml."""
import logging
import os
from dataclasses import dataclass, fields

import yaml

from .errors import ConfigError

logger = logging.getLogger(__name__)

CONFIG_ENV = "CONTACTLAB_CONFIG"
DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config.yml")

# config.yml key -> attribute name
KEY_MAP = {
    "threads": "threads",
    "oracleCap": "oracle_cap",
    "auditInterval": "audit_interval",
    "timezone": "timezone",
    "logLevel": "log_level",
    "outputDir": "output_dir",
    "probabilityReplicas": "probability_replicas",
    "timeReplicas": "time_replicas",
}


@dataclass(frozen=True)
class Settings:
    threads: int = 0
    oracle_cap: int = 200
    audit_interval: int = 65536
    timezone: str = "UTC"
    log_level: str = "INFO"
    output_dir: str = "results"
    probability_replicas: int = 10000
    time_replicas: int = 1000

    def worker_count(self):
        """Threads to use for replica pools."""
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)


def load_settings(path=None):
    """Read settings from ``path``, $CONTACTLAB_CONFIG or the bundled config.yml.

    A missing file yields the built-in defaults; unknown keys are errors.
    """
    path = path or os.environ.get(CONFIG_ENV) or DEFAULT_CONFIG_PATH
    if not os.path.exists(path):
        logger.info(f"No settings file at {path}, using defaults")
        return Settings()
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Failed to parse {path}: {e}") from e

    block = document.get("settings") or {}
    if not isinstance(block, dict):
        raise ConfigError(f"'settings' in {path} must be a mapping", key="settings")

    defaults = {f.name: f.default for f in fields(Settings)}
    values = {}
    for key, value in block.items():
        if key not in KEY_MAP:
            raise ConfigError(f"Unknown settings key '{key}' in {path}", key=key)
        name = KEY_MAP[key]
        expected = type(defaults[name])
        if expected is int and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigError(f"Settings key '{key}' must be an integer", key=key)
        if expected is str and not isinstance(value, str):
            raise ConfigError(f"Settings key '{key}' must be a string", key=key)
        values[name] = value
    settings = Settings(**values)
    if settings.oracle_cap < 1 or settings.audit_interval < 1:
        raise ConfigError("oracleCap and auditInterval must be positive")
    logger.debug(f"Loaded settings from {path}: {settings}")
    return settings


_current = None


def get_settings():
    """Process-wide settings, loaded on first use."""
    global _current
    if _current is None:
        _current = load_settings()
    return _current


def set_settings(settings):
    global _current
    _current = settings
