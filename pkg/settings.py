"""
Persistent settings manager — reads/writes a JSON settings file and builds
the per-run configuration the CLI and the dashboard hand to the engine.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

from errors import ConfigError

SETTINGS_PATH = Path(os.getenv("XQFLOW_SETTINGS", Path.home() / ".xqflow" / "settings.json"))

ENGINES = ("parallel", "naive")
WORKER_MODES = ("process", "thread", "inline")
MIN_FRAME_SIZE = 4096

_DEFAULTS: dict[str, Any] = {
    "data_root": "",
    "partitions": 1,
    "frame_size": 65536,
    "memory_budget": 32 * 1024 * 1024,
    "scratch_dir": tempfile.gettempdir(),
    "workers": "process",
    "queue_frames": 8,
    "engine": "parallel",
    "log_level": "WARNING",
    "timezone": "UTC",
}


def _ensure_file() -> None:
    """Create the settings file with defaults if it doesn't exist."""
    try:
        SETTINGS_PATH.parent.mkdir(parents=True, exist_ok=True)
        if not SETTINGS_PATH.exists():
            SETTINGS_PATH.write_text(json.dumps(_DEFAULTS, indent=2))
    except OSError:
        # read-only home: fall back to defaults in memory
        pass


def load_settings() -> dict[str, Any]:
    """Return the full settings dict, back-filling any missing keys."""
    _ensure_file()
    try:
        data = json.loads(SETTINGS_PATH.read_text())
    except (json.JSONDecodeError, OSError):
        data = {}
    for key, default in _DEFAULTS.items():
        data.setdefault(key, default)
    return data


def save_settings(data: dict[str, Any]) -> None:
    """Persist the settings dict to disk."""
    config = RunConfig.from_settings(data)
    config.validate()
    _ensure_file()
    SETTINGS_PATH.write_text(json.dumps(data, indent=2))


def get(key: str) -> Any:
    """Get a single setting value."""
    return load_settings().get(key, _DEFAULTS.get(key))


# ── Run configuration ────────────────────────────────────────────────

@dataclass(frozen=True)
class RunConfig:
    data_root: str = ""
    partitions: int = 1
    frame_size: int = 65536
    memory_budget: int = 32 * 1024 * 1024
    scratch_dir: str = field(default_factory=tempfile.gettempdir)
    workers: str = "process"
    queue_frames: int = 8
    engine: str = "parallel"
    pushdown: bool = True
    log_level: str = "WARNING"

    @classmethod
    def from_settings(cls, data: dict[str, Any] | None = None, **overrides: Any) -> "RunConfig":
        """Settings file values, then any non-None ``overrides`` (CLI flags)."""
        data = load_settings() if data is None else data
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        known.update({k: v for k, v in overrides.items() if v is not None})
        try:
            config = cls(**known)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return config

    def with_(self, **changes: Any) -> "RunConfig":
        return replace(self, **changes)

    def validate(self) -> "RunConfig":
        if int(self.partitions) < 1:
            raise ConfigError(f"partitions must be at least 1, got {self.partitions}")
        if int(self.frame_size) < MIN_FRAME_SIZE:
            raise ConfigError(f"frame size must be at least {MIN_FRAME_SIZE}, got {self.frame_size}")
        if int(self.memory_budget) <= 0:
            raise ConfigError("memory budget must be positive")
        if int(self.queue_frames) < 1:
            raise ConfigError(f"queue frames must be at least 1, got {self.queue_frames}")
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {', '.join(ENGINES)}")
        if self.workers not in WORKER_MODES:
            raise ConfigError(f"workers must be one of {', '.join(WORKER_MODES)}")
        return self

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)
