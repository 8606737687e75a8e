"""Service configuration: defaults, one JSON config file, and environment
overrides (PERMCIRCLE_*), in that order of precedence."""

from __future__ import annotations

import json
import os
import secrets
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

ENV_PREFIX = "PERMCIRCLE_"


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8400
    data_dir: Path = Path("data")
    # None means the bundled data files.
    permissions_path: Optional[Path] = None
    pro_tips_path: Optional[Path] = None
    pro_tip_period_days: float = 7.0
    # Seconds between scheduler passes; 0 disables the timer loop.
    pro_tip_check_interval_s: float = 600.0
    # Empty means: generate once and persist under data_dir, so actor hashes
    # stay linkable across restarts.
    telemetry_salt: str = ""
    token_ttl_days: float = 30.0
    webui_dir: Optional[Path] = None

    @property
    def db_path(self) -> Path:
        return self.data_dir / "permcircle.db"

    @property
    def telemetry_path(self) -> Path:
        return self.data_dir / "telemetry.ndjson"


_PATH_FIELDS = {"data_dir", "permissions_path", "pro_tips_path", "webui_dir"}
_INT_FIELDS = {"port"}
_FLOAT_FIELDS = {"pro_tip_period_days", "pro_tip_check_interval_s", "token_ttl_days"}


def _coerce(name: str, value):
    if value is None:
        return None
    if name in _PATH_FIELDS:
        return Path(value)
    if name in _INT_FIELDS:
        return int(value)
    if name in _FLOAT_FIELDS:
        return float(value)
    return value


def load_config(
    path: str | os.PathLike | None = None,
    env: Optional[dict] = None,
    **overrides,
) -> ServerConfig:
    """Build a ServerConfig from defaults, a JSON file, env vars, and kwargs."""
    env = os.environ if env is None else env
    values: dict = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
        unknown = set(data) - {f.name for f in fields(ServerConfig)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(data)
    for f in fields(ServerConfig):
        env_name = ENV_PREFIX + f.name.upper()
        if env_name in env:
            values[f.name] = env[env_name]
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    coerced = {name: _coerce(name, value) for name, value in values.items()}
    return ServerConfig(**coerced)


def resolve_telemetry_salt(config: ServerConfig) -> str:
    """The configured salt, or one generated once and kept under data_dir."""
    if config.telemetry_salt:
        return config.telemetry_salt
    salt_file = config.data_dir / "telemetry_salt"
    if salt_file.exists():
        return salt_file.read_text("utf-8").strip()
    salt = secrets.token_hex(16)
    salt_file.parent.mkdir(parents=True, exist_ok=True)
    salt_file.write_text(salt, "utf-8")
    return salt
