"""Gateway configuration: JSON file, LEISA_* environment overrides, CLI flags.

Precedence, lowest to highest: built-in defaults, config file, environment,
explicit overrides (CLI).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping


@dataclass
class GatewayConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8450
    storage_root: str = "leisa-data"
    schema_dir: str | None = None
    admin_username: str | None = None
    admin_password: str | None = None
    pbkdf2_iterations: int = 50_000
    consume_wait_default: float = 30.0
    consume_wait_max: float = 300.0
    consume_max_default: int = 100
    consume_max_limit: int = 1000

    @property
    def broker_root(self) -> Path:
        return Path(self.storage_root) / "broker"

    @property
    def registry_db(self) -> Path:
        return Path(self.storage_root) / "registry.db"


_ENV_PREFIX = "LEISA_"


def _coerce(value: str, target_type: Any) -> Any:
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    return value


def load_config(path: str | Path | None = None,
                env: Mapping[str, str] | None = None,
                overrides: Mapping[str, Any] | None = None) -> GatewayConfig:
    cfg = GatewayConfig()
    field_types = {f.name: f.type for f in fields(GatewayConfig)}

    if path is not None:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        for key, value in doc.items():
            if key not in field_types:
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg, key, value)

    env = os.environ if env is None else env
    for name in field_types:
        env_key = _ENV_PREFIX + name.upper()
        if env_key in env:
            base = type(getattr(GatewayConfig(), name) or "")
            setattr(cfg, name, _coerce(env[env_key], base))

    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg
