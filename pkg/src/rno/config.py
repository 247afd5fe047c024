"""Scenario files: YAML with a versioned schema.

Layout::

    schema_version: 1
    scenario:
      id: desk
      trials: 20
      seed_base: 0
      metric: rate          # or ee
      schemes: [IR_IN, PR_IN]
      sweep: {var: power, grid: [1.0, 10.0]}
      solver: {eps: 1.0e-3, max_iter: 25}
    network:
      L: 2
      K: 2
      ...

The environment variable ``RNO_SEED`` overrides ``scenario.seed_base``.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import yaml
from pydantic import ValidationError

from .experiments import Scenario
from .model import RNOError

SCHEMA_VERSION = 1
SEED_ENV = "RNO_SEED"


class ConfigError(RNOError):
    """Invalid scenario file; ``errors`` lists ``{"loc": ..., "msg": ...}`` records."""

    def __init__(self, message: str, errors: list[dict] | None = None):
        super().__init__(message)
        self.errors = errors or [{"loc": "", "msg": message}]

    def record(self) -> dict:
        return {"error": "invalid_config", "message": str(self), "fields": self.errors}


def _field_errors(exc: ValidationError, prefix: str = "") -> list[dict]:
    out = []
    for e in exc.errors():
        loc = ".".join(str(x) for x in e["loc"])
        out.append({"loc": f"{prefix}{loc}", "msg": e["msg"]})
    return out


def scenario_from_dict(data: dict, *, env: dict | None = None) -> Scenario:
    env = os.environ if env is None else env
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}",
                          [{"loc": "schema_version", "msg": f"expected {SCHEMA_VERSION}"}])
    unknown = set(data) - {"schema_version", "scenario", "network"}
    if unknown:
        raise ConfigError("unknown top-level keys", [{"loc": k, "msg": "extra fields not permitted"} for k in sorted(unknown)])
    body = dict(data.get("scenario") or {})
    body["network"] = data.get("network") or {}
    if env.get(SEED_ENV):
        try:
            body["seed_base"] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer", [{"loc": SEED_ENV, "msg": "not an integer"}])
    try:
        return Scenario.model_validate(body)
    except ValidationError as exc:
        errs = []
        for e in _field_errors(exc):
            loc = e["loc"]
            e["loc"] = loc if loc.startswith("network") else f"scenario.{loc}" if loc else "scenario"
            errs.append(e)
        raise ConfigError("config validation failed", errs) from None
    except RNOError as exc:
        raise ConfigError(str(exc)) from None


def load_scenario(path, *, env: dict | None = None) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    return scenario_from_dict(data, env=env)


def scenario_to_dict(scenario: Scenario) -> dict:
    body = scenario.model_dump(mode="json")
    network = body.pop("network")
    return {"schema_version": SCHEMA_VERSION, "scenario": body, "network": network}


def dump_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False)


def config_hash(scenario: Scenario) -> str:
    canon = json.dumps(scenario_to_dict(scenario), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
