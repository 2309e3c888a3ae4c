"""Run configuration: a versioned JSON schema with environment and flag overrides.

Precedence, lowest first: defaults, config file, environment (directories
only), command-line flags.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

from .coefficients import PotentialConfig
from .errors import ConfigError

SCHEMA_VERSION = 1
ENV_CACHE = "LANDAU_LAB_CACHE_DIR"
ENV_OUTPUT = "LANDAU_LAB_OUTPUT_DIR"

# directories do not change results, so they stay out of the provenance hash
_LOCATION_FIELDS = ("cache_dir", "output_dir")


@dataclass(frozen=True)
class RunConfig:
    gamma: float = -1.0
    D: int = 10
    m_max: int = 4
    T: float = 2.0
    n_snapshots: int = 40
    t_min: float = 1e-4
    seed: int = 2024
    quad_tol: float = 1e-9
    r_max: float = 40.0
    resolve_tol: float = 0.05
    window: tuple[float, float] = (0.0, 1.0)
    estimate_D: int = 6
    estimate_m_max: int = 2
    beta_max: int = 4
    n_samples: int = 100
    probe_points: int = 64
    probe_radius: float = 30.0
    cache_dir: str = ".landau_cache"
    output_dir: str = "landau_out"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "window", tuple(float(x) for x in self.window))
        self.validate()

    def validate(self) -> None:
        PotentialConfig(self.gamma)  # raises ConfigError outside (-3, 0)
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema_version {self.schema_version}; expected {SCHEMA_VERSION}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        if self.m_max < 0 or self.estimate_m_max < 0 or self.beta_max < 0:
            raise ConfigError("derivative orders must be >= 0")
        if self.D < self.m_max + 2:
            raise ConfigError(f"D={self.D} leaves no headroom: need D >= m_max + 2 = {self.m_max + 2}")
        if self.estimate_D < self.estimate_m_max + 2:
            raise ConfigError(f"estimate_D={self.estimate_D} needs to be >= estimate_m_max + 2")
        if not self.T > 0:
            raise ConfigError("T must be > 0")
        if not 0 < self.t_min < self.T:
            raise ConfigError("t_min must satisfy 0 < t_min < T")
        if self.n_snapshots < 4:
            raise ConfigError("n_snapshots must be >= 4")
        if not 0 < self.resolve_tol < 1:
            raise ConfigError("resolve_tol must be in (0, 1)")
        if len(self.window) != 2 or not self.window[0] < self.window[1]:
            raise ConfigError("window must be an increasing pair")
        if self.n_samples < 1 or self.probe_points < 1:
            raise ConfigError("sample counts must be >= 1")
        if not 0 < self.probe_radius < self.r_max:
            raise ConfigError("probe_radius must lie inside (0, r_max)")

    @property
    def potential(self) -> PotentialConfig:
        return PotentialConfig(self.gamma)

    def physics(self) -> dict:
        """Fields that determine results (hashed for provenance)."""
        d = asdict(self)
        for k in _LOCATION_FIELDS:
            d.pop(k)
        d["window"] = list(self.window)
        return d

    def to_json(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self


def _known(d: dict) -> dict:
    names = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return d


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None, env=None) -> RunConfig:
    env = os.environ if env is None else env
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    data = _known(dict(data))
    if env.get(ENV_CACHE):
        data["cache_dir"] = env[ENV_CACHE]
    if env.get(ENV_OUTPUT):
        data["output_dir"] = env[ENV_OUTPUT]
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return RunConfig(**data)
    except TypeError as e:
        raise ConfigError(str(e)) from e
