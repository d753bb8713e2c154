"""Pipeline configuration: a dataclass, a flat ``key = value`` file format, and
CLI overrides with the same key names."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .errors import ConfigError, ParseError


@dataclass(frozen=True)
class PipelineConfig:
    tau_re: float = 0.0
    tau_im: float = 1.0
    radius: float = 0.2
    samples: int = 13
    grid: int = 256
    eps: float = 0.05
    # stage schedule; frequencies of 0 fall back to the n/32, n/16, n/8 tower
    theta: float = 0.4
    stages: int = 1
    freq_diag: int = 0
    freq_v: int = 0
    freq_u: int = 0
    c0_budget: float = math.inf
    strict_eps: bool = False
    margin: float = 0.1
    tube: float = 1.0
    # tolerances
    tol: float = 1e-3
    tol_cg: float = 1e-10
    tol_jet: float = 1e-10
    sv_min: float = 1e-8
    tol_conf: float = 0.05
    tol_endpoint: float = 1e-2
    winding_samples: int = 128
    max_evals: int = 100
    # invariants
    kappa: int = 0
    chi: int = 0
    refine: int = 1
    # path
    homotopy: str = "rotation"
    path_nodes: int = 5
    # corrugate (single step)
    direction: int = 1
    rho: float = 1.0
    frequency: int = 16
    out: str = "confimm_out"
    seed: int = 0

    def validate(self) -> "PipelineConfig":
        if not self.tau_im > 0:
            raise ConfigError(f"tau_im must be positive, got {self.tau_im}")
        if not 0 < self.radius < self.tau_im:
            raise ConfigError(f"radius must lie in (0, tau_im = {self.tau_im}), got {self.radius}")
        if self.eps <= 0:
            raise ConfigError("eps must be positive")
        if self.grid < 64 or self.grid % 2:
            raise ConfigError(f"grid must be even and >= 64, got {self.grid}")
        for name in ("tol", "tol_cg", "tol_jet", "sv_min", "tol_conf", "tol_endpoint"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.theta < 1:
            raise ConfigError("theta must lie in (0, 1)")
        if self.stages < 1 or self.samples < 1 or self.path_nodes < 2 or self.refine < 1:
            raise ConfigError("stages, samples and refine must be >= 1; path_nodes >= 2")
        if not 0 <= self.margin < 1:
            raise ConfigError("margin must lie in [0, 1)")
        if self.winding_samples < 64:
            raise ConfigError("winding_samples must be >= 64")
        for name in ("freq_diag", "freq_v", "freq_u"):
            v = getattr(self, name)
            if v < 0 or v % 2 or v > self.grid // 8:
                raise ConfigError(f"{name} must be 0 or an even integer <= grid/8, got {v}")
        if self.homotopy not in ("rotation", "linear"):
            raise ConfigError(f"homotopy must be 'rotation' or 'linear', got {self.homotopy!r}")
        return self

    @property
    def tau0(self) -> complex:
        return complex(self.tau_re, self.tau_im)

    def frequency_plan(self) -> Dict[int, int]:
        from .convex_integration import tower_plan

        plan = tower_plan(self.grid)
        for direction, name in ((3, "freq_diag"), (2, "freq_v"), (1, "freq_u")):
            if getattr(self, name):
                plan[direction] = getattr(self, name)
        return plan

    def items(self) -> List[Tuple[str, object]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(key: str, text: str, line: Optional[int] = None):
    if key not in _TYPES:
        raise ParseError(f"unknown key {key!r}", line)
    kind = _TYPES[key]
    try:
        if kind == "bool":
            low = text.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        return text.strip()
    except ValueError:
        raise ParseError(f"{key}: cannot read {text!r} as {kind}", line) from None


def parse_config_text(text: str) -> Dict[str, object]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        values[key] = _coerce(key, val, lineno)
    return values


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, str]] = None) -> PipelineConfig:
    """File values first, then overrides (flag wins)."""
    values = parse_config_text(Path(path).read_text()) if path else {}
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = _coerce(key, str(val)) if isinstance(val, str) else val
    try:
        cfg = PipelineConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def config_keys() -> List[str]:
    return [f.name for f in fields(PipelineConfig)]


def replace(cfg: PipelineConfig, **kw) -> PipelineConfig:
    return dataclasses.replace(cfg, **kw).validate()
