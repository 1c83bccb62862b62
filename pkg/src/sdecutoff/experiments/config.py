"""Experiment configuration: TOML loading and validation.

The schema is documented in ``docs/config_schema.md``. Validation collects
every problem before raising, so a broken file is fixed in one pass.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError
from ..potentials import builtin

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENGINES = ("analytic", "fp", "mc")


@dataclass
class FPSettings:
    points_per_sigma: float = 160.0
    dt: float | None = None


@dataclass
class MCSettings:
    seed: int | None = None
    n_paths: int = 1000
    dt: float = 1e-3
    t_end: float = 5.0
    truncate_M: float = 4.0
    tv_paths: int = 20000


@dataclass
class DoubleWellSettings:
    x0: float = 1.3
    well: float = 1.0
    center_modes: list = field(default_factory=lambda: ["at_xstar", "at_zero"])
    schedule_variants: list = field(default_factory=lambda: ["general", "local"])
    constant_variants: list = field(default_factory=lambda: ["c_tilde", "c"])
    escape_paths: int = 1000
    escape_dt: float = 1e-3


@dataclass
class ExperimentConfig:
    potential: str = "quadratic"
    params: dict = field(default_factory=dict)
    x0: float = 1.0
    y0: float = 1.0
    epsilons: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    gamma: float = 0.5
    b_grid: list = field(default_factory=lambda: list(np.linspace(-4, 4, 17)))
    engines: list = field(default_factory=lambda: ["analytic"])
    workers: int = 1
    output: str = "out"
    fp: FPSettings = field(default_factory=FPSettings)
    mc: MCSettings = field(default_factory=MCSettings)
    doublewell: DoubleWellSettings = field(default_factory=DoubleWellSettings)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["b_grid"] = [float(b) for b in self.b_grid]
        d["epsilons"] = [float(e) for e in self.epsilons]
        return d

    def hash(self) -> str:
        """Stable digest of every setting except the output directory."""
        d = self.to_dict()
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _b_grid(spec, problems):
    if isinstance(spec, dict):
        try:
            grid = list(np.linspace(float(spec["start"]), float(spec["stop"]),
                                    int(spec["num"])))
        except (KeyError, TypeError, ValueError):
            problems.append("b_grid table needs numeric start, stop and num")
            return []
    elif isinstance(spec, list):
        grid = spec
    else:
        problems.append("b_grid must be a list or a {start, stop, num} table")
        return []
    try:
        grid = [float(b) for b in grid]
    except (TypeError, ValueError):
        problems.append("b_grid entries must be numbers")
        return []
    if not grid:
        problems.append("b_grid is empty")
    if any(not math.isfinite(b) for b in grid):
        problems.append("b_grid entries must be finite")
    return grid


def _fill(target, table, name, problems):
    for key, val in table.items():
        if not hasattr(target, key):
            problems.append(f"unknown key [{name}].{key}")
            continue
        setattr(target, key, val)


def from_dict(raw: dict, seed: int | None = None) -> ExperimentConfig:
    """Build and validate a config; ``seed`` overrides ``[mc].seed``.

    Raises:
        ConfigError: listing every problem found.
    """
    problems = []
    cfg = ExperimentConfig()
    raw = dict(raw)
    pot = raw.pop("potential", {})
    if isinstance(pot, str):
        pot = {"id": pot}
    pot = dict(pot)
    cfg.potential = str(pot.pop("id", "quadratic"))
    cfg.params = pot
    try:
        builtin(cfg.potential, **cfg.params)
    except KeyError:
        problems.append(f"unknown potential {cfg.potential!r}")
    except (TypeError, ValueError) as exc:
        problems.append(f"bad parameters for potential {cfg.potential!r}: {exc}")

    run = dict(raw.pop("run", {}))
    for key in ("x0", "y0", "gamma", "workers", "output"):
        if key in run:
            setattr(cfg, key, run.pop(key))
    if "epsilons" in run:
        cfg.epsilons = run.pop("epsilons")
    if "engines" in run:
        cfg.engines = run.pop("engines")
    if "b_grid" in run:
        cfg.b_grid = _b_grid(run.pop("b_grid"), problems)
    for key in run:
        problems.append(f"unknown key [run].{key}")

    for name, target in (("fp", cfg.fp), ("mc", cfg.mc), ("doublewell", cfg.doublewell)):
        if name in raw:
            _fill(target, dict(raw.pop(name)), name, problems)
    for key in raw:
        problems.append(f"unknown section [{key}]")

    if seed is not None:
        cfg.mc.seed = int(seed)
    _validate(cfg, problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _validate(cfg: ExperimentConfig, problems: list) -> None:
    if not _num(cfg.gamma) or not 0 < cfg.gamma < 1:
        problems.append(f"gamma must lie in (0, 1), got {cfg.gamma!r}")
    if not isinstance(cfg.epsilons, list) or not cfg.epsilons:
        problems.append("epsilons must be a non-empty list")
    else:
        for e in cfg.epsilons:
            if not _num(e) or not 0 < e < 1:
                problems.append(f"epsilon values must lie in (0, 1), got {e!r}")
    if not _num(cfg.x0) or cfg.x0 == 0 or not math.isfinite(cfg.x0):
        problems.append("x0 must be a finite nonzero number")
    if not _num(cfg.y0) or not math.isfinite(cfg.y0):
        problems.append("y0 must be a finite number")
    if not isinstance(cfg.engines, list) or not cfg.engines:
        problems.append("engines must be a non-empty list")
    else:
        for e in cfg.engines:
            if e not in ENGINES:
                problems.append(f"unknown engine {e!r}; expected one of {ENGINES}")
    if not isinstance(cfg.workers, int) or cfg.workers < 1:
        problems.append("workers must be a positive integer")
    if "mc" in (cfg.engines or []) and cfg.mc.seed is None:
        problems.append("a seed is mandatory when the mc engine is selected "
                        "([mc].seed or --seed)")
    if cfg.mc.seed is not None and (not isinstance(cfg.mc.seed, int) or cfg.mc.seed < 0):
        problems.append("seed must be a non-negative integer")
    if not _num(cfg.fp.points_per_sigma) or cfg.fp.points_per_sigma <= 0:
        problems.append("[fp].points_per_sigma must be positive")
    if cfg.fp.dt is not None and (not _num(cfg.fp.dt) or cfg.fp.dt <= 0):
        problems.append("[fp].dt must be positive")
    for key in ("dt", "t_end", "truncate_M"):
        v = getattr(cfg.mc, key)
        if not _num(v) or v <= 0:
            problems.append(f"[mc].{key} must be positive")
    for key in ("n_paths", "tv_paths"):
        v = getattr(cfg.mc, key)
        if not isinstance(v, int) or v < 1:
            problems.append(f"[mc].{key} must be a positive integer")
    dw = cfg.doublewell
    for m in dw.center_modes:
        if m not in ("at_xstar", "at_zero"):
            problems.append(f"unknown center mode {m!r}")
    for m in dw.schedule_variants:
        if m not in ("general", "local"):
            problems.append(f"unknown schedule variant {m!r}")
    for m in dw.constant_variants:
        if m not in ("c_tilde", "c"):
            problems.append(f"unknown constant variant {m!r}")


def load(path, seed: int | None = None) -> ExperimentConfig:
    """Read a TOML config file.

    Raises:
        ConfigError: unreadable file, bad TOML or failed validation.
    """
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"invalid TOML in {path}: {exc}"]) from exc
    return from_dict(raw, seed=seed)
