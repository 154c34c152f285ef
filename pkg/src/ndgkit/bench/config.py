"""Experiment configuration: a YAML mapping mirroring ``ExperimentSpec``.

Schema (every key optional except where an experiment needs it)::

    experiment:   converge | cost | fit | timing | scale | energy | simulate
    equation:     advection | euler          (a list runs each in turn)
    dim:          1 | 2 | 3
    orders:       [3, 4, ...]                nodes per cell per axis
    rk:           rk3 | rk4 | rk6
    cells:        [16, 32, ...]              cells per axis, one run each
    weak_cells:   [48]                       cells per axis per worker (scale)
    nk:           4                          highest sine mode of the initial profile
    seed:         1                          required for random amplitudes
    amplitudes:   [..]                       explicit amplitudes instead of a seed
    workers:      [1, 2, 4]
    transport:    inprocess | socket
    cfl:          0.4
    t_end:        1.0
    steps:        100                        fixed-step runs (timing, scale, energy)
    velocity:     [1.0, 0.0, 0.0]
    sound_speed:  1.0
    power_watts:  65.0                       or a mapping device -> watts
    targets:      [1e-2, 1e-3, 1e-4]         fit target errors
    reference_c:  200.0
    compare_dims: true                       scale: add 2D vs 3D matched-dof rows
    backend:      numba | numpy
    dump:         path                       simulate: write the final field

Values from the command line replace values from the file.
"""

from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional

import yaml

from ..errors import ConfigError
from ..solver import SCHEMES

EXPERIMENTS = ("converge", "cost", "fit", "timing", "scale", "energy", "simulate")
EQUATIONS = ("advection", "euler")
RANDOM_AMPLITUDE_EXPERIMENTS = ("converge", "cost", "fit")


@dataclass
class ExperimentSpec:
    experiment: str = "converge"
    equation: List[str] = field(default_factory=lambda: ["advection"])
    dim: int = 1
    orders: List[int] = field(default_factory=lambda: [4])
    rk: str = "rk6"
    cells: List[int] = field(default_factory=lambda: [8, 16, 32])
    weak_cells: List[int] = field(default_factory=list)
    nk: int = 4
    seed: Optional[int] = None
    amplitudes: Optional[List[float]] = None
    workers: List[int] = field(default_factory=lambda: [1])
    transport: str = "inprocess"
    cfl: float = 0.4
    t_end: float = 1.0
    steps: int = 100
    velocity: List[float] = field(default_factory=lambda: [1.0, 0.0, 0.0])
    sound_speed: float = 1.0
    power_watts: Dict[str, float] = field(default_factory=dict)
    targets: List[float] = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    reference_c: float = 200.0
    compare_dims: bool = True
    backend: Optional[str] = None
    dump: Optional[str] = None

    def as_dict(self):
        return asdict(self)

    def replace(self, **changes):
        d = self.as_dict()
        d.update(changes)
        return normalize(d)


_OPTIONAL = {"seed", "amplitudes", "backend", "dump"}
_LISTS = {"equation", "orders", "cells", "weak_cells", "workers", "targets", "velocity"}


def _as_list(value):
    if isinstance(value, str):
        return [v for v in value.replace(",", " ").split() if v]
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def normalize(raw):
    """Coerce and validate a raw mapping into an ``ExperimentSpec``."""
    known = {f.name for f in fields(ExperimentSpec)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    data = {}
    try:
        for key, value in raw.items():
            if value is None:
                data[key] = None
                continue
            if key in _LISTS:
                value = _as_list(value)
            if key in ("orders", "cells", "weak_cells", "workers"):
                value = [int(v) for v in value]
            elif key in ("targets", "velocity"):
                value = [float(v) for v in value]
            elif key == "equation":
                value = [str(v) for v in value]
            elif key == "amplitudes":
                value = [float(v) for v in _as_list(value)]
            elif key in ("dim", "nk", "steps", "seed"):
                value = int(value)
            elif key in ("cfl", "t_end", "sound_speed", "reference_c"):
                value = float(value)
            elif key == "power_watts":
                if isinstance(value, dict):
                    value = {str(k): float(v) for k, v in value.items()}
                else:
                    value = {"device": float(value)}
            elif key == "compare_dims":
                value = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
            data[key] = value
        spec = ExperimentSpec(**{k: v for k, v in data.items()
                                 if v is not None or k in _OPTIONAL})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc
    validate(spec)
    return spec


def validate(spec):
    if spec.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {spec.experiment!r}; choose from {EXPERIMENTS}")
    for eq in spec.equation:
        if eq not in EQUATIONS:
            raise ConfigError(f"unknown equation {eq!r}; choose from {EQUATIONS}")
    if not spec.equation:
        raise ConfigError("equation list is empty")
    if spec.dim not in (1, 2, 3):
        raise ConfigError(f"dim must be 1, 2 or 3, got {spec.dim}")
    if "euler" in spec.equation and spec.dim == 1:
        raise ConfigError("isothermal Euler needs dim 2 or 3")
    if spec.rk not in SCHEMES:
        raise ConfigError(f"unknown rk scheme {spec.rk!r}; choose from {sorted(SCHEMES)}")
    for name in ("orders", "cells", "workers"):
        if not getattr(spec, name):
            raise ConfigError(f"{name} must be a nonempty list")
    if any(o < 2 or o > 16 for o in spec.orders):
        raise ConfigError(f"orders must lie in 2..16, got {spec.orders}")
    if any(n < 1 for n in spec.cells + spec.weak_cells):
        raise ConfigError("cell counts must be positive")
    if any(p < 1 for p in spec.workers):
        raise ConfigError("worker counts must be positive")
    if not 0 < spec.cfl <= 1:
        raise ConfigError(f"cfl must lie in (0, 1], got {spec.cfl}")
    if not spec.t_end > 0:
        raise ConfigError(f"t_end must be positive, got {spec.t_end}")
    if spec.steps < 1:
        raise ConfigError(f"steps must be positive, got {spec.steps}")
    if spec.nk < 1:
        raise ConfigError(f"nk must be >= 1, got {spec.nk}")
    if spec.amplitudes is not None and len(spec.amplitudes) != spec.nk:
        raise ConfigError(f"{len(spec.amplitudes)} amplitudes given for nk={spec.nk}")
    if spec.transport not in ("inprocess", "socket"):
        raise ConfigError(f"unknown transport {spec.transport!r}")
    if spec.backend not in (None, "numba", "numpy"):
        raise ConfigError(f"unknown backend {spec.backend!r}")
    if any(not w > 0 for w in spec.power_watts.values()):
        raise ConfigError("power ratings must be positive")
    if not spec.targets or any(not 0 < t < 1 for t in spec.targets):
        raise ConfigError(f"targets must lie in (0, 1), got {spec.targets}")
    if spec.experiment in ("converge", "cost", "fit") and spec.equation != ["advection"]:
        raise ConfigError(f"{spec.experiment} measures errors of the advection equation only")
    if (uses_random_amplitudes(spec) and spec.seed is None and spec.amplitudes is None):
        raise ConfigError(f"{spec.experiment} uses random amplitudes: --seed is required")


def uses_random_amplitudes(spec):
    if spec.amplitudes is not None:
        return False
    if spec.experiment in RANDOM_AMPLITUDE_EXPERIMENTS:
        return True
    return "advection" in spec.equation


def load_config(path):
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a mapping")
    return raw


def build_spec(file_values=None, overrides=None):
    """Merge file values with command-line overrides (``None`` overrides are ignored)."""
    raw = dict(file_values or {})
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return normalize(raw)
