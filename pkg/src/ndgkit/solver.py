"""Semi-discrete nodal DG operator and explicit Runge-Kutta time stepping."""

import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import kernels
from .basis import nodal_basis
from .errors import InstabilityError, NonPositiveDensityError, ShapeMismatchError
from .grid import Mesh, check_field
from .models import EquationModel

_S21 = math.sqrt(21.0)


@dataclass(frozen=True)
class RKScheme:
    """Explicit RK scheme in the ``k_i = dt F(U + sum_j a_ij k_j)`` form.

    ``rk3`` does not fit that form (its last stage re-uses ``k_1`` outside
    the function evaluation) and is special-cased in ``rk_step``.
    """

    name: str
    stage_count: int
    order: int
    a: tuple = ()
    b: tuple = ()


RK3 = RKScheme("rk3", 3, 3)

RK4 = RKScheme(
    "rk4", 4, 4,
    a=((), (0.5,), (0.0, 0.5), (0.0, 0.0, 1.0)),
    b=(1 / 6, 2 / 6, 2 / 6, 1 / 6),
)

RK6 = RKScheme(
    "rk6", 7, 6,
    a=(
        (),
        (1.0,),
        (3 / 8, 1 / 8),
        (8 / 27, 2 / 27, 8 / 27),
        (3 * (3 * _S21 - 7) / 392, -8 * (7 - _S21) / 392, 48 * (7 - _S21) / 392,
         -3 * (21 - _S21) / 392),
        (-5 * (231 + 51 * _S21) / 1960, -40 * (7 + _S21) / 1960, -320 * _S21 / 1960,
         3 * (21 + 121 * _S21) / 1960, 392 * (6 + _S21) / 1960),
        (15 * (22 + 7 * _S21) / 180, 120 / 180, 40 * (7 * _S21 - 5) / 180,
         -63 * (3 * _S21 - 2) / 180, -14 * (49 + 9 * _S21) / 180, 70 * (7 - _S21) / 180),
    ),
    b=(9 / 180, 0.0, 64 / 180, 0.0, 49 / 180, 49 / 180, 9 / 180),
)

SCHEMES = {s.name: s for s in (RK3, RK4, RK6)}


def get_scheme(name):
    if isinstance(name, RKScheme):
        return name
    try:
        return SCHEMES[str(name).lower()]
    except KeyError:
        raise ValueError(f"unknown RK scheme {name!r}; choose from {sorted(SCHEMES)}") from None


class Workspace:
    """Stage buffers reused across steps (one per stage)."""

    def __init__(self, scheme, shape):
        self.scheme = scheme
        self.shape = tuple(shape)
        self.k = [np.empty(shape) for _ in range(scheme.stage_count)]

    def fits(self, scheme, shape):
        return self.scheme is scheme and self.shape == tuple(shape)


def rk_step(scheme, u, dt, rhs, out=None, work=None):
    """Advance ``u`` by one step of ``scheme``; returns the new state.

    ``rhs(state, deriv)`` must write the time derivative of ``state`` into
    ``deriv``.  ``out`` receives the new state and doubles as the stage-input
    buffer, so it must not alias ``u``.
    """
    scheme = get_scheme(scheme)
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    u = np.asarray(u, dtype=float)
    if out is None:
        out = np.empty_like(u)
    if work is None or not work.fits(scheme, u.shape):
        work = Workspace(scheme, u.shape)
    k = work.k
    axpy = kernels.axpy

    if scheme.name == "rk3":
        rhs(u, k[0])
        k[0] *= dt / 3.0
        out[...] = u
        axpy(out, 1.0, k[0])
        rhs(out, k[1])
        k[1] *= 2.0 * dt / 3.0
        out[...] = u
        axpy(out, 1.0, k[1])
        rhs(out, k[2])
        # k3 = (3 k1 + 3 dt F(U + k2)) / 4, i.e. dt (F(U) + 3 F(U + k2)) / 4
        k[2] *= 0.75 * dt
        axpy(k[2], 0.75, k[0])
        out[...] = u
        axpy(out, 1.0, k[2])
        return out

    for i in range(scheme.stage_count):
        if i == 0:
            stage_in = u
        else:
            out[...] = u
            for j, a_ij in enumerate(scheme.a[i]):
                if a_ij != 0.0:
                    axpy(out, a_ij, k[j])
            stage_in = out
        rhs(stage_in, k[i])
        k[i] *= dt
    out[...] = u
    for b_i, k_i in zip(scheme.b, k):
        if b_i != 0.0:
            axpy(out, b_i, k_i)
    return out


def periodic_ghosts(u, dim):
    """Exterior traces for a block that wraps onto itself on every axis."""
    ghosts = []
    for d in range(dim):
        u7 = kernels.axis_view(u, d, dim)
        ghosts.append((np.ascontiguousarray(u7[:, -1, :, :, -1]),
                       np.ascontiguousarray(u7[:, 0, :, :, 0])))
    return ghosts


def face_traces(u, d, dim):
    """This block's own boundary traces along axis ``d``: ``(first cell node 0, last cell node N-1)``."""
    u7 = kernels.axis_view(u, d, dim)
    return (np.ascontiguousarray(u7[:, 0, :, :, 0]),
            np.ascontiguousarray(u7[:, -1, :, :, -1]))


class RHSOperator:
    """Time derivative of a (block of a) state field.

    ``halo(u)`` returns, per axis, ``(ghost_left, ghost_right)`` exterior
    traces in the collapsed layout of ``kernels``; the default is the serial
    periodic wrap.  For a sub-block, ``cell_size`` must be the global mesh
    spacing (recomputing it from the block extent can differ in the last
    bit) and ``cell_offset`` annotates errors with global cell indices.
    """

    def __init__(self, mesh, model, halo=None, backend=None, cell_offset=None, cell_size=None):
        if model.spatial_dim != mesh.spatial_dim:
            raise ShapeMismatchError("model and mesh dimensions differ")
        self.mesh = mesh
        self.model = model
        self.dim = mesh.spatial_dim
        self.basis = nodal_basis(mesh.order)
        self.dmat = np.ascontiguousarray(self.basis.diff_matrix)
        self.cell_size = tuple(cell_size or mesh.cell_size)
        self.halo = halo
        self.cell_offset = cell_offset or (0,) * self.dim
        self.axis_rhs = {
            None: kernels.axis_rhs, "numba": kernels.axis_rhs_numba, "numpy": kernels.axis_rhs_numpy,
        }[backend]
        self.a2 = model.sound_speed**2

    def __call__(self, u, out):
        dim = self.dim
        ghosts = self.halo(u) if self.halo is not None else periodic_ghosts(u, dim)
        out[...] = 0.0
        w = self.basis.weights
        for d in range(dim):
            h = self.cell_size[d]
            u7 = kernels.axis_view(u, d, dim)
            o7 = kernels.axis_view(out, d, dim)
            gl, gr = ghosts[d]
            bad = self.axis_rhs(
                u7, o7, gl, gr, self.dmat, 2.0 / h, 2.0 / (h * w[0]), 2.0 / (h * w[-1]),
                self.model.code, self.model.velocity[d], self.a2, d,
            )
            if bad >= 0:
                self._raise_density(u, bad)
        return out

    def _raise_density(self, u, flat):
        idx = np.unravel_index(flat, u.shape)
        cell = tuple(int(c + o) for c, o in zip(idx[:self.dim], self.cell_offset))
        raise NonPositiveDensityError(
            f"nonpositive density {u[idx]:.6g} in cell {cell}", cell=cell
        )


def rhs(mesh, basis, model, u, halo=None, backend=None):
    """Evaluate the semi-discrete time derivative of ``u`` (functional form)."""
    if basis is not None and basis.order != mesh.order:
        raise ShapeMismatchError("basis order does not match the mesh")
    check_field(mesh, u, model.n_var)
    op = RHSOperator(mesh, model, halo=halo, backend=backend)
    return op(np.ascontiguousarray(u, dtype=float), np.empty(u.shape))


def local_max_wavespeed(model, u):
    speeds = np.asarray(model.velocity[:model.spatial_dim], dtype=float)
    u2 = np.ascontiguousarray(u).reshape(-1, u.shape[-1])
    return float(kernels.global_max_wavespeed(u2, model.code, speeds, model.sound_speed**2))


def dt_from_speed(mesh, alpha, cfl, fallback_speed=None):
    if alpha <= 0.0:
        if fallback_speed is None:
            return math.inf
        alpha = fallback_speed
    return cfl * min(mesh.cell_size) / (alpha * (2 * mesh.order - 1))


def compute_dt(mesh, model, u, cfl=0.4, fallback_speed=None):
    """CFL step ``cfl * min(dx) / (alpha * (2N - 1))`` with the global wavespeed bound.

    A stationary problem (alpha = 0) yields ``inf`` unless ``fallback_speed``
    is given; ``advance`` then takes a single step to the end time.
    """
    if not 0 < cfl <= 1:
        raise ValueError(f"cfl must lie in (0, 1], got {cfl}")
    alpha = local_max_wavespeed(model, u)
    if not math.isfinite(alpha):
        raise InstabilityError("non-finite wavespeed in field")
    return dt_from_speed(mesh, alpha, cfl, fallback_speed)


@dataclass
class SolverConfig:
    mesh: Mesh
    model: EquationModel
    rk: object = "rk4"
    cfl: float = 0.4
    end_time: float = 1.0
    backend: Optional[str] = None

    def __post_init__(self):
        self.rk = get_scheme(self.rk)
        if not 0 < self.cfl <= 1:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if not self.end_time > 0:
            raise ValueError(f"end time must be positive, got {self.end_time}")
        if self.model.spatial_dim != self.mesh.spatial_dim:
            raise ShapeMismatchError("model and mesh dimensions differ")


@dataclass
class StepStats:
    steps: int = 0
    t_final: float = 0.0
    dt_min: float = math.inf
    dt_max: float = 0.0
    wall_time: float = 0.0
    dt_history: List[float] = field(default_factory=list, repr=False)

    def record(self, dt):
        self.steps += 1
        self.dt_min = min(self.dt_min, dt)
        self.dt_max = max(self.dt_max, dt)
        self.dt_history.append(dt)

    def as_dict(self):
        return {"steps": self.steps, "t_final": self.t_final, "dt_min": self.dt_min,
                "dt_max": self.dt_max, "wall_time": self.wall_time}


def _next_dt(t, end_time, dt):
    """Shorten the step so the run lands exactly on ``end_time``."""
    remaining = end_time - t
    if dt >= remaining or remaining - dt <= 1e-12 * end_time:
        return remaining, True
    return dt, False


def advance(config, initial, halo=None, steps=None, speed_reduce=None, block=None):
    """Integrate ``initial`` to ``config.end_time`` (or for exactly ``steps`` steps).

    With ``steps`` given, every step uses the CFL step size and the end time is
    ignored.  Partitioned runs pass their ``block`` (mesh of the owned cells
    plus global cell offset), a ``halo`` provider and a ``speed_reduce``
    callable combining the local wavespeed bound across workers.  Only the
    stepping loop is timed.
    """
    mesh, model = config.mesh, config.model
    if block is None:
        check_field(mesh, initial, model.n_var)
        op = RHSOperator(mesh, model, halo=halo, backend=config.backend)
    else:
        local_mesh, offset = block
        check_field(local_mesh, initial, model.n_var)
        op = RHSOperator(local_mesh, model, halo=halo, backend=config.backend,
                         cell_offset=offset, cell_size=mesh.cell_size)
    u = np.array(initial, dtype=float, order="C")
    nxt = np.empty_like(u)
    work = Workspace(config.rk, u.shape)
    stats = StepStats()
    t = 0.0

    t0 = time.perf_counter_ns()
    while True:
        alpha = local_max_wavespeed(model, u)
        if speed_reduce is not None:
            alpha = speed_reduce(alpha)
        dt = dt_from_speed(mesh, alpha, config.cfl)
        if steps is None:
            dt, last = _next_dt(t, config.end_time, dt)
        else:
            last = stats.steps + 1 >= steps
        rk_step(config.rk, u, dt, op, out=nxt, work=work)
        u, nxt = nxt, u
        t = config.end_time if steps is None and last else t + dt
        stats.record(dt)
        if not np.isfinite(u).all():
            raise InstabilityError(f"non-finite state after step {stats.steps}", step=stats.steps)
        if last:
            break
    stats.wall_time = (time.perf_counter_ns() - t0) * 1e-9
    stats.t_final = t
    return u, stats
