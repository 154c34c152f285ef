"""Conservation-law models: linear advection and isothermal Euler.

States are arrays whose last axis indexes the conserved variables, so every
function here works on a single state of shape ``(n_var,)`` as well as on
whole fields.  Euler variables are ordered ``(rho, rho*u_x, rho*u_y[, rho*u_z])``.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import NonPositiveDensityError

ADVECTION = "advection"
EULER = "euler_isothermal"

# integer tags passed to compiled kernels
KIND_CODES = {ADVECTION: 0, EULER: 1}


@dataclass(frozen=True)
class EquationModel:
    kind: str
    spatial_dim: int
    velocity: Tuple[float, ...] = (0.0, 0.0, 0.0)
    sound_speed: float = 1.0

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.spatial_dim not in (1, 2, 3):
            raise ValueError(f"spatial_dim must be 1, 2 or 3, got {self.spatial_dim}")
        if self.kind == EULER:
            if self.spatial_dim == 1:
                raise ValueError("isothermal Euler is provided in 2D and 3D only")
            if not self.sound_speed > 0:
                raise ValueError(f"sound speed must be positive, got {self.sound_speed}")
        vel = tuple(float(v) for v in self.velocity) + (0.0,) * 3
        object.__setattr__(self, "velocity", vel[:3])

    @classmethod
    def advection(cls, velocity=(1.0,), spatial_dim=None):
        velocity = tuple(np.atleast_1d(velocity).astype(float))
        dim = spatial_dim or len(velocity)
        return cls(ADVECTION, dim, velocity=velocity)

    @classmethod
    def euler(cls, spatial_dim=2, sound_speed=1.0):
        return cls(EULER, spatial_dim, sound_speed=float(sound_speed))

    @property
    def n_var(self):
        if self.kind == ADVECTION:
            return 1
        return self.spatial_dim + 1

    @property
    def code(self):
        return KIND_CODES[self.kind]


def _check_axis(model, dim):
    if not 0 <= dim < model.spatial_dim:
        raise IndexError(f"axis {dim} out of range for a {model.spatial_dim}D model")


def _density(u):
    rho = u[..., 0]
    if np.any(~(rho > 0)):
        bad = np.unravel_index(np.argmin(np.where(rho > 0, np.inf, rho)), rho.shape)
        bad = tuple(int(i) for i in bad) or None
        raise NonPositiveDensityError(
            f"nonpositive density {float(rho[bad] if bad else rho)} at index {bad}", cell=bad
        )
    return rho


def physical_flux(model, u, dim):
    u = np.asarray(u, dtype=float)
    _check_axis(model, dim)
    if model.kind == ADVECTION:
        return model.velocity[dim] * u
    rho = _density(u)
    un = u[..., dim + 1] / rho
    f = u * un[..., None]
    f[..., dim + 1] += rho * model.sound_speed**2
    return f


def max_wavespeed(model, u_minus, u_plus, dim):
    """Largest flux-Jacobian eigenvalue magnitude over the two states.

    Isothermal Euler has eigenvalues ``u_n - a, u_n, u_n + a`` (``u_n`` only in
    2D+ for the transverse momenta), giving the bound ``|u_n| + a``.
    """
    _check_axis(model, dim)
    if model.kind == ADVECTION:
        shape = np.shape(u_minus)[:-1]
        return np.full(shape, abs(model.velocity[dim])) if shape else abs(model.velocity[dim])
    um = np.asarray(u_minus, dtype=float)
    up = np.asarray(u_plus, dtype=float)
    sm = np.abs(um[..., dim + 1] / _density(um))
    sp = np.abs(up[..., dim + 1] / _density(up))
    return np.maximum(sm, sp) + model.sound_speed


def lax_friedrichs(model, u_minus, u_plus, dim):
    """Local Lax-Friedrichs (Rusanov) flux at an interface."""
    um = np.asarray(u_minus, dtype=float)
    up = np.asarray(u_plus, dtype=float)
    alpha = np.asarray(max_wavespeed(model, um, up, dim))
    fm = physical_flux(model, um, dim)
    fp = physical_flux(model, up, dim)
    return 0.5 * (fm + fp - alpha[..., None] * (up - um))


def flux_jacobian(model, u, dim):
    """Analytic Jacobian dF_dim/dU at a single state; used by tests and diagnostics."""
    u = np.asarray(u, dtype=float)
    nv = model.n_var
    if model.kind == ADVECTION:
        return np.array([[model.velocity[dim]]])
    rho = float(_density(u[None])[0])
    vel = u[1:] / rho
    un = vel[dim]
    a2 = model.sound_speed**2
    j = np.zeros((nv, nv))
    j[0, dim + 1] = 1.0
    for i in range(1, nv):
        j[i, 0] = -vel[i - 1] * un
        j[i, i] += un
        j[i, dim + 1] += vel[i - 1]
    j[dim + 1, 0] += a2
    return j
