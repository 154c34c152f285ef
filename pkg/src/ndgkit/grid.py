"""Structured periodic mesh, nodal state storage and integral diagnostics.

A state field is a plain ``float64`` ndarray laid out as::

    [cell_x, (cell_y, (cell_z,)) node_x, (node_y, (node_z,)) var]

i.e. cell indices outermost and the variable index innermost, with the
unused axes of 1D/2D problems dropped rather than kept as size-one axes.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Tuple

import numpy as np

from .basis import gauss_lobatto
from .errors import ShapeMismatchError

DUMP_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Mesh:
    spatial_dim: int
    n_cells: Tuple[int, ...]
    order: int
    domain_length: Tuple[float, ...] = field(default=None)

    def __post_init__(self):
        dim = self.spatial_dim
        if dim not in (1, 2, 3):
            raise ValueError(f"spatial_dim must be 1, 2 or 3, got {dim}")
        cells = tuple(int(n) for n in np.broadcast_to(self.n_cells, (dim,)))
        if any(n < 1 for n in cells):
            raise ValueError(f"cell counts must be >= 1, got {cells}")
        if int(self.order) < 2:
            raise ValueError(f"order must be >= 2, got {self.order}")
        lengths = self.domain_length
        lengths = (1.0,) * dim if lengths is None else tuple(
            float(v) for v in np.broadcast_to(lengths, (dim,))
        )
        if any(not v > 0 for v in lengths):
            raise ValueError(f"domain lengths must be positive, got {lengths}")
        object.__setattr__(self, "n_cells", cells)
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "domain_length", lengths)

    @property
    def cell_size(self):
        return tuple(L / n for L, n in zip(self.domain_length, self.n_cells))

    @property
    def total_cells(self):
        return int(np.prod(self.n_cells))

    def field_shape(self, n_var):
        return self.n_cells + (self.order,) * self.spatial_dim + (int(n_var),)

    def dof(self, n_var=1):
        return self.total_cells * self.order**self.spatial_dim * int(n_var)


def check_field(mesh, u, n_var=None):
    expected = mesh.n_cells + (mesh.order,) * mesh.spatial_dim
    if u.ndim != 2 * mesh.spatial_dim + 1 or u.shape[:-1] != expected:
        raise ShapeMismatchError(f"field shape {u.shape} does not match mesh {expected} + (n_var,)")
    if n_var is not None and u.shape[-1] != n_var:
        raise ShapeMismatchError(f"field has {u.shape[-1]} variables, expected {n_var}")


def node_coordinates(mesh, cell, node):
    """Physical coordinates of one node, ``x = x_left + dx/2 (xi + 1)`` per axis."""
    cell = tuple(np.atleast_1d(cell))
    node = tuple(np.atleast_1d(node))
    if len(cell) != mesh.spatial_dim or len(node) != mesh.spatial_dim:
        raise IndexError("cell and node index vectors must match the mesh dimension")
    xi = gauss_lobatto(mesh.order).nodes
    out = []
    for d in range(mesh.spatial_dim):
        if not 0 <= cell[d] < mesh.n_cells[d]:
            raise IndexError(f"cell index {cell[d]} out of range on axis {d}")
        if not 0 <= node[d] < mesh.order:
            raise IndexError(f"node index {node[d]} out of range on axis {d}")
        h = mesh.cell_size[d]
        out.append(cell[d] * h + 0.5 * h * (xi[node[d]] + 1.0))
    return tuple(out)


def axis_coordinates(mesh, d):
    """Coordinates along axis ``d``, shaped to broadcast against a field minus its var axis."""
    dim = mesh.spatial_dim
    h = mesh.cell_size[d]
    xi = gauss_lobatto(mesh.order).nodes
    x = np.arange(mesh.n_cells[d])[:, None] * h + 0.5 * h * (xi[None, :] + 1.0)
    shape = [1] * (2 * dim)
    shape[d] = mesh.n_cells[d]
    shape[dim + d] = mesh.order
    # cell axis precedes node axis, so a plain reshape places both
    return x.reshape(shape)


def quadrature_weights(mesh):
    """Per-node integration weights ``prod_d w_d dx_d / 2`` broadcastable to a field."""
    dim = mesh.spatial_dim
    w = gauss_lobatto(mesh.order).weights
    total = np.ones([1] * (2 * dim))
    for d in range(dim):
        shape = [1] * (2 * dim)
        shape[dim + d] = mesh.order
        total = total * (w * 0.5 * mesh.cell_size[d]).reshape(shape)
    return total


class SplitMix64:
    """Tiny explicit 64-bit generator so amplitude sequences are portable.

    ``next_float`` returns ``(z >> 11) * 2**-53`` from the standard splitmix64
    output function, a double in [0, 1).
    """

    _MASK = (1 << 64) - 1

    def __init__(self, seed):
        self.state = int(seed) & self._MASK

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & self._MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self._MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self._MASK
        return z ^ (z >> 31)

    def next_float(self):
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, n):
        return np.array([self.next_float() for _ in range(n)])


def random_amplitudes(n_k, seed):
    return SplitMix64(seed).uniform(n_k)


def multisine_profile(x, amplitudes, length=1.0):
    """``sum_k A_k sin(2 pi k x / L)`` for k = 1..len(amplitudes)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for k, a in enumerate(amplitudes, start=1):
        out += a * np.sin(2.0 * np.pi * k * x / length)
    return out


def init_multisine(mesh, model, n_k, amplitudes=None, seed=None):
    """Collocate the multi-mode sine profile at the nodes (varies along x only)."""
    if model.n_var != 1:
        raise ValueError("init_multisine applies to scalar advection models")
    if n_k < 1:
        raise ValueError(f"n_k must be >= 1, got {n_k}")
    if amplitudes is None:
        if seed is None:
            raise ValueError("either amplitudes or a seed is required")
        amplitudes = random_amplitudes(n_k, seed)
    amplitudes = np.asarray(amplitudes, dtype=float)
    if amplitudes.shape != (n_k,):
        raise ValueError(f"expected {n_k} amplitudes, got shape {amplitudes.shape}")
    x = axis_coordinates(mesh, 0)
    prof = multisine_profile(x, amplitudes, mesh.domain_length[0])
    u = np.empty(mesh.field_shape(1))
    u[..., 0] = np.broadcast_to(prof, u.shape[:-1])
    return u


EULER_DENSITY_AMPLITUDE = 0.2
EULER_MACH = 0.5


def euler_phases(spatial_dim, seed):
    if seed is None:
        return np.zeros(spatial_dim)
    return SplitMix64(seed).uniform(spatial_dim)


def init_euler_subsonic(mesh, model, seed=None):
    """Smooth periodic subsonic state with max |u| / a = 0.5.

    rho = 1 + 0.2 prod_d sin(2 pi (x_d / L_d + phi_d)); u_x varies with y and
    u_y with x, each with amplitude 0.5 a / sqrt(2) so that the largest speed
    is exactly half the sound speed; u_z = 0.  The phases ``phi_d`` come from
    the seeded generator (all zero when ``seed`` is None).
    """
    if model.kind != "euler_isothermal":
        raise ValueError("init_euler_subsonic needs an isothermal Euler model")
    dim = mesh.spatial_dim
    if model.spatial_dim != dim:
        raise ShapeMismatchError("model and mesh dimensions differ")
    phases = euler_phases(dim, seed)
    s = [
        np.sin(2.0 * np.pi * (axis_coordinates(mesh, d) / mesh.domain_length[d] + phases[d]))
        for d in range(dim)
    ]
    rho = 1.0 + EULER_DENSITY_AMPLITUDE * np.prod(np.broadcast_arrays(*s), axis=0)
    amp = EULER_MACH * model.sound_speed / np.sqrt(2.0)
    u = np.zeros(mesh.field_shape(model.n_var))
    u[..., 0] = rho
    u[..., 1] = rho * amp * s[1]
    u[..., 2] = rho * amp * s[0]
    return u


def l2_error(mesh, field_a, field_b, var=0):
    """Quadrature L2 norm of ``field_a - field_b`` for one variable."""
    if field_a.shape != field_b.shape:
        raise ShapeMismatchError(f"shapes differ: {field_a.shape} vs {field_b.shape}")
    check_field(mesh, field_a)
    diff = field_a[..., var] - field_b[..., var]
    return float(np.sqrt(np.sum(quadrature_weights(mesh) * diff * diff)))


def conserved_totals(mesh, u, model=None):
    check_field(mesh, u, None if model is None else model.n_var)
    w = quadrature_weights(mesh)[..., None]
    axes = tuple(range(u.ndim - 1))
    return np.sum(w * u, axis=axes)


def absolute_totals(mesh, u):
    """Per-variable integral of |u|; the scale used for relative conservation drift."""
    w = quadrature_weights(mesh)[..., None]
    return np.sum(w * np.abs(u), axis=tuple(range(u.ndim - 1)))


def dump_field(path, u, mesh, n_var=None):
    """Write ``u`` as raw little-endian float64 plus a ``<path>.json`` header."""
    path = Path(path)
    check_field(mesh, u, n_var)
    np.ascontiguousarray(u, dtype="<f8").tofile(path)
    header = {
        "format_version": DUMP_FORMAT_VERSION,
        "dtype": "<f8",
        "spatial_dim": mesh.spatial_dim,
        "n_cells": list(mesh.n_cells),
        "order": mesh.order,
        "n_var": int(u.shape[-1]),
        "domain_length": list(mesh.domain_length),
        "shape": list(u.shape),
        "index_order": "cells, nodes, var (C order)",
    }
    Path(str(path) + ".json").write_text(json.dumps(header, indent=2))
    return path


def load_field(path):
    path = Path(path)
    header = json.loads(Path(str(path) + ".json").read_text())
    mesh = Mesh(header["spatial_dim"], tuple(header["n_cells"]), header["order"],
                tuple(header["domain_length"]))
    u = np.fromfile(path, dtype="<f8").reshape(header["shape"])
    return u, mesh, header
