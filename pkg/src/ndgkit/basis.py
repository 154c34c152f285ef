"""Gauss-Lobatto quadrature and the nodal Lagrange basis on [-1, 1].

Throughout, ``order`` is the number of nodes N of the rule; the
interpolating polynomials have degree N - 1.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidOrderError

MAX_ORDER = 16
_NODE_TOL = 1e-12


def legendre(n, x):
    """Return ``(P_n(x), P_n'(x))`` by the three-term recurrence.

    The derivative uses ``P'_{k+1} = P'_{k-1} + (2k + 1) P_k`` which, unlike
    the closed form in terms of ``1 - x**2``, is regular at the endpoints.
    """
    x = np.asarray(x, dtype=float)
    p_prev, p = np.ones_like(x), x.copy()
    dp_prev, dp = np.zeros_like(x), np.ones_like(x)
    if n == 0:
        return p_prev, dp_prev
    for k in range(1, n):
        p_next = ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
        dp_next = dp_prev + (2 * k + 1) * p
        p_prev, p = p, p_next
        dp_prev, dp = dp, dp_next
    return p, dp


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    order: int
    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class NodalBasis:
    rule: QuadratureRule
    diff_matrix: np.ndarray

    @property
    def order(self):
        return self.rule.order

    @property
    def nodes(self):
        return self.rule.nodes

    @property
    def weights(self):
        return self.rule.weights


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@lru_cache(maxsize=None)
def gauss_lobatto(order):
    """Gauss-Lobatto rule with ``order`` nodes.

    Interior nodes are found by Newton iteration on
    ``q(x) = (1 - x**2) P_n'(x)`` with ``n = order - 1``, seeded with the
    Chebyshev-Lobatto points.  The Legendre equation gives
    ``q'(x) = -n (n + 1) P_n(x)`` so no second derivative is needed.
    """
    if not isinstance(order, (int, np.integer)) or isinstance(order, bool):
        raise InvalidOrderError(f"order must be an integer, got {order!r}")
    if order < 2:
        raise InvalidOrderError(f"Gauss-Lobatto needs at least 2 nodes, got {order}")
    if order > MAX_ORDER:
        raise InvalidOrderError(f"order {order} exceeds supported maximum {MAX_ORDER}")

    n = order - 1
    x = -np.cos(np.pi * np.arange(order) / n)
    interior = slice(1, order - 1)
    for _ in range(100):
        p, dp = legendre(n, x[interior])
        step = (1.0 - x[interior] ** 2) * dp / (-n * (n + 1) * p)
        x[interior] -= step
        if np.all(np.abs(step) < 1e-15):
            break

    x[0], x[-1] = -1.0, 1.0
    x = 0.5 * (x - x[::-1])
    if order % 2 == 1:
        x[n // 2] = 0.0

    p, _ = legendre(n, x)
    w = 2.0 / (n * (n + 1) * p**2)
    w = 0.5 * (w + w[::-1])
    return QuadratureRule(order=int(order), nodes=_readonly(x), weights=_readonly(w))


def differentiation_matrix(rule):
    """Build ``D[l, k] = h_k'(x_l)`` for the Lagrange basis of ``rule``.

    Off-diagonal entries use the closed form ``P_n(x_l) / (P_n(x_k) (x_l - x_k))``;
    each diagonal entry is minus its row's off-diagonal sum, which keeps the
    derivative of a constant at round-off level.
    """
    x = np.asarray(rule.nodes)
    n = rule.order - 1
    p, _ = legendre(n, x)
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    d = (p[:, None] / p[None, :]) / dx
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return NodalBasis(rule=rule, diff_matrix=_readonly(d))


@lru_cache(maxsize=None)
def nodal_basis(order):
    return differentiation_matrix(gauss_lobatto(order))


def lagrange_eval(basis, k, xi):
    """Evaluate the k-th Lagrange polynomial of ``basis`` at ``xi``.

    Uses ``h_k(x) = (x - 1)(x + 1) P_n'(x) / (n (n + 1) P_n(x_k) (x - x_k))``;
    within 1e-12 of a node the Kronecker value is returned directly.
    """
    N = basis.order
    if not 0 <= k < N:
        raise IndexError(f"basis index {k} out of range for order {N}")
    xi = float(xi)
    nodes = basis.nodes
    hit = np.flatnonzero(np.abs(nodes - xi) < _NODE_TOL)
    if hit.size:
        return 1.0 if hit[0] == k else 0.0
    n = N - 1
    p_k, _ = legendre(n, nodes[k])
    _, dp = legendre(n, xi)
    return float((xi - 1.0) * (xi + 1.0) * dp / (n * (n + 1) * p_k * (xi - nodes[k])))


def interpolation_matrix(basis, points):
    """Matrix ``M[i, k] = h_k(points[i])`` (barycentric form, vectorized)."""
    x = np.asarray(basis.nodes)
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    bw = 1.0 / np.prod(x[:, None] - x[None, :] + np.eye(x.size), axis=1)
    diff = pts[:, None] - x[None, :]
    exact = np.abs(diff) < _NODE_TOL
    diff[exact] = 1.0
    terms = bw / diff
    m = terms / terms.sum(axis=1, keepdims=True)
    rows = exact.any(axis=1)
    m[rows] = exact[rows].astype(float)
    return m
