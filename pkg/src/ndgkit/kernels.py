"""Hot loops of the right-hand side, in a numba and a pure-numpy flavour.

Both flavours apply the contribution of one spatial axis to the time
derivative.  The field is handed over as a 7-D C-contiguous view::

    u7[A, C, B, NB, N, NA, V]

where ``C``/``N`` are the cell and node extents along the active axis,
``A``/``B`` collapse the cell axes before/after it, ``NB``/``NA`` the node
axes before/after it and ``V`` is the variable axis.  Any 1D/2D/3D field and
any axis maps onto this shape with a plain reshape (see ``axis_view``).

``ghost_l``/``ghost_r`` have shape ``(A, B, NB, NA, V)`` and hold the
exterior traces at the block's first and last face along the axis.

Per node k of a cell line the contribution is::

    -(2/dx) sum_l D[k, l] (F_l - F_k)
      + (2 / (dx w_N-1)) (F_N-1 - Fhat_right)   at k = N-1
      + (2 / (dx w_0))   (Fhat_left - F_0)      at k = 0

which equals the Gauss-Lobatto quadrature of the weak form
``(2/(dx w_k)) [sum_l w_l F_l D[l, k] - Fhat_R delta_k,N-1 + Fhat_L delta_k,0]``
through the summation-by-parts identity ``W D + D^T W = diag(-1, 0.., 1)``;
written this way a constant state produces an exactly zero derivative.
Each face flux is evaluated once and consumed by both adjacent cells.

Return value is ``-1`` on success, otherwise the flat index (into ``u7``)
of the density entry of the first point found with rho <= 0.  The numba
version stops at that point; the caller raises.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

ADVECTION = 0
EULER = 1


def axis_view(u, d, dim):
    """Reshape a field (or any array with the field layout) to the 7-D axis view."""
    cells = u.shape[:dim]
    nodes = u.shape[dim:2 * dim]
    A = int(np.prod(cells[:d], dtype=np.int64))
    B = int(np.prod(cells[d + 1:], dtype=np.int64))
    NB = int(np.prod(nodes[:d], dtype=np.int64))
    NA = int(np.prod(nodes[d + 1:], dtype=np.int64))
    return u.reshape(A, cells[d], B, NB, nodes[d], NA, u.shape[-1])


@njit(nogil=True, cache=True)
def _point_flux(kind, q, NA, V, d, a_d, a2, f):
    """Physical fluxes of the NA*V values ``q`` into ``f``; returns the offset of a bad density or -1."""
    if kind == ADVECTION:
        for m in range(NA * V):
            f[m] = a_d * q[m]
        return -1
    for na in range(NA):
        base = na * V
        rho = q[base]
        if not rho > 0.0:
            return base
        un = q[base + d + 1] / rho
        for v in range(V):
            f[base + v] = q[base + v] * un
        f[base + d + 1] += rho * a2
    return -1


@njit(nogil=True, cache=True)
def _slab_flux(kind, q, g, off, NA, V, d, a_d, a2):
    """Fluxes of the ``(L, N, NA*V)`` slab ``q`` into ``g[k, off + i*NA*V + m]``.

    Returns the flat offset (into ``q``) of a bad density or -1.
    """
    L, N, M = q.shape
    if kind == ADVECTION:
        for i in range(L):
            for k in range(N):
                for m in range(M):
                    g[k, off + i * M + m] = a_d * q[i, k, m]
        return -1
    for i in range(L):
        for k in range(N):
            for na in range(NA):
                base = na * V
                col = off + i * M + base
                rho = q[i, k, base]
                if not rho > 0.0:
                    return (i * N + k) * M + base
                un = q[i, k, base + d + 1] / rho
                for v in range(V):
                    g[k, col + v] = q[i, k, base + v] * un
                g[k, col + d + 1] += rho * a2
    return -1


@njit(nogil=True, cache=True)
def _lf_line(kind, um, up, fm, fp, NA, V, d, a_d, a2, sound, out):
    """Lax-Friedrichs flux for NA face points; ``fm``/``fp`` are the physical fluxes of ``um``/``up``."""
    if kind == ADVECTION:
        alpha = abs(a_d)
        for m in range(NA * V):
            out[m] = 0.5 * (fm[m] + fp[m] - alpha * (up[m] - um[m]))
        return
    for na in range(NA):
        base = na * V
        sm = abs(um[base + d + 1] / um[base])
        sp = abs(up[base + d + 1] / up[base])
        alpha = max(sm, sp) + sound
        for v in range(V):
            m = base + v
            out[m] = 0.5 * (fm[m] + fp[m] - alpha * (up[m] - um[m]))


@njit(nogil=True, cache=True)
def axis_rhs_numba(u7, out7, ghost_l, ghost_r, dmat, scale, lift_l, lift_r, kind, a_d, a2, d):
    A, C, B, NB, N, NA, V = u7.shape
    M = NA * V
    L = B * NB
    W = A * L * M
    u5 = u7.reshape((A, C, L, N, M))
    o5 = out7.reshape((A, C, L, N, M))
    gl = ghost_l.reshape((A, L, M))
    gr = ghost_r.reshape((A, L, M))
    sound = math.sqrt(a2)
    # fluxes of every line at cell c with the node axis first, so the volume
    # loops run over all A * L lines at once
    g = np.empty((N, W))
    acc = np.empty((N, W))
    fl = np.empty((A, L, M))
    fr = np.empty(M)
    fg = np.empty(M)
    for a in range(A):
        for i in range(L):
            # face 0 is the only one whose left state is a ghost
            _point_flux(kind, gl[a, i], NA, V, d, a_d, a2, fg)
            bad = _point_flux(kind, u5[a, 0, i, 0], NA, V, d, a_d, a2, fr)
            if bad >= 0:
                return ((a * C * L + i) * N) * M + bad
            _lf_line(kind, gl[a, i], u5[a, 0, i, 0], fg, fr, NA, V, d, a_d, a2, sound, fl[a, i])
    for c in range(C):
        for a in range(A):
            bad = _slab_flux(kind, u5[a, c], g, a * L * M, NA, V, d, a_d, a2)
            if bad >= 0:
                return (a * C + c) * L * N * M + bad
        for k in range(N):
            for j in range(W):
                acc[k, j] = 0.0
            for l in range(N):
                if l == k:
                    continue
                dkl = dmat[k, l]
                for j in range(W):
                    acc[k, j] += dkl * (g[l, j] - g[k, j])
        for a in range(A):
            for i in range(L):
                j0 = (a * L + i) * M
                for k in range(N):
                    for m in range(M):
                        o5[a, c, i, k, m] -= scale * acc[k, j0 + m]
        last = c + 1 == C
        for a in range(A):
            for i in range(L):
                j0 = (a * L + i) * M
                for na in range(NA):
                    base = na * V
                    if kind == ADVECTION:
                        alpha = abs(a_d)
                    else:
                        rm = u5[a, c, i, N - 1, base]
                        rp = gr[a, i, base] if last else u5[a, c + 1, i, 0, base]
                        # a bad density in the upper state is caught in its own cell
                        unp = (gr[a, i, base + d + 1] if last else u5[a, c + 1, i, 0, base + d + 1]) / rp
                        alpha = max(abs(u5[a, c, i, N - 1, base + d + 1] / rm), abs(unp)) + sound
                    for v in range(V):
                        m = base + v
                        um = u5[a, c, i, N - 1, m]
                        up = gr[a, i, m] if last else u5[a, c + 1, i, 0, m]
                        if kind == ADVECTION:
                            fp = a_d * up
                        else:
                            fp = up * unp
                            if v == d + 1:
                                fp += rp * a2
                        fn = g[N - 1, j0 + m]
                        fhat = 0.5 * (fn + fp - alpha * (up - um))
                        o5[a, c, i, N - 1, m] += lift_r * (fn - fhat)
                        o5[a, c, i, 0, m] += lift_l * (fl[a, i, m] - g[0, j0 + m])
                        fl[a, i, m] = fhat
    return -1


def _flux_np(kind, q, d, a_d, a2):
    if kind == ADVECTION:
        return a_d * q
    rho = q[..., 0]
    f = q * (q[..., d + 1] / rho)[..., None]
    f[..., d + 1] += rho * a2
    return f


def _lf_np(kind, um, up, d, a_d, a2):
    if kind == ADVECTION:
        alpha = abs(a_d)
    else:
        alpha = (np.maximum(np.abs(um[..., d + 1] / um[..., 0]),
                            np.abs(up[..., d + 1] / up[..., 0])) + math.sqrt(a2))[..., None]
    return 0.5 * (_flux_np(kind, um, d, a_d, a2) + _flux_np(kind, up, d, a_d, a2)
                  - alpha * (up - um))


def axis_rhs_numpy(u7, out7, ghost_l, ghost_r, dmat, scale, lift_l, lift_r, kind, a_d, a2, d):
    if kind == EULER:
        bad = np.flatnonzero(~(u7[..., 0] > 0.0))
        if bad.size:
            return int(bad[0]) * u7.shape[-1]
    f = _flux_np(kind, u7, d, a_d, a2)
    d_off = dmat - np.diag(np.diag(dmat))
    row = d_off.sum(axis=1)
    # sum_l D[k, l] (f_l - f_k) along the node axis
    df = np.einsum("kl,acbmlnv->acbmknv", d_off, f) - row[:, None, None] * f
    out7 -= scale * df
    u_minus = np.concatenate([ghost_l[:, None], u7[:, :, :, :, -1]], axis=1)
    u_plus = np.concatenate([u7[:, :, :, :, 0], ghost_r[:, None]], axis=1)
    fhat = _lf_np(kind, u_minus, u_plus, d, a_d, a2)
    out7[:, :, :, :, -1] += lift_r * (f[:, :, :, :, -1] - fhat[:, 1:])
    out7[:, :, :, :, 0] += lift_l * (fhat[:, :-1] - f[:, :, :, :, 0])
    return -1


axis_rhs = axis_rhs_numba if USE_NUMBA else axis_rhs_numpy


@njit(nogil=True, cache=True)
def axpy_numba(y, alpha, x):
    """In-place ``y += alpha * x`` over C-contiguous arrays of equal size."""
    yf = y.reshape(y.size)
    xf = x.reshape(x.size)
    for i in range(yf.size):
        yf[i] += alpha * xf[i]


def axpy_numpy(y, alpha, x):
    y += alpha * x


axpy = axpy_numba if USE_NUMBA else axpy_numpy


@njit(nogil=True, cache=True)
def max_wavespeed_numba(u2, kind, speeds, a2):
    """Largest wavespeed bound over all points (rows of ``u2``) and axes."""
    best = 0.0
    dim = speeds.shape[0]
    if kind == ADVECTION:
        for d in range(dim):
            best = max(best, abs(speeds[d]))
        return best
    a = math.sqrt(a2)
    for i in range(u2.shape[0]):
        rho = u2[i, 0]
        for d in range(dim):
            best = max(best, abs(u2[i, d + 1] / rho) + a)
    return best


def max_wavespeed_numpy(u2, kind, speeds, a2):
    if kind == ADVECTION:
        return float(np.max(np.abs(speeds))) if speeds.size else 0.0
    dim = speeds.shape[0]
    return float(np.max(np.abs(u2[:, 1:dim + 1] / u2[:, :1]))) + math.sqrt(a2)


global_max_wavespeed = max_wavespeed_numba if USE_NUMBA else max_wavespeed_numpy
