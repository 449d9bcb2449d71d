"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``CAVITYDYN_NO_NUMBA=1`` in the environment to force the numpy path
(also used automatically when numba is not importable).  Both variants of
every kernel are importable as ``<name>_numba`` / ``<name>_numpy`` so the
test suite and the benchmark can compare them directly.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba as nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("CAVITYDYN_NO_NUMBA", "0") not in ("1", "true", "yes")


def _njit(fn):
    if HAVE_NUMBA:
        return nb.njit(cache=True)(fn)
    return fn


# ---------------------------------------------------------------------------
# 8th-order finite-difference first derivative
# ---------------------------------------------------------------------------

def _fd_weights(offsets, order=1):
    """Finite-difference weights for the ``order``-th derivative at 0 from integer offsets."""
    offsets = np.asarray(offsets, dtype=float)
    n = len(offsets)
    A = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(A, rhs)


def _build_fd8_tables():
    central = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
    # edge rows: point i in 0..3 uses samples 0..8
    left = np.empty((4, 9))
    for i in range(4):
        left[i] = _fd_weights(np.arange(9) - i)
    right = -left[::-1, ::-1]
    return central, left, right


FD8_CENTRAL, FD8_LEFT, FD8_RIGHT = _build_fd8_tables()


def fd8_gradient_numpy(y, dx):
    y = np.asarray(y)
    n = y.shape[0]
    out = np.empty_like(y)
    c = FD8_CENTRAL
    out[4:n - 4] = (
        c[0] * y[0:n - 8] + c[1] * y[1:n - 7] + c[2] * y[2:n - 6] + c[3] * y[3:n - 5]
        + c[5] * y[5:n - 3] + c[6] * y[6:n - 2] + c[7] * y[7:n - 1] + c[8] * y[8:n]
    )
    out[:4] = FD8_LEFT @ y[:9]
    out[n - 4:] = FD8_RIGHT @ y[n - 9:]
    return out / dx


@_njit
def _fd8_loop(y, dx, central, left, right):
    n = y.shape[0]
    out = np.empty_like(y)
    for i in range(4, n - 4):
        acc = 0.0 * y[0]
        for j in range(9):
            acc += central[j] * y[i - 4 + j]
        out[i] = acc
    for i in range(4):
        accl = 0.0 * y[0]
        accr = 0.0 * y[0]
        for j in range(9):
            accl += left[i, j] * y[j]
            accr += right[i, j] * y[n - 9 + j]
        out[i] = accl
        out[n - 4 + i] = accr
    for i in range(n):
        out[i] = out[i] / dx
    return out


def fd8_gradient_numba(y, dx):
    y = np.ascontiguousarray(y)
    return _fd8_loop(y, float(dx), FD8_CENTRAL, FD8_LEFT, FD8_RIGHT)


# ---------------------------------------------------------------------------
# Periodic Fourier-grid kinetic matrix (+ potential on the diagonal)
# ---------------------------------------------------------------------------

def fgh_matrix_numpy(potential, dx, mass):
    n = potential.shape[0]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=dx)
    col = np.fft.ifft(k**2 / (2.0 * mass)).real
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    H = col[idx]
    H[np.diag_indices(n)] += potential
    return H


@_njit
def _fgh_fill(potential, dx, mass):
    n = potential.shape[0]
    col = np.zeros(n)
    dk = 2.0 * np.pi / (n * dx)
    # c_r = (1/N) sum_p (k_p^2 / 2m) cos(k_p r dx), p over numpy fftfreq ordering
    for r in range(n):
        acc = 0.0
        for p in range(n):
            pp = p if p < (n + 1) // 2 else p - n
            kp = pp * dk
            acc += kp * kp * np.cos(2.0 * np.pi * pp * r / n)
        col[r] = acc / (2.0 * mass * n)
    H = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            H[i, j] = col[(i - j) % n]
        H[i, i] += potential[i]
    return H


def fgh_matrix_numba(potential, dx, mass):
    return _fgh_fill(np.ascontiguousarray(potential, dtype=np.float64), float(dx), float(mass))


# ---------------------------------------------------------------------------
# Fused channel combination for the coupled-channel Hamiltonian action
# ---------------------------------------------------------------------------

def combine_numpy(tpsi, pot, psi, s):
    """out = s * tpsi + pot * psi, rowwise (s is the PML stretch or ones)."""
    return s * tpsi + pot * psi


@_njit
def _combine_loop(tpsi, pot, psi, s):
    nc, n = psi.shape
    out = np.empty_like(psi)
    for c in range(nc):
        for i in range(n):
            out[c, i] = s[i] * tpsi[c, i] + pot[c, i] * psi[c, i]
    return out


def combine_numba(tpsi, pot, psi, s):
    return _combine_loop(tpsi, pot, psi, s)


def coupling_numpy(out, k, l, f, dpsi, dfpsi_l, dfpsi_k, scale):
    """Add scale*(f dpsi_l + D(f psi_l)) to row k and the antisymmetric partner to row l."""
    out[k] += scale * (f * dpsi[l] + dfpsi_l)
    out[l] -= scale * (f * dpsi[k] + dfpsi_k)


@_njit
def _coupling_loop(out, k, l, f, dpsi, dfpsi_l, dfpsi_k, scale):
    n = out.shape[1]
    for i in range(n):
        out[k, i] += scale * (f[i] * dpsi[l, i] + dfpsi_l[i])
        out[l, i] -= scale * (f[i] * dpsi[k, i] + dfpsi_k[i])


def coupling_numba(out, k, l, f, dpsi, dfpsi_l, dfpsi_k, scale):
    _coupling_loop(out, k, l, f, dpsi, dfpsi_l, dfpsi_k, float(scale))


# ---------------------------------------------------------------------------
# Triangular double-time quadrature for the transient-absorption signal
# ---------------------------------------------------------------------------

def triangle_sum_numpy(corr, w_t, w_tau, e_t, e_tau):
    """sum_{i>=j} w_t[i] w_tau[j] h_ij e_t[i] e_tau[j] corr[i, j] with h_ii = 1/2.

    ``corr[i, j]`` holds the correlation at t = t_i, tau = t_j; entries with
    j > i are ignored.
    """
    n = corr.shape[0]
    W = np.tril(np.outer(w_t * e_t, w_tau * e_tau))
    W[np.diag_indices(n)] *= 0.5
    return np.sum(W * np.tril(corr))


@_njit
def _triangle_loop(corr, w_t, w_tau, e_t, e_tau):
    n = corr.shape[0]
    acc = 0.0j
    for i in range(n):
        for j in range(i + 1):
            wij = w_t[i] * w_tau[j]
            if i == j:
                wij *= 0.5
            acc += wij * e_t[i] * e_tau[j] * corr[i, j]
    return acc


def triangle_sum_numba(corr, w_t, w_tau, e_t, e_tau):
    return _triangle_loop(
        np.ascontiguousarray(corr, dtype=np.complex128),
        np.ascontiguousarray(w_t, dtype=np.float64),
        np.ascontiguousarray(w_tau, dtype=np.float64),
        np.ascontiguousarray(e_t, dtype=np.complex128),
        np.ascontiguousarray(e_tau, dtype=np.complex128),
    )


if USE_NUMBA:
    fd8_gradient = fd8_gradient_numba
    fgh_matrix = fgh_matrix_numba
    combine = combine_numba
    add_coupling = coupling_numba
    triangle_sum = triangle_sum_numba
else:
    fd8_gradient = fd8_gradient_numpy
    fgh_matrix = fgh_matrix_numpy
    combine = combine_numpy
    add_coupling = coupling_numpy
    triangle_sum = triangle_sum_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
