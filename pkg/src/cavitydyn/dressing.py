"""Dressed (polariton) surfaces of a two-level molecule in a single-mode cavity.

Conventions
-----------
Basis of the one-excitation manifold: {|e,0>, |g,1>}.  The dressed states are

    |+> =  cos(theta) |e,0> + sin(theta) |g,1>      (upper, V_plus)
    |-> = -sin(theta) |e,0> + cos(theta) |g,1>      (lower, V_minus)

with cos(theta) = sqrt((Omega + delta)/(2 Omega)) and
sin(theta) = sign(g) sqrt((Omega - delta)/(2 Omega)).  This makes |+> the
eigenvector of the larger eigenvalue of :func:`jc_matrix` for either sign of
the detuning, and the channel labels follow the eigenvalue ordering.

Potentials omit the constant photon energy: V_pm = (Ve + Vg)/2 +- Omega/2,
V_g0 = Vg.  The absolute energies differ by ``offsets`` (omega_c for the
one-excitation channels, omega_c/2 for |g,0>), which only matter for
spectroscopic frequencies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .surfaces import BareSystem

DEGENERACY_TOL = 1e-14  # hartree


class CouplingError(ValueError):
    """The requested cavity coupling cannot be realized."""


@dataclass(frozen=True)
class CavityParams:
    """Single cavity mode: frequency and vacuum field amplitude (atomic units)."""

    omega_c: float
    eps_c: float
    n_c: int = 0

    def __post_init__(self):
        if not self.omega_c > 0:
            raise ValueError(f"cavity frequency must be positive, got {self.omega_c}")
        if not self.eps_c >= 0:
            raise ValueError(f"vacuum field amplitude must be >= 0, got {self.eps_c}")
        if self.n_c != 0:
            raise ValueError("only the vacuum photon manifold (n_c = 0) is supported")

    def coupling(self, mu_eg):
        """hbar g = eps_c mu_eg / 2."""
        return 0.5 * self.eps_c * np.asarray(mu_eg)

    def uncoupled(self) -> "CavityParams":
        return CavityParams(self.omega_c, 0.0)


def cavity_from_resonance(system: BareSystem, q_res, g_max, q_samples=None) -> CavityParams:
    """Cavity resonant with the vertical gap at ``q_res`` and peak coupling ``g_max``.

    The vacuum field is scaled so that max |g| over ``q_samples`` (default: 4001
    points spanning the system's domain) equals ``g_max``.
    """
    if not g_max > 0:
        raise ValueError("g_max must be positive")
    if q_samples is None:
        lo, hi = system.domain()
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValueError("q_samples required for curves without a finite domain")
        q_samples = np.linspace(lo, hi, 4001)
    q_samples = np.asarray(q_samples, dtype=float)
    if not (q_samples.min() <= q_res <= q_samples.max()):
        raise ValueError(f"resonance point {q_res} outside the sampled domain")
    vals = system.evaluate(np.array([q_res]))
    omega_c = float(vals["Ve"][0] - vals["Vg"][0])
    mu_max = float(np.max(np.abs(system.mu_eg(q_samples))))
    if mu_max == 0.0:
        raise CouplingError("transition dipole vanishes identically; cavity coupling is unrealizable")
    return CavityParams(omega_c=omega_c, eps_c=2.0 * g_max / mu_max)


@dataclass
class DressedSurfaces:
    """Pointwise dressed-state fields; arrays share the shape of ``q``."""

    q: np.ndarray
    Vg: np.ndarray
    Ve: np.ndarray
    mu_eg: np.ndarray
    delta_c: np.ndarray
    g: np.ndarray
    Omega: np.ndarray
    cos_theta: np.ndarray
    sin_theta: np.ndarray
    V_plus: np.ndarray
    V_minus: np.ndarray
    V_g0: np.ndarray
    mu_g_plus: np.ndarray
    mu_g_minus: np.ndarray
    mu_minus_plus: np.ndarray
    cavity: CavityParams
    offsets: dict = field(default_factory=dict)
    singular: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))
    basis: str = "dressed"

    def potentials(self):
        """Channel potentials in the order (g0, minus, plus)."""
        return np.stack([self.V_g0, self.V_minus, self.V_plus])

    def channel_offsets(self):
        return np.array([self.offsets["g0"], self.offsets["minus"], self.offsets["plus"]])

    def ground_dipoles(self):
        """Dipoles <g0|mu|minus>, <g0|mu|plus>."""
        return self.mu_g_minus, self.mu_g_plus


def dress(Vg, Ve, mu_eg, cavity: CavityParams, mu_gg=None, mu_ee=None, q=None) -> DressedSurfaces:
    """Dressed fields from sampled bare quantities (arrays of any common shape)."""
    Vg = np.asarray(Vg, dtype=float)
    Ve = np.asarray(Ve, dtype=float)
    mu_eg = np.asarray(mu_eg, dtype=float)
    mu_gg = np.zeros_like(Vg) if mu_gg is None else np.asarray(mu_gg, dtype=float)
    mu_ee = np.zeros_like(Vg) if mu_ee is None else np.asarray(mu_ee, dtype=float)

    delta = (Ve - Vg) - cavity.omega_c
    g = cavity.coupling(mu_eg)
    Omega = np.sqrt(4.0 * g**2 * (cavity.n_c + 1) + delta**2)
    singular = Omega <= DEGENERACY_TOL
    safe = np.where(singular, 1.0, Omega)
    cos_t = np.sqrt(np.clip((safe + delta) / (2.0 * safe), 0.0, 1.0))
    sin_t = np.sqrt(np.clip((safe - delta) / (2.0 * safe), 0.0, 1.0))
    sin_t = np.where(g < 0, -sin_t, sin_t)
    # exact degeneracy: equal mixing, point reported
    cos_t = np.where(singular, np.sqrt(0.5), cos_t)
    sin_t = np.where(singular, np.sqrt(0.5), sin_t)

    mean = 0.5 * (Ve + Vg)
    w = cavity.omega_c
    return DressedSurfaces(
        q=np.asarray(q) if q is not None else None,
        Vg=Vg, Ve=Ve, mu_eg=mu_eg,
        delta_c=delta, g=g, Omega=Omega,
        cos_theta=cos_t, sin_theta=sin_t,
        V_plus=mean + 0.5 * Omega, V_minus=mean - 0.5 * Omega, V_g0=Vg.copy(),
        mu_g_plus=cos_t * mu_eg,
        mu_g_minus=-sin_t * mu_eg,
        mu_minus_plus=cos_t * sin_t * (mu_gg - mu_ee),
        cavity=cavity,
        offsets={"g0": 0.5 * w, "minus": w, "plus": w},
        singular=np.flatnonzero(singular.ravel()),
    )


def dressed_fields(system: BareSystem, cavity: CavityParams, grid) -> DressedSurfaces:
    """Dressed surfaces of ``system`` sampled on ``grid`` (a Grid or an array of points)."""
    q = grid.q if hasattr(grid, "q") else np.asarray(grid, dtype=float)
    v = system.evaluate(q)
    return dress(v["Vg"], v["Ve"], v["mu_eg"], cavity, v["mu_gg"], v["mu_ee"], q=q)


def bare_surfaces(system: BareSystem, cavity: CavityParams, grid) -> DressedSurfaces:
    """Uncoupled reference in the diabatic basis: plus = |e,0>, minus = |g,1>.

    Same potential/offset convention as :func:`dress`, so absolute energies
    of the two descriptions coincide when g = 0.
    """
    q = grid.q if hasattr(grid, "q") else np.asarray(grid, dtype=float)
    v = system.evaluate(q)
    w = cavity.omega_c
    one = np.ones_like(q)
    zero = np.zeros_like(q)
    delta = v["Ve"] - v["Vg"] - w
    return DressedSurfaces(
        q=q, Vg=v["Vg"], Ve=v["Ve"], mu_eg=v["mu_eg"],
        delta_c=delta, g=zero, Omega=np.abs(delta),
        cos_theta=one, sin_theta=zero,
        V_plus=v["Ve"] - 0.5 * w, V_minus=v["Vg"] + 0.5 * w, V_g0=v["Vg"].copy(),
        mu_g_plus=v["mu_eg"].copy(), mu_g_minus=zero.copy(), mu_minus_plus=zero.copy(),
        cavity=cavity.uncoupled(),
        offsets={"g0": 0.5 * w, "minus": w, "plus": w},
        basis="bare",
    )


def jc_matrix(system: BareSystem, cavity: CavityParams, q) -> np.ndarray:
    """One-excitation Jaynes-Cummings matrix in the {|e,0>, |g,1>} basis at a single q."""
    v = system.evaluate(np.array([float(q)]))
    return jc_matrix_from_values(v["Vg"][0], v["Ve"][0], v["mu_eg"][0], cavity)


def jc_matrix_from_values(Vg, Ve, mu_eg, cavity: CavityParams):
    """Batched version: returns (..., 2, 2) for array inputs."""
    Vg = np.asarray(Vg, dtype=float)
    Ve = np.asarray(Ve, dtype=float)
    g = cavity.coupling(mu_eg) * np.sqrt(cavity.n_c + 1)
    w = cavity.omega_c
    M = np.empty(Vg.shape + (2, 2))
    M[..., 0, 0] = Ve + 0.5 * w
    M[..., 1, 1] = Vg + 1.5 * w
    M[..., 0, 1] = g
    M[..., 1, 0] = g
    return M


def oracle_eigenvectors(Vg, Ve, mu_eg, cavity: CavityParams, reference=None):
    """Numerically diagonalize the JC matrix at every point.

    Returns ``(eigvals, vec_minus, vec_plus)`` with eigenvalues ascending and
    eigenvectors in the {|e,0>, |g,1>} basis.  Each eigenvector's sign is
    chosen to maximize the overlap with ``reference`` (a pair of arrays of
    reference vectors, e.g. the analytic ones) or, without a reference, with
    its neighbor along the first axis (continuity gauge).
    """
    M = jc_matrix_from_values(Vg, Ve, mu_eg, cavity)
    evals, evecs = np.linalg.eigh(M)
    vm = evecs[..., :, 0].copy()
    vp = evecs[..., :, 1].copy()
    if reference is not None:
        ref_m, ref_p = reference
        vm *= np.where(np.sum(vm * ref_m, axis=-1) < 0, -1.0, 1.0)[..., None]
        vp *= np.where(np.sum(vp * ref_p, axis=-1) < 0, -1.0, 1.0)[..., None]
    else:
        for v in (vm, vp):
            if v.ndim == 2:
                for i in range(1, v.shape[0]):
                    if np.dot(v[i], v[i - 1]) < 0:
                        v[i] *= -1.0
    return evals, vm, vp


def analytic_eigenvectors(ds: DressedSurfaces):
    """(|->, |+>) in the {|e,0>, |g,1>} basis from the mixing angle."""
    c, s = ds.cos_theta, ds.sin_theta
    vp = np.stack([c, s], axis=-1)
    vm = np.stack([-s, c], axis=-1)
    return vm, vp


def gap_oracle_deviation(ds: DressedSurfaces) -> np.ndarray:
    """|(V+ - V-) - (lambda_max - lambda_min)| / max(1, |lambda_max|) per point."""
    M = jc_matrix_from_values(ds.Vg, ds.Ve, ds.mu_eg, ds.cavity)
    ev = np.linalg.eigvalsh(M)
    return np.abs((ds.V_plus - ds.V_minus) - (ev[..., 1] - ev[..., 0])) / np.maximum(1.0, np.abs(ev[..., 1]))
