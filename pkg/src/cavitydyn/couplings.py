"""Non-adiabatic couplings between the dressed channels {g0, -, +}.

All fields are for a single nuclear mode; multi-mode maps call the
functions once per mode with that mode's gradients.

Sign convention: ``f_mp`` is <phi_-|d/dq phi_+> for the states defined in
:mod:`cavitydyn.dressing`, which gives

    f_mp = (delta_c * dg/dq - g * dG) / Omega^2
         = -[ dG/(4g) (1 - delta_c^2/(4g^2 + delta_c^2)) - delta_c/(4g^2 + delta_c^2) dg/dq ]

i.e. the textbook expression written for the opposite detuning sign.  The
overall sign is a gauge choice; populations do not depend on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dressing import CavityParams, DressedSurfaces, oracle_eigenvectors
from .grid import gradient as grid_gradient

CHANNELS = ("g0", "minus", "plus")
G0, MINUS, PLUS = 0, 1, 2


@dataclass
class Gradients:
    """dG = d(Ve - Vg)/dq and dg = d(hbar g)/dq along one mode."""

    dG: np.ndarray
    dg: np.ndarray
    method: str = "auto"


def compute_gradients(ds: DressedSurfaces, grid, method="auto") -> Gradients:
    return Gradients(
        dG=grid_gradient(grid, ds.Ve - ds.Vg, method=method),
        dg=grid_gradient(grid, ds.g, method=method),
        method=method,
    )


def _singular_mask(ds):
    return ds.Omega <= 1e-14


def fmp_gradient_term(ds: DressedSurfaces, grads: Gradients):
    """Contribution of the gradient difference (vanishes for parallel bare surfaces).

    -dG/(4g) (1 - delta^2/Omega^2) written as -g dG/Omega^2, which avoids the
    cancellation in the bracket when |delta| >> g.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        return -ds.g * grads.dG / (4.0 * ds.g**2 + ds.delta_c**2)


def fmp_dipole_term(ds: DressedSurfaces, grads: Gradients):
    """Contribution of the transition-dipole gradient (vanishes in the Condon limit)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return ds.delta_c / (4.0 * ds.g**2 + ds.delta_c**2) * grads.dg


def derivative_coupling_pm(ds: DressedSurfaces, grads: Gradients):
    """f_{-,+} along one mode; non-finite (NaN) where Omega = 0."""
    # g * dG / Omega^2 is the g -> 0 safe form of dG/(4g) * 4g^2/Omega^2
    with np.errstate(divide="ignore", invalid="ignore"):
        Om2 = 4.0 * ds.g**2 + ds.delta_c**2
        f = (ds.delta_c * grads.dg - ds.g * grads.dG) / Om2
    return np.where(_singular_mask(ds), np.nan, f)


def ground_couplings(f_ge, ds: DressedSurfaces):
    f_ge = np.broadcast_to(np.asarray(f_ge, dtype=float), ds.cos_theta.shape)
    return f_ge * ds.cos_theta, -f_ge * ds.sin_theta


def lambda_field(ds: DressedSurfaces, grads: Gradients):
    d, g, Om = ds.delta_c, ds.g, ds.Omega
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = d / Om**3 * (4.0 * g * grads.dg + d * grads.dG) - grads.dG / Om
    return np.where(_singular_mask(ds), np.nan, lam)


def scalar_F_fields(ds: DressedSurfaces, grads: Gradients, bare_F=None, f_ge=None, Lam=None):
    """The five F = <d phi_k | d phi_l> fields.

    ``bare_F`` is an optional dict with F_gg, F_ee, F_ge (default zero).
    """
    zero = np.zeros_like(ds.cos_theta)
    bare_F = bare_F or {}
    F_gg = bare_F.get("F_gg", zero)
    F_ee = bare_F.get("F_ee", zero)
    F_ge = bare_F.get("F_ge", zero)
    f_ge = zero if f_ge is None else np.broadcast_to(np.asarray(f_ge, dtype=float), zero.shape)
    if Lam is None:
        Lam = lambda_field(ds, grads)
    c, s, d, g = ds.cos_theta, ds.sin_theta, ds.delta_c, ds.g
    with np.errstate(divide="ignore", invalid="ignore"):
        cav = Lam**2 / 4.0 + d**2 * Lam**2 / (16.0 * g**2)
        F_pp = F_gg * s**2 + F_ee * c**2 + cav
        F_mm = F_gg * c**2 + F_ee * s**2 + cav
        F_mp = s * c * (F_gg - F_ee)
        F_gp = F_ge * c + np.where(f_ge != 0, Lam * f_ge / (4.0 * c), 0.0)
        F_gm = -F_ge * s + np.where(f_ge != 0, Lam * f_ge / (4.0 * s), 0.0)
    return {"F_pp": F_pp, "F_mm": F_mm, "F_mp": F_mp, "F_gp": F_gp, "F_gm": F_gm}


def antisymmetric_f(f_mp, f_gp, f_gm):
    """3x3 (channel, channel, point) matrix with f_kl = -f_lk, zero diagonal."""
    n = np.shape(f_mp)
    f = np.zeros((3, 3) + n)
    f[MINUS, PLUS], f[PLUS, MINUS] = f_mp, -np.asarray(f_mp)
    f[G0, PLUS], f[PLUS, G0] = f_gp, -np.asarray(f_gp)
    f[G0, MINUS], f[MINUS, G0] = f_gm, -np.asarray(f_gm)
    return f


def symmetric_F(F):
    n = np.shape(F["F_pp"])
    M = np.zeros((3, 3) + n)
    M[PLUS, PLUS] = F["F_pp"]
    M[MINUS, MINUS] = F["F_mm"]
    M[MINUS, PLUS] = M[PLUS, MINUS] = F["F_mp"]
    M[G0, PLUS] = M[PLUS, G0] = F["F_gp"]
    M[G0, MINUS] = M[MINUS, G0] = F["F_gm"]
    return M


def scalar_couplings_h(f, F, grid, method="auto"):
    """h_kl = d/dq f_kl - F_kl for every channel pair; ``f`` and ``F`` are 3x3 stacks."""
    h = np.empty_like(np.asarray(F, dtype=float))
    for k in range(3):
        for l in range(3):
            fk = np.asarray(f[k][l], dtype=float)
            df = np.zeros_like(fk) if not np.any(fk) else grid_gradient(grid, fk, method=method)
            h[k, l] = df - F[k][l]
    return h


@dataclass
class CouplingFields:
    q: np.ndarray
    f_mp: np.ndarray
    f_gp: np.ndarray
    f_gm: np.ndarray
    Lambda: np.ndarray
    F: dict
    h: np.ndarray
    dG: np.ndarray
    dg_dq: np.ndarray
    singular: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))
    gradient_method: str = "auto"

    @property
    def f(self):
        return antisymmetric_f(self.f_mp, self.f_gp, self.f_gm)

    @property
    def F_matrix(self):
        return symmetric_F(self.F)

    @property
    def h_mp(self):
        return self.h[MINUS, PLUS]


def compute_couplings(ds: DressedSurfaces, grid, f_ge=None, bare_F=None, method="auto") -> CouplingFields:
    """All coupling fields on a 1-D grid.

    Points where Omega = 0, or where a ground-dressed F term divides by a
    vanishing mixing coefficient with f_ge != 0, are reported in ``singular``.
    """
    grads = compute_gradients(ds, grid, method=method)
    f_mp = derivative_coupling_pm(ds, grads)
    f_ge_arr = np.zeros_like(ds.cos_theta) if f_ge is None else np.broadcast_to(np.asarray(f_ge, float), ds.cos_theta.shape)
    f_gp, f_gm = ground_couplings(f_ge_arr, ds)
    lam = lambda_field(ds, grads)
    F = scalar_F_fields(ds, grads, bare_F=bare_F, f_ge=f_ge_arr, Lam=lam)
    bad = ~np.isfinite(f_mp)
    for arr in F.values():
        bad |= ~np.isfinite(arr)
    singular = np.flatnonzero(bad)
    if singular.size:
        f_use = np.where(bad, 0.0, f_mp)
        F_use = {k: np.where(bad, 0.0, v) for k, v in F.items()}
    else:
        f_use, F_use = f_mp, F
    h = scalar_couplings_h(antisymmetric_f(f_use, f_gp, f_gm), symmetric_F(F_use), grid, method=method)
    return CouplingFields(
        q=ds.q, f_mp=f_mp, f_gp=f_gp, f_gm=f_gm, Lambda=lam, F=F, h=h,
        dG=grads.dG, dg_dq=grads.dg, singular=singular, gradient_method=method,
    )


# ---------------------------------------------------------------------------
# finite-difference eigenvector oracles (independent of the formulas above)
# ---------------------------------------------------------------------------

def _eigvecs_at(system, cavity: CavityParams, q):
    v = system.evaluate(np.atleast_1d(np.asarray(q, dtype=float)))
    return oracle_eigenvectors(v["Vg"], v["Ve"], v["mu_eg"], cavity)


def _gauge_to(ref, vec):
    return vec * np.where(np.sum(ref * vec, axis=-1) < 0, -1.0, 1.0)[..., None]


def _analytic_gauge(system, cavity, q, vm, vp):
    """Fix eigenvector signs to the analytic convention: +e component of |+>, +g1 component of |->."""
    # |+> = (c, s) with c >= 0;  |-> = (-s, c) with c >= 0
    flip_p = vp[..., 0] < 0
    vp = np.where(flip_p[..., None], -vp, vp)
    flip_m = vm[..., 1] < 0
    vm = np.where(flip_m[..., None], -vm, vm)
    return vm, vp


def fd_derivative_coupling(system, cavity: CavityParams, q, dq=1e-4):
    """Central-difference <phi_-|d phi_+> with both vectors in the analytic sign gauge."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    _, vm0, vp0 = _eigvecs_at(system, cavity, q)
    vm0, vp0 = _analytic_gauge(system, cavity, q, vm0, vp0)
    _, _, vp_hi = _eigvecs_at(system, cavity, q + dq)
    _, _, vp_lo = _eigvecs_at(system, cavity, q - dq)
    vp_hi = _gauge_to(vp0, vp_hi)
    vp_lo = _gauge_to(vp0, vp_lo)
    return (np.sum(vm0 * vp_hi, axis=-1) - np.sum(vm0 * vp_lo, axis=-1)) / (2.0 * dq)


def fd_second_derivative_coupling(system, cavity: CavityParams, q, dq=1e-3):
    """<phi_-|d^2 phi_+> by a second-order central difference of the + eigenvector."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    _, vm0, vp0 = _eigvecs_at(system, cavity, q)
    vm0, vp0 = _analytic_gauge(system, cavity, q, vm0, vp0)
    _, _, vp_hi = _eigvecs_at(system, cavity, q + dq)
    _, _, vp_lo = _eigvecs_at(system, cavity, q - dq)
    vp_hi = _gauge_to(vp0, vp_hi)
    vp_lo = _gauge_to(vp0, vp_lo)
    d2 = (vp_hi - 2.0 * vp0 + vp_lo) / dq**2
    return np.sum(vm0 * d2, axis=-1)


def fd_mixing_angle_derivative(system, cavity: CavityParams, q, dq=1e-4):
    """d theta/dq, theta being the polar angle of the numerical |+> eigenvector."""
    q = np.atleast_1d(np.asarray(q, dtype=float))

    def theta(x):
        _, vm, vp = _eigvecs_at(system, cavity, x)
        vm, vp = _analytic_gauge(system, cavity, x, vm, vp)
        return np.arctan2(vp[..., 1], vp[..., 0])

    return (theta(q + dq) - theta(q - dq)) / (2.0 * dq)
