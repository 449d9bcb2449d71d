"""Coupled-channel Hamiltonian, Krylov short-time propagator and initial states.

Wave packets are stored as a (3, n) complex array with rows ordered
(g0, minus, plus).  The channel Hamiltonian is

    H_kl = delta_kl (T + V_k) - (1/2m) [f_kl d/dq + d/dq f_kl]      (simplified)
           + (1/2m) F_kl                                           (full)

where f_kl = <phi_k|d phi_l> and F_kl = <d phi_k|d phi_l>.  The first
derivative term is applied in the symmetrized operator form
f D + D f = 2 f D + (D f), which is Hermitian for any real antisymmetric f.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.fft as sfft

from . import _kernels
from .couplings import CHANNELS, G0, MINUS, PLUS, CouplingFields
from .dressing import DressedSurfaces
from .grid import Grid, PMLOperators, make_pml

KRYLOV_MIN_DIM = 8
KRYLOV_MAX_DIM = 64


class KrylovConvergenceError(RuntimeError):
    """The Krylov subspace hit its dimension cap before reaching the tolerance."""


class GroundStateError(RuntimeError):
    """The two ground-state methods disagree."""


@dataclass
class WavePacket:
    """Channel amplitudes (rows g0, minus, plus) on a grid at time ``time`` (a.u.)."""

    data: np.ndarray
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=complex)
        if self.data.ndim != 2 or self.data.shape[0] != len(CHANNELS):
            raise ValueError(f"wave packet must have shape (3, n), got {self.data.shape}")

    @classmethod
    def zeros(cls, n, time=0.0):
        return cls(np.zeros((3, n), dtype=complex), time)

    @classmethod
    def from_channels(cls, g0=None, minus=None, plus=None, n=None, time=0.0):
        arrs = [a for a in (g0, minus, plus) if a is not None]
        n = n if n is not None else len(arrs[0])
        data = np.zeros((3, n), dtype=complex)
        for i, a in enumerate((g0, minus, plus)):
            if a is not None:
                data[i] = a
        return cls(data, time)

    @property
    def channels(self):
        return {name: self.data[i] for i, name in enumerate(CHANNELS)}

    def copy(self):
        return WavePacket(self.data.copy(), self.time, dict(self.meta))

    def norm2(self, grid: Grid):
        return float(np.sum(np.abs(self.data) ** 2) * grid.dq)

    def check(self, grid: Grid, tol=1e-10):
        if self.data.shape[1] != grid.n:
            raise ValueError(f"wave packet has {self.data.shape[1]} points, grid has {grid.n}")
        if self.norm2(grid) > 1.0 + tol:
            raise ValueError(f"wave packet norm {self.norm2(grid)!r} exceeds 1")


class Hamiltonian:
    """Action of the coupled-channel Hamiltonian on (nc, n) channel blocks.

    Parameters
    ----------
    grid : Grid
    potentials : (3, n) array
        Diagonal channel potentials (g0, minus, plus).
    couplings : CouplingFields or None
        ``None`` means f = F = 0 (uncoupled channels).
    mode : {"simplified", "full"}
    pml : PMLOperators or None
    offsets : (3,) array or None
        Constant energy added per channel (absolute photon energies).
    """

    def __init__(self, grid: Grid, potentials, couplings: CouplingFields = None, mode="simplified",
                 pml: PMLOperators = None, offsets=None):
        if mode not in ("simplified", "full"):
            raise ValueError(f"mode must be 'simplified' or 'full', got {mode!r}")
        self.grid = grid
        self.mode = mode
        self.pml = pml if pml is not None else make_pml(grid, None)
        V = np.array(potentials, dtype=float)
        if V.shape != (3, grid.n):
            raise ValueError(f"potentials must have shape (3, {grid.n}), got {V.shape}")
        if offsets is not None:
            V = V + np.asarray(offsets, dtype=float)[:, None]
        self.V = V
        self.couplings = couplings
        self._pairs = []
        self._F = []
        if couplings is not None:
            f = couplings.f
            for k, l in ((MINUS, PLUS), (G0, PLUS), (G0, MINUS)):
                fk = np.nan_to_num(np.asarray(f[k, l], dtype=float))
                if np.any(fk):
                    self._pairs.append((k, l, np.ascontiguousarray(fk)))
            if mode == "full":
                Fm = np.nan_to_num(couplings.F_matrix)
                for k in range(3):
                    for l in range(k, 3):
                        if np.any(Fm[k, l]):
                            self._F.append((k, l, np.ascontiguousarray(Fm[k, l])))
        self.hermitian = not self.pml.active
        self._ones = np.ones(grid.n)
        self._zeros = np.zeros(grid.n, dtype=complex)

    @property
    def scale(self):
        return -0.5 / self.grid.mass

    def blocks(self):
        """Groups of channels connected by couplings; each evolves independently."""
        parent = list(range(3))

        def find(i):
            while parent[i] != i:
                i = parent[i]
            return i

        for k, l, _ in self._pairs:
            parent[find(k)] = find(l)
        for k, l, _ in self._F:
            parent[find(k)] = find(l)
        groups = {}
        for c in range(3):
            groups.setdefault(find(c), []).append(c)
        return [tuple(g) for g in sorted(groups.values())]

    def apply_block(self, psi, chans):
        """H restricted to the channel rows ``chans`` (a coupling-closed set)."""
        chans = tuple(chans)
        pos = {c: i for i, c in enumerate(chans)}
        psi = np.ascontiguousarray(psi, dtype=complex)
        pairs = [(pos[k], pos[l], f) for k, l, f in self._pairs if k in pos and l in pos]
        V = self.V[list(chans)]
        if self.pml.active:
            # T = scale s D s D and the D(f psi) terms share the outer s D: two batched transforms
            s = self.pml.stretch
            dpsi = s * self.grid.spectral_derivative(psi)
            w = dpsi.copy()
            for k, l, f in pairs:
                w[k] += f * psi[l]
                w[l] -= f * psi[k]
            out = _kernels.combine(self.grid.spectral_derivative(w), V, psi, self.scale * s)
            for k, l, f in pairs:
                _kernels.add_coupling(out, k, l, f, dpsi, self._zeros, self._zeros, self.scale)
        else:
            out = self._apply_plain(psi, V, pairs)
        for k, l, F in self._F:
            if k in pos and l in pos:
                i, j = pos[k], pos[l]
                out[i] += (-self.scale) * F * psi[j]
                if i != j:
                    out[j] += (-self.scale) * F * psi[i]
        return out

    def _apply_plain(self, psi, V, pairs):
        # T psi and the D(f psi) terms share one inverse transform per row
        g = self.grid
        ph = sfft.fft(psi, axis=-1)
        spec = g._t_diag * ph
        if not pairs:
            return _kernels.combine(sfft.ifft(spec, axis=-1), V, psi, self._ones)
        dpsi = sfft.ifft(g._ik * ph, axis=-1)
        for k, l, f in pairs:
            fh = sfft.fft(f * psi[[l, k]], axis=-1)
            spec[k] += self.scale * g._ik * fh[0]
            spec[l] -= self.scale * g._ik * fh[1]
        out = _kernels.combine(sfft.ifft(spec, axis=-1), V, psi, self._ones)
        for k, l, f in pairs:
            _kernels.add_coupling(out, k, l, f, dpsi, self._zeros, self._zeros, self.scale)
        return out

    def apply(self, psi):
        """H acting on a full (3, n) array."""
        return self.apply_block(psi, (0, 1, 2))

    def energy(self, psi):
        """<psi|H|psi> / <psi|psi> for a (3, n) array."""
        psi = np.asarray(psi)
        num = np.vdot(psi, self.apply(psi))
        return num / np.vdot(psi, psi)


def apply_hamiltonian(H: Hamiltonian, psi: WavePacket) -> WavePacket:
    if psi.data.shape[1] != H.grid.n:
        raise ValueError("wave packet and Hamiltonian grids differ")
    return WavePacket(H.apply(psi.data), psi.time)


# ---------------------------------------------------------------------------
# Krylov exponential
# ---------------------------------------------------------------------------

@dataclass
class KrylovStats:
    steps: int = 0
    matvecs: int = 0
    max_dim: int = 0
    absorbed: float = 0.0


def _small_expm(Hm, tau, hermitian):
    """exp(-i Hm tau) for a small matrix; Hm Hermitian tridiagonal uses eigh."""
    if hermitian:
        w, U = np.linalg.eigh(Hm)
        return (U * np.exp(-1j * w * tau)) @ U.conj().T
    return sla.expm(-1j * tau * Hm)


def _gl_nodes(n=6):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


_GL_X, _GL_W = _gl_nodes()


def krylov_expm(matvec, v, dt, tol, hermitian=True, min_dim=KRYLOV_MIN_DIM, max_dim=KRYLOV_MAX_DIM,
                imaginary=False):
    """Approximate exp(-i A dt) v (or exp(-A dt) v with ``imaginary``).

    The subspace is extended until the a-posteriori estimate
    h_{m+1,m} |[exp(-i H_m dt)]_{m,0}| ||v|| drops below ``tol``.

    Returns
    -------
    w : array like v
    info : dict with ``dim``, ``err`` and ``loss`` (norm loss computed in the
        subspace by Gauss-Legendre quadrature of 2 Im y^H H_m y).
    """
    shape = v.shape
    beta = np.linalg.norm(v)
    if beta == 0.0:
        return np.zeros_like(v), {"dim": 0, "err": 0.0, "loss": 0.0}
    n = v.size
    V = np.empty((max_dim + 1, n), dtype=complex)
    Hm = np.zeros((max_dim + 1, max_dim), dtype=complex)
    V[0] = v.ravel() / beta
    tau = -1j * dt if imaginary else dt
    err = np.inf
    for j in range(max_dim):
        w = matvec(V[j].reshape(shape)).ravel()
        if hermitian:
            # Lanczos recurrence with a full reorthogonalization pass
            a = np.vdot(V[j], w).real
            w -= a * V[j]
            if j > 0:
                w -= Hm[j, j - 1].real * V[j - 1]
            c = np.conj(V[:j + 1] @ np.conj(w))
            w -= c @ V[:j + 1]
            Hm[j, j] = a
        else:
            # classical Gram-Schmidt, applied twice
            c = np.conj(V[:j + 1] @ np.conj(w))
            w -= c @ V[:j + 1]
            c2 = np.conj(V[:j + 1] @ np.conj(w))
            w -= c2 @ V[:j + 1]
            Hm[:j + 1, j] = c + c2
        h = np.linalg.norm(w)
        m = j + 1
        breakdown = h < 1e-14 * max(1.0, abs(Hm[j, j]))
        if hermitian and j + 1 < max_dim + 1:
            Hm[j + 1, j] = h
            if j + 1 < max_dim:
                Hm[j, j + 1] = h
        else:
            Hm[j + 1, j] = h
        if m >= min_dim or breakdown:
            E = _small_expm(Hm[:m, :m], tau, hermitian)
            err = h * abs(E[m - 1, 0]) * beta
            if err < tol or breakdown:
                y = E[:, 0] * beta
                out = (y @ V[:m]).reshape(shape)
                loss = 0.0
                if not hermitian and not imaginary:
                    Hs = Hm[:m, :m]
                    for x, wt in zip(_GL_X, _GL_W):
                        yt = sla.expm(-1j * x * dt * Hs)[:, 0] * beta
                        loss += -2.0 * wt * dt * np.vdot(yt, Hs @ yt).imag
                return out, {"dim": m, "err": err, "loss": loss}
        V[j + 1] = w / h
    raise KrylovConvergenceError(
        f"Krylov dimension cap {max_dim} reached with error estimate {err:.3e} > tol {tol:.1e}; "
        f"reduce the time step (dt = {dt})"
    )


def propagate_step(H: Hamiltonian, psi: WavePacket, dt, tol=1e-9, stats: KrylovStats = None) -> WavePacket:
    """One step psi -> exp(-i H dt) psi; each coupled channel block separately."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    out = np.zeros_like(psi.data)
    for chans in H.blocks():
        block = psi.data[list(chans)]
        if not np.any(block):
            continue
        mv = lambda x, c=chans: H.apply_block(x, c)
        w, info = krylov_expm(mv, block, dt, tol, hermitian=H.hermitian)
        out[list(chans)] = w
        if stats is not None:
            stats.matvecs += info["dim"]
            stats.max_dim = max(stats.max_dim, info["dim"])
            stats.absorbed += info["loss"] * H.grid.dq
    if stats is not None:
        stats.steps += 1
    return WavePacket(out, psi.time + dt, psi.meta)


def propagate(H: Hamiltonian, psi: WavePacket, dt, n_steps, tol=1e-9, callback=None, every=1,
              stats: KrylovStats = None):
    """Propagate ``n_steps`` steps; ``callback(step, psi, stats)`` every ``every`` steps and at step 0."""
    stats = stats if stats is not None else KrylovStats()
    if callback is not None:
        callback(0, psi, stats)
    for s in range(1, n_steps + 1):
        psi = propagate_step(H, psi, dt, tol, stats)
        if callback is not None and (s % every == 0 or s == n_steps):
            callback(s, psi, stats)
    return psi, stats


# ---------------------------------------------------------------------------
# Ground state
# ---------------------------------------------------------------------------

@dataclass
class GroundState:
    chi: np.ndarray
    energy: float
    energy_check: float = float("nan")
    method: str = "fgh"


def fgh_ground_state(V, grid: Grid):
    """Lowest eigenpair of the periodic Fourier-grid Hamiltonian T + V."""
    H = _kernels.fgh_matrix(np.asarray(V, dtype=float), grid.dq, grid.mass)
    w, U = sla.eigh(H, subset_by_index=[0, 0])
    chi = U[:, 0] / math.sqrt(grid.dq)
    if chi[np.argmax(np.abs(chi))] < 0:
        chi = -chi
    return chi, float(w[0])


def imaginary_time_ground_state(V, grid: Grid, chi0=None, dtau=20.0, tol=1e-8, max_steps=20000):
    """Relax by repeated Krylov application of exp(-H dtau) with renormalization.

    Stops when the relative energy change over 10 steps is below ``tol``/10.
    """
    V = np.asarray(V, dtype=float)
    Hop = Hamiltonian(grid, np.stack([V, V, V]))
    mv = lambda x: Hop.apply_block(x, (0,))
    if chi0 is None:
        # Gaussian guess at the potential minimum with the local harmonic width
        i = int(np.argmin(V))
        curv = max(np.gradient(np.gradient(V, grid.dq), grid.dq)[i], 1e-6)
        width = (1.0 / (grid.mass * curv)) ** 0.25
        chi0 = np.exp(-0.5 * ((grid.q - grid.q[i]) / width) ** 2)
    x = np.asarray(chi0, dtype=complex)[None, :]
    x /= math.sqrt(np.sum(np.abs(x) ** 2) * grid.dq)
    e_hist = []
    for step in range(max_steps):
        x, _ = krylov_expm(mv, x, dtau, 1e-12, hermitian=True, imaginary=True)
        x = x.real.astype(complex)
        x /= math.sqrt(np.sum(np.abs(x) ** 2) * grid.dq)
        e = float(np.vdot(x, mv(x)).real * grid.dq)
        e_hist.append(e)
        if len(e_hist) > 10 and abs(e_hist[-11] - e) < 0.1 * tol * abs(e):
            break
    chi = x[0].real
    if chi[np.argmax(np.abs(chi))] < 0:
        chi = -chi
    return chi, e_hist[-1]


def relax_ground_state(V, grid: Grid, method="fgh", check=False, rtol=1e-8) -> GroundState:
    """Normalized lowest eigenfunction of T + V.

    ``method`` is ``"fgh"`` (dense diagonalization) or ``"imaginary"``.
    With ``check=True`` both are computed and a :class:`GroundStateError` is
    raised if their energies differ by more than ``rtol`` relative.
    """
    V = np.asarray(V, dtype=float)
    if not np.all(np.isfinite(V)):
        raise ValueError("potential must be finite on the grid")
    if method == "fgh":
        chi, e = fgh_ground_state(V, grid)
    elif method == "imaginary":
        chi, e = imaginary_time_ground_state(V, grid)
    else:
        raise ValueError(f"unknown ground-state method {method!r}")
    gs = GroundState(chi, e, method=method)
    if check:
        other = "imaginary" if method == "fgh" else "fgh"
        if other == "fgh":
            _, e2 = fgh_ground_state(V, grid)
        else:
            _, e2 = imaginary_time_ground_state(V, grid, chi0=chi, tol=rtol * 0.1)
        gs.energy_check = e2
        if abs(e2 - e) > rtol * abs(e):
            raise GroundStateError(f"ground-state energies disagree: {e!r} ({method}) vs {e2!r} ({other})")
    return gs


# ---------------------------------------------------------------------------
# Doorway state
# ---------------------------------------------------------------------------

def prepare_doorway(chi0, ds: DressedSurfaces, grid: Grid, mu0=None) -> WavePacket:
    """Impulsive excitation of ``chi0`` into the dressed one-excitation channels.

    The channel weights are (cos theta mu, -sin theta mu) with mu the
    transition dipole field of ``ds`` or, when ``mu0`` is given, a constant
    Condon dipole.  The packet is renormalized; the pre-normalization
    populations are kept in ``meta``.
    """
    chi0 = np.asarray(chi0)
    mu = ds.mu_eg if mu0 is None else np.full_like(ds.cos_theta, float(mu0))
    psi = WavePacket.zeros(grid.n)
    psi.data[PLUS] = ds.cos_theta * mu * chi0
    psi.data[MINUS] = -ds.sin_theta * mu * chi0
    w_plus = float(np.sum(np.abs(psi.data[PLUS]) ** 2) * grid.dq)
    w_minus = float(np.sum(np.abs(psi.data[MINUS]) ** 2) * grid.dq)
    total = w_plus + w_minus
    if not total > 0:
        raise ValueError("doorway state has zero weight (vanishing dipole or initial state)")
    psi.data /= math.sqrt(total)
    psi.meta = {"weight_plus": w_plus, "weight_minus": w_minus, "weight_total": total}
    return psi


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, psi: WavePacket, grid: Grid, scenario_hash="", extra=None):
    """Plain-text dump: q and Re/Im of each channel, header with time and grid."""
    cols = [grid.q]
    for i in range(3):
        cols += [psi.data[i].real, psi.data[i].imag]
    header = [
        f"time_au = {psi.time!r}",
        "grid = " + " ".join(f"{k}={v!r}" for k, v in grid.metadata().items()),
        f"scenario_hash = {scenario_hash}",
    ]
    for k, v in (extra or {}).items():
        header.append(f"{k} = {v}")
    header.append("q_bohr re_g0 im_g0 re_minus im_minus re_plus im_plus")
    np.savetxt(path, np.column_stack(cols), header="\n".join(header), fmt="%.17e")


def load_checkpoint(path):
    """Returns (q, WavePacket, header dict)."""
    head = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if " = " in body:
                k, v = body.split(" = ", 1)
                head[k.strip()] = v.strip()
    arr = np.loadtxt(path, ndmin=2)
    if arr.shape[1] != 7:
        raise ValueError(f"checkpoint {path} must have 7 columns, found {arr.shape[1]}")
    data = np.stack([arr[:, 1 + 2 * i] + 1j * arr[:, 2 + 2 * i] for i in range(3)])
    return arr[:, 0], WavePacket(data, float(head.get("time_au", 0.0))), head
