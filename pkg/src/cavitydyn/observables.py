"""Populations, lifetimes and the frequency-integrated transient-absorption signal.

Signal convention
-----------------
The probe field is E(t) = A exp(-i w_L t - t^2 / 2 sigma^2).  The excited
packet Psi(t) (channels minus, plus) is projected onto the g0 channel with
the dressed dipoles, d(t) = mu_g- psi_-(t) + mu_g+ psi_+(t), and

    C(t, tau) = <d(t)| U_g0(t - tau) |d(tau)>          (tau <= t)
    S_N(T)    = 2 Re  int dt int^t dtau  E(t - T) E*(tau - T) C(t, tau)

with absolute channel energies (photon offsets) in the phases.  This is
-2 Im of i times the same double integral (the i being the first-order
propagator prefactor), oriented so that stimulated emission from an
excited population gives S_N > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.linalg as sla
from scipy.optimize import least_squares

from . import _kernels
from .couplings import G0, MINUS, PLUS
from .dressing import DressedSurfaces
from .dynamics import Hamiltonian, KrylovStats, WavePacket, krylov_expm, propagate_step
from .grid import Grid
from .units import AU_TIME_IN_FS, fwhm_to_sigma, to_au

FWHM_FACTOR = 2.0 * math.sqrt(2.0 * math.log(2.0))
MIN_WINDOW_NODES = 40


# ---------------------------------------------------------------------------
# populations
# ---------------------------------------------------------------------------

def populations(psi: WavePacket, grid: Grid):
    """(P_g0, P_minus, P_plus, norm) by the uniform-grid trapezoid rule."""
    P = np.sum(np.abs(psi.data) ** 2, axis=-1) * grid.dq
    return float(P[G0]), float(P[MINUS]), float(P[PLUS]), float(P.sum())


@dataclass
class PopulationTrace:
    """Channel populations versus time (fs); ``absorbed`` is the cumulative PML loss."""

    times: np.ndarray
    P_g0: np.ndarray
    P_minus: np.ndarray
    P_plus: np.ndarray
    norm: np.ndarray
    absorbed: np.ndarray = None

    def __post_init__(self):
        for name in ("times", "P_g0", "P_minus", "P_plus", "norm"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.absorbed is None:
            self.absorbed = np.zeros_like(self.times)
        self.absorbed = np.asarray(self.absorbed, dtype=float)

    def channel(self, name):
        return {"g0": self.P_g0, "minus": self.P_minus, "plus": self.P_plus, "norm": self.norm}[name]

    def check(self, tol=1e-10):
        P = np.stack([self.P_g0, self.P_minus, self.P_plus])
        if np.any(P < -tol) or np.any(P > 1 + tol):
            raise ValueError("population outside [0, 1]")
        if np.any(self.norm > 1 + tol):
            raise ValueError("norm exceeds 1")


class PopulationRecorder:
    """Callback for :func:`cavitydyn.dynamics.propagate` collecting a trace."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.rows = []

    def __call__(self, step, psi, stats):
        self.rows.append((psi.time, *populations(psi, self.grid), stats.absorbed))

    def trace(self) -> PopulationTrace:
        a = np.array(self.rows, dtype=float).reshape(-1, 6)
        return PopulationTrace(a[:, 0] * AU_TIME_IN_FS, a[:, 1], a[:, 2], a[:, 3], a[:, 4], a[:, 5])


def population_discrepancy(a: PopulationTrace, b: PopulationTrace):
    """Maximum absolute channel-population difference between two traces on the same times."""
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times):
        raise ValueError("traces must share the same time axis")
    return float(max(np.max(np.abs(a.P_g0 - b.P_g0)), np.max(np.abs(a.P_minus - b.P_minus)),
                     np.max(np.abs(a.P_plus - b.P_plus))))


# ---------------------------------------------------------------------------
# bi-exponential fits
# ---------------------------------------------------------------------------

@dataclass
class BiExpFit:
    A1: float
    tau1: float
    A2: float
    tau2: float
    offset: float = 0.0
    residual_rms: float = float("nan")
    flagged: bool = False
    message: str = ""
    t_min: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.A1 * np.exp(-t / self.tau1) + self.A2 * np.exp(-t / self.tau2) + self.offset

    def report(self):
        return asdict(self)


def _loglinear_tau(t, y):
    m = y > 0
    if m.sum() < 2:
        return None
    slope = np.polyfit(t[m], np.log(y[m]), 1)[0]
    return -1.0 / slope if slope < 0 else None


def fit_biexponential(trace_or_t, channel_or_y="plus", t_min=20.0, with_offset=False, seed=0, n_starts=12):
    """Least-squares fit of A1 exp(-t/tau1) + A2 exp(-t/tau2) (+ offset).

    Parameters
    ----------
    trace_or_t : PopulationTrace or array of times (fs)
    channel_or_y : channel name or array of values
    t_min : float
        Earlier samples are excluded (doorway transients), fs.
    with_offset : bool
    seed : int
        Seed for the randomized multi-start guesses.

    Returns
    -------
    BiExpFit with tau1 < tau2.  ``flagged`` is set for failed or degenerate
    fits (tau1 ~ tau2, one amplitude ~ 0) or too short a time span.
    """
    if isinstance(trace_or_t, PopulationTrace):
        t = trace_or_t.times
        y = trace_or_t.channel(channel_or_y)
    else:
        t = np.asarray(trace_or_t, dtype=float)
        y = np.asarray(channel_or_y, dtype=float)
    m = t >= t_min
    t, y = t[m], y[m]
    if t.size < 6:
        raise ValueError("too few samples after t_min for a bi-exponential fit")
    span = t[-1] - t[0]
    t0 = t[0]
    ts = t - t0

    # log-linear guesses from the first and last thirds
    n3 = max(len(ts) // 3, 2)
    guesses = []
    ta = _loglinear_tau(ts[:n3], y[:n3])
    tb = _loglinear_tau(ts[-n3:], y[-n3:])
    base = [g for g in (ta, tb) if g is not None] or [span / 3.0]
    rng = np.random.default_rng(seed)
    lo_tau = max(np.min(np.diff(ts)), 1e-6)
    hi_tau = 1e3 * max(span, 1.0)
    for g in base:
        guesses.append(g)
    while len(guesses) < n_starts:
        guesses.append(float(np.exp(rng.uniform(np.log(lo_tau * 2), np.log(min(hi_tau, 50 * span))))))
    scale = max(np.max(np.abs(y)), 1e-300)

    def model(p):
        A1, l1, A2, l2 = p[:4]
        v = A1 * np.exp(-ts / np.exp(l1)) + A2 * np.exp(-ts / np.exp(l2))
        if with_offset:
            v = v + p[4]
        return v

    best = None
    pairs = [(a, b) for i, a in enumerate(guesses) for b in guesses[i + 1:] if abs(np.log(a / b)) > 0.3]
    pairs = pairs[: n_starts * 2] or [(guesses[0], 10 * guesses[0])]
    for a, b in pairs:
        x0 = [0.5 * y[0], np.log(min(a, b)), 0.5 * y[0], np.log(max(a, b))]
        if with_offset:
            x0.append(0.0)
        lb = [-np.inf, np.log(lo_tau), -np.inf, np.log(lo_tau)] + ([-np.inf] if with_offset else [])
        ub = [np.inf, np.log(hi_tau), np.inf, np.log(hi_tau)] + ([np.inf] if with_offset else [])
        x0 = np.clip(x0, np.array(lb) + 1e-9, np.array(ub) - 1e-9)
        try:
            r = least_squares(lambda p: (model(p) - y) / scale, x0, bounds=(lb, ub),
                              x_scale="jac", xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=2000)
        except (ValueError, np.linalg.LinAlgError):
            continue
        if best is None or r.cost < best.cost:
            best = r
    if best is None:
        return BiExpFit(np.nan, np.nan, np.nan, np.nan, flagged=True, message="no start converged", t_min=t_min)
    A1, l1, A2, l2 = best.x[:4]
    off = float(best.x[4]) if with_offset else 0.0
    tau1, tau2 = float(np.exp(l1)), float(np.exp(l2))
    if tau1 > tau2:
        A1, tau1, A2, tau2 = A2, tau2, A1, tau1
    # amplitudes referred to t = 0 rather than the first fitted sample
    A1 = float(A1 * np.exp(t0 / tau1))
    A2 = float(A2 * np.exp(t0 / tau2))
    rms = float(np.sqrt(np.mean((model(best.x) - y) ** 2)))
    msgs = []
    if not best.success:
        msgs.append("optimizer did not converge")
    if tau2 / tau1 < 1.2:
        msgs.append("degenerate time constants")
    tot = abs(A1 * np.exp(-t0 / tau1)) + abs(A2 * np.exp(-t0 / tau2))
    if min(abs(A1 * np.exp(-t0 / tau1)), abs(A2 * np.exp(-t0 / tau2))) < 1e-3 * tot:
        msgs.append("one amplitude is negligible (single exponential)")
    if span < 5.0 * tau1:
        msgs.append(f"trace span {span:.4g} fs shorter than 5 tau1")
    return BiExpFit(A1, tau1, A2, tau2, off, rms, bool(msgs), "; ".join(msgs), t_min)


# ---------------------------------------------------------------------------
# probe pulse
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PulseParams:
    """Gaussian probe, atomic units: center frequency, temporal width, amplitude."""

    omega_L: float
    sigma: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("pulse sigma must be positive")

    @classmethod
    def from_fwhm(cls, omega_L_ev, fwhm_fs, amplitude=1.0):
        return cls(to_au(omega_L_ev, "eV"), to_au(fwhm_to_sigma(fwhm_fs), "fs"), amplitude)

    @property
    def fwhm(self):
        return self.sigma * FWHM_FACTOR

    def field(self, t):
        t = np.asarray(t, dtype=float)
        return self.amplitude * np.exp(-1j * self.omega_L * t - t**2 / (2.0 * self.sigma**2))


# ---------------------------------------------------------------------------
# transient absorption
# ---------------------------------------------------------------------------

class G0Propagator:
    """exp(-i H_g0 t) on the g0 channel, by eigen-decomposition or Krylov steps."""

    def __init__(self, grid: Grid, V_g0, method="eigen", dt=2.0, tol=1e-10):
        self.grid = grid
        self.method = method
        self.V = np.asarray(V_g0, dtype=float)
        self.dt = dt
        self.tol = tol
        if method == "eigen":
            Hm = _kernels.fgh_matrix(self.V, grid.dq, grid.mass)
            self.evals, self.evecs = sla.eigh(Hm)
        elif method == "krylov":
            self.H = Hamiltonian(grid, np.stack([self.V] * 3))
        else:
            raise ValueError(f"unknown g0 propagation method {method!r}")

    def coefficients(self, d):
        """Eigenbasis coefficients of fields d (rows), scaled so that sums give grid overlaps."""
        return (np.asarray(d) @ self.evecs.conj()) * math.sqrt(self.grid.dq)

    def propagate(self, x, t):
        """exp(-i H t) x for a single field, Krylov route."""
        n = max(1, int(math.ceil(abs(t) / self.dt - 1e-12)))
        h = t / n
        y = np.asarray(x, dtype=complex)[None, :]
        mv = lambda z: self.H.apply_block(z, (0,))
        for _ in range(n):
            y, _ = krylov_expm(mv, y, h, self.tol)
        return y[0]


@dataclass
class SignalRecord:
    """Projected fields d(t) = mu_g- psi_- + mu_g+ psi_+ on equally spaced times (a.u.)."""

    times: np.ndarray
    d: np.ndarray
    omega_shift: float
    grid: Grid
    V_g0: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def stride(self):
        return float(self.times[1] - self.times[0])


def dipole_projection(psi: WavePacket, ds: DressedSurfaces):
    return ds.mu_g_minus * psi.data[MINUS] + ds.mu_g_plus * psi.data[PLUS]


def record_signal_trajectory(H: Hamiltonian, psi0: WavePacket, ds: DressedSurfaces, grid: Grid,
                             t_final, dt, node_stride, tol=1e-9, callback=None, t_record=None):
    """Propagate ``psi0`` to ``t_final`` storing d(t) every ``node_stride`` steps.

    Nodes are stored through the first node at or after ``t_record`` (default
    ``t_final``), propagating past ``t_final`` when the node lattice requires it,
    so a probe window ending exactly at ``t_record`` is always covered.

    ``callback(step, psi, stats)`` is forwarded every step (e.g. a population
    recorder).  The frequency offset of the probed transition (photon
    energies of the excited and g0 channels) is stored with the record.
    """
    t_record = t_final if t_record is None else t_record
    n_nodes = int(math.ceil(t_record / (dt * node_stride) - 1e-9))
    n_steps = max(int(round(t_final / dt)), n_nodes * node_stride)
    stats = KrylovStats()
    times, ds_ = [psi0.time], [dipole_projection(psi0, ds)]
    psi = psi0
    if callback is not None:
        callback(0, psi, stats)
    for s in range(1, n_steps + 1):
        psi = propagate_step(H, psi, dt, tol, stats)
        if callback is not None:
            callback(s, psi, stats)
        if s % node_stride == 0 and s <= n_nodes * node_stride:
            times.append(psi.time)
            ds_.append(dipole_projection(psi, ds))
    off = ds.offsets
    rec = SignalRecord(np.array(times), np.array(ds_), off["plus"] - off["g0"], grid, ds.V_g0.copy(),
                       meta={"dt": dt, "node_stride": node_stride, "krylov": asdict(stats)})
    return rec, psi, stats


def _window(record: SignalRecord, pulse: PulseParams, T, stride=1):
    t = record.times
    lo, hi = T - 4.0 * pulse.sigma, T + 4.0 * pulse.sigma
    if lo < t[0] - 1e-9 or hi > t[-1] + 1e-9:
        raise ValueError(
            f"probe window [{lo:.6g}, {hi:.6g}] a.u. exceeds the propagated horizon [{t[0]:.6g}, {t[-1]:.6g}]"
        )
    idx = np.flatnonzero((t >= lo - 1e-9) & (t <= hi + 1e-9))[::stride]
    if idx.size < MIN_WINDOW_NODES:
        raise ValueError(
            f"only {idx.size} time nodes span the 8 sigma probe window (need >= {MIN_WINDOW_NODES}); "
            "record the trajectory with a smaller node stride"
        )
    return idx


def _trap_weights(x):
    w = np.empty_like(x)
    h = np.diff(x)
    w[0], w[-1] = h[0] / 2, h[-1] / 2
    w[1:-1] = (h[:-1] + h[1:]) / 2
    return w


def correlation_matrix(record: SignalRecord, idx, prop: G0Propagator):
    """C[i, j] = <d(t_i)| U(t_i - t_j) |d(t_j)> for j <= i (upper triangle unused)."""
    t = record.times[idx]
    d = record.d[idx]
    n = len(idx)
    C = np.zeros((n, n), dtype=complex)
    if prop.method == "eigen":
        # interaction picture: c_n(t) exp(i lambda_n t); C = B^* B^T
        B = prop.coefficients(d) * np.exp(1j * np.outer(t - t[0], prop.evals))
        C = np.tril(B.conj() @ B.T)
    else:
        dq = record.grid.dq
        for j in range(n):
            x = d[j]
            C[j, j] = np.vdot(d[j], x) * dq
            for i in range(j + 1, n):
                x = prop.propagate(x, t[i] - t[i - 1])
                C[i, j] = np.vdot(d[i], x) * dq
    # photon-energy difference between the excited and ground channels
    C *= np.exp(1j * record.omega_shift * (t[:, None] - t[None, :]))
    return C


def transient_absorption(record: SignalRecord, pulse: PulseParams, T, prop: G0Propagator = None,
                         stride=1, method="eigen"):
    """Frequency-integrated signal S_N(T) (see module docstring)."""
    prop = prop or G0Propagator(record.grid, record.V_g0, method=method)
    idx = _window(record, pulse, T, stride)
    t = record.times[idx]
    C = correlation_matrix(record, idx, prop)
    w = _trap_weights(t)
    e = pulse.field(t - T)
    val = _kernels.triangle_sum(C, w, w, e, np.conj(e))
    return float(2.0 * val.real)


def signal_scan(record: SignalRecord, pulse: PulseParams, delays, prop: G0Propagator = None, stride=1,
                method="eigen"):
    prop = prop or G0Propagator(record.grid, record.V_g0, method=method)
    return np.array([transient_absorption(record, pulse, T, prop, stride) for T in delays])


def bare_state_reference(record_bare: SignalRecord, pulse: PulseParams, T, prop: G0Propagator = None,
                         stride=1, method="eigen"):
    """Signal of the uncoupled reference record (g = 0, packet on the bare excited surface)."""
    return transient_absorption(record_bare, pulse, T, prop, stride, method)


def smooth_envelope(y, window):
    """Moving average over ``window`` samples (edges use shrinking windows)."""
    y = np.asarray(y, dtype=float)
    window = max(int(window), 1)
    c = np.cumsum(np.insert(y, 0, 0.0))
    out = np.empty_like(y)
    h = window // 2
    for i in range(len(y)):
        a, b = max(0, i - h), min(len(y), i + h + 1)
        out[i] = (c[b] - c[a]) / (b - a)
    return out
