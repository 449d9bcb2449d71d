"""Uniform 1-D grids, spectral kinetic/derivative operators and the PML layer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.fft as sfft

from . import _kernels
from .units import to_au

MIN_PROPAGATION_POINTS = 64


@dataclass(frozen=True)
class GridSpec:
    """Grid description in atomic units; ``stagger`` shifts points by half a spacing."""

    q_min: float
    q_max: float
    n_points: int
    mass: float = 3650.0
    stagger: bool = False

    def __post_init__(self):
        if not self.q_max > self.q_min:
            raise ValueError(f"q_max ({self.q_max}) must exceed q_min ({self.q_min})")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"n_points must be an integer >= 2, got {self.n_points}")
        if not self.mass > 0:
            raise ValueError("mass must be positive")

    @classmethod
    def from_angstrom(cls, q_min, q_max, n_points, mass=3650.0, stagger=False):
        return cls(to_au(q_min, "angstrom"), to_au(q_max, "angstrom"), int(n_points), mass, stagger)

    def check_propagation(self):
        if self.n_points < MIN_PROPAGATION_POINTS:
            raise ValueError(
                f"propagation grids need n_points >= {MIN_PROPAGATION_POINTS}, got {self.n_points}"
            )


@dataclass(frozen=True)
class PMLParams:
    """Absorbing layer: sigma(q) = strength * (depth/width)^order inside each enabled edge."""

    width: float
    strength: float = 6.0
    order: int = 3
    edges: tuple = ("right",)

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("PML width must be positive")
        if not self.strength > 0:
            raise ValueError("PML strength must be positive")
        if self.order < 2:
            raise ValueError("PML order must be >= 2")
        bad = set(self.edges) - {"left", "right"}
        if bad:
            raise ValueError(f"unknown PML edge(s): {sorted(bad)}")


class Grid:
    """Uniform grid q_j = q_min + (j + stagger/2) dq with spectral wavenumbers."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        n = spec.n_points
        self.n = n
        self.dq = (spec.q_max - spec.q_min) / n
        offset = 0.5 if spec.stagger else 0.0
        self.q = spec.q_min + (np.arange(n) + offset) * self.dq
        self.k = 2.0 * np.pi * np.fft.fftfreq(n, d=self.dq)
        self.mass = spec.mass
        self._ik = 1j * self.k
        self._t_diag = self.k**2 / (2.0 * self.mass)

    def __len__(self):
        return self.n

    @property
    def length(self):
        return self.spec.q_max - self.spec.q_min

    def metadata(self):
        s = self.spec
        return {"q_min_bohr": s.q_min, "q_max_bohr": s.q_max, "n_points": s.n_points,
                "dq_bohr": self.dq, "mass_au": s.mass, "stagger": s.stagger}

    # spectral building blocks, acting along the last axis
    def fft(self, x):
        return sfft.fft(x, axis=-1)

    def ifft(self, x):
        return sfft.ifft(x, axis=-1)

    def spectral_derivative(self, psi):
        return sfft.ifft(self._ik * sfft.fft(psi, axis=-1), axis=-1)

    def integrate(self, y):
        """Trapezoid rule on the periodic grid (every point carries weight dq)."""
        return np.sum(y, axis=-1) * self.dq

    def norm2(self, psi):
        return self.integrate(np.abs(psi) ** 2)

    def inner(self, phi, psi):
        return np.sum(np.conj(phi) * psi) * self.dq


def make_grid(spec: GridSpec) -> Grid:
    return Grid(spec)


def apply_kinetic(grid: Grid, psi):
    """-(1/2m) d^2 psi/dq^2 by multiplication with k^2/2m in wavenumber space."""
    return sfft.ifft(grid._t_diag * sfft.fft(psi, axis=-1), axis=-1)


def _extrapolation_gap(y):
    """Mismatch between y[0] and an 8th-order extrapolation of the right end one step on."""
    w = _kernels._fd_weights(np.arange(9) - 9, order=0)
    return abs(w @ y[-9:] - y[0]), abs(w[::-1] @ y[:9] - y[-1])


def _is_periodic(y):
    """True when the wrap-around gap is no worse than the extrapolation residual inside."""
    if y.shape[-1] < 32:
        return False
    w = _kernels._fd_weights(np.arange(9) - 9, order=0)
    inner = np.abs(np.convolve(y, w[::-1], mode="valid")[:-1] - y[9:])
    scale = max(np.max(np.abs(y)), 1e-300)
    return max(_extrapolation_gap(y)) <= 10.0 * max(np.max(inner), 1e-13 * scale)


def gradient(grid: Grid, field, method="auto"):
    """First derivative of a sampled field.

    ``method`` is ``"spectral"`` (FFT, exact for band-limited periodic data),
    ``"fd8"`` (8th-order central differences, one-sided 9-point stencils at
    the four outermost points on each side) or ``"auto"``, which uses the
    spectral derivative when the field continues across the periodic wrap
    as smoothly as it varies inside (judged by 9-point polynomial
    extrapolation) and ``fd8`` otherwise.
    """
    y = np.asarray(field)
    if method == "auto":
        method = "spectral" if _is_periodic(y) else "fd8"
    if method == "spectral":
        if np.isrealobj(y):
            yk = sfft.rfft(y)
            kr = 2.0 * np.pi * np.fft.rfftfreq(grid.n, d=grid.dq)
            dy = 1j * kr * yk
            if grid.n % 2 == 0:
                dy[-1] = 0.0
            return sfft.irfft(dy, n=grid.n)
        return grid.spectral_derivative(y)
    if method == "fd8":
        return _kernels.fd8_gradient(y, grid.dq)
    raise ValueError(f"unknown gradient method {method!r}")


def pml_profile(grid: Grid, p: PMLParams):
    """sigma(q): 0 in the interior, monomial rise to ``strength`` at the enabled edges."""
    q = grid.q
    lo, hi = grid.spec.q_min, grid.spec.q_max
    sigma = np.zeros_like(q)
    if "right" in p.edges:
        x = (q - (hi - p.width)) / p.width
        sigma = np.where(x > 0, p.strength * np.clip(x, 0, 1) ** p.order, sigma)
    if "left" in p.edges:
        x = ((lo + p.width) - q) / p.width
        sigma = np.where(x > 0, p.strength * np.clip(x, 0, 1) ** p.order, sigma)
    return sigma


@dataclass
class PMLOperators:
    """Kinetic and derivative operators with complex stretching s = 1/(1 + i sigma)."""

    grid: Grid
    sigma: np.ndarray
    params: Optional[PMLParams] = None
    stretch: np.ndarray = field(init=False)
    active: bool = field(init=False)

    def __post_init__(self):
        self.stretch = 1.0 / (1.0 + 1j * self.sigma)
        self.active = bool(np.any(self.sigma != 0))

    def derivative(self, psi):
        d = self.grid.spectral_derivative(psi)
        return self.stretch * d if self.active else d

    def kinetic(self, psi):
        if not self.active:
            return apply_kinetic(self.grid, psi)
        u = self.stretch * self.grid.spectral_derivative(psi)
        return (-0.5 / self.grid.mass) * self.stretch * self.grid.spectral_derivative(u)

    def layer_mask(self):
        return self.sigma > 0


def make_pml(grid: Grid, p: Optional[PMLParams]) -> PMLOperators:
    if p is None:
        return PMLOperators(grid, np.zeros(grid.n))
    if not p.width < grid.length / 4:
        raise ValueError(
            f"PML width {p.width:.4g} bohr must be below a quarter of the domain ({grid.length / 4:.4g} bohr)"
        )
    return PMLOperators(grid, pml_profile(grid, p), p)
