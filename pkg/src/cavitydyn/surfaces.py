"""Bare-state potential curves, transition dipoles and model systems.

Curves are small callable objects ``curve(q) -> ndarray`` working in atomic
units.  They carry an optional ``domain`` (q_min, q_max); evaluating a
tabulated curve outside its table raises instead of extrapolating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .units import BOHR_IN_ANGSTROM, convert, dimension, to_au, UnitError

REDUCED_MASS = 3650.0


class DomainError(ValueError):
    """A curve was evaluated outside the range it is defined on."""


class TableFormatError(ValueError):
    """A tabulated-curve file could not be parsed."""


# ---------------------------------------------------------------------------
# analytic forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MorseParams:
    """Morse curve D [1 - exp(-a (q - q0))]^2 + V0, atomic units."""

    D: float
    a: float
    q0: float
    V0: float = 0.0

    def __post_init__(self):
        if not self.D > 0:
            raise ValueError(f"Morse depth must be positive, got {self.D}")
        if not self.a > 0:
            raise ValueError(f"Morse range parameter must be positive, got {self.a}")

    @classmethod
    def from_ev_angstrom(cls, D, a, q0, V0=0.0):
        return cls(D=to_au(D, "eV"), a=a * BOHR_IN_ANGSTROM, q0=to_au(q0, "angstrom"),
                   V0=to_au(V0, "eV"))


@dataclass(frozen=True)
class SigmoidDipoleParams:
    """amplitude / (1 + exp(steepness (q - center))), atomic units."""

    amplitude: float
    steepness: float
    center: float

    def __post_init__(self):
        if not np.isfinite(self.amplitude):
            raise ValueError("sigmoid amplitude must be finite")
        if not self.steepness > 0:
            raise ValueError(f"sigmoid steepness must be positive, got {self.steepness}")

    @classmethod
    def from_angstrom(cls, amplitude, steepness, center):
        return cls(amplitude=amplitude, steepness=steepness * BOHR_IN_ANGSTROM,
                   center=to_au(center, "angstrom"))


def eval_morse(p: MorseParams, q):
    return p.D * (1.0 - np.exp(-p.a * (np.asarray(q) - p.q0))) ** 2 + p.V0


def morse_derivative(p: MorseParams, q):
    e = np.exp(-p.a * (np.asarray(q) - p.q0))
    return 2.0 * p.D * p.a * (1.0 - e) * e


def eval_sigmoid_dipole(p: SigmoidDipoleParams, q):
    x = p.steepness * (np.asarray(q) - p.center)
    # exp overflow for very negative q is harmless but noisy
    with np.errstate(over="ignore"):
        return p.amplitude / (1.0 + np.exp(x))


def sigmoid_derivative(p: SigmoidDipoleParams, q):
    x = p.steepness * (np.asarray(q) - p.center)
    with np.errstate(over="ignore"):
        e = np.exp(-np.abs(x))
    # symmetric form of -A s e^x / (1 + e^x)^2, stable for large |x|
    return -p.amplitude * p.steepness * e / (1.0 + e) ** 2


def morse_bound_count(p: MorseParams, mass: float) -> int:
    """Number of bound levels: n < sqrt(2 m D)/a - 1/2."""
    lam = math.sqrt(2.0 * mass * p.D) / p.a
    return int(math.floor(lam - 0.5)) + 1


def morse_eigenvalue(p: MorseParams, mass: float, n: int) -> float:
    """Analytic Morse level E_n = w(n+1/2) - [w(n+1/2)]^2/(4D) + V0 with w = a sqrt(2D/m)."""
    if n < 0:
        raise ValueError("vibrational quantum number must be non-negative")
    nmax = morse_bound_count(p, mass) - 1
    if n > nmax:
        raise ValueError(f"level n={n} is above the highest bound level n={nmax}")
    w = p.a * math.sqrt(2.0 * p.D / mass)
    x = w * (n + 0.5)
    return x - x * x / (4.0 * p.D) + p.V0


# ---------------------------------------------------------------------------
# curve objects
# ---------------------------------------------------------------------------

class Curve:
    domain: Optional[tuple] = None

    def __call__(self, q):
        raise NotImplementedError

    def derivative(self, q):
        raise NotImplementedError

    def check_domain(self, q):
        if self.domain is None:
            return
        q = np.asarray(q)
        lo, hi = self.domain
        tol = 1e-9 * max(1.0, abs(hi - lo))
        if q.size and (q.min() < lo - tol or q.max() > hi + tol):
            raise DomainError(
                f"curve defined on [{lo:.6g}, {hi:.6g}] bohr evaluated on "
                f"[{q.min():.6g}, {q.max():.6g}] bohr; extrapolation is not allowed"
            )


@dataclass(frozen=True)
class MorseCurve(Curve):
    params: MorseParams

    def __call__(self, q):
        return eval_morse(self.params, q)

    def derivative(self, q):
        return morse_derivative(self.params, q)


@dataclass(frozen=True)
class SigmoidCurve(Curve):
    params: SigmoidDipoleParams

    def __call__(self, q):
        return eval_sigmoid_dipole(self.params, q)

    def derivative(self, q):
        return sigmoid_derivative(self.params, q)


@dataclass(frozen=True)
class ConstantCurve(Curve):
    value: float = 0.0

    def __call__(self, q):
        return np.full(np.shape(q), float(self.value))

    def derivative(self, q):
        return np.zeros(np.shape(q))


@dataclass(frozen=True)
class FunctionCurve(Curve):
    """Wraps a plain function (and optionally its derivative)."""

    fn: Callable
    dfn: Optional[Callable] = None

    def __call__(self, q):
        return np.asarray(self.fn(np.asarray(q, dtype=float)), dtype=float)

    def derivative(self, q):
        if self.dfn is None:
            raise NotImplementedError("no derivative supplied for this curve")
        return np.asarray(self.dfn(np.asarray(q, dtype=float)), dtype=float)


class TabulatedCurve(Curve):
    """Cubic spline through samples with natural (zero second derivative) ends."""

    def __init__(self, q, y):
        q = np.asarray(q, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.any(np.diff(q) <= 0):
            raise ValueError("tabulated grid must be strictly increasing")
        self.q = q
        self.y = y
        self.domain = (float(q[0]), float(q[-1]))
        self._spline = CubicSpline(q, y, bc_type="natural", extrapolate=False)

    def __call__(self, q):
        self.check_domain(q)
        qa = np.clip(np.asarray(q, dtype=float), *self.domain)
        return self._spline(qa)

    def derivative(self, q):
        self.check_domain(q)
        qa = np.clip(np.asarray(q, dtype=float), *self.domain)
        return self._spline(qa, 1)


ZERO = ConstantCurve(0.0)


@dataclass(frozen=True)
class BareSystem:
    """Bare electronic states |g>, |e> along one nuclear coordinate (atomic units).

    ``V_init`` is the surface holding the vibrational ground state that is
    impulsively excited; it defaults to ``Vg``.
    """

    Vg: Curve
    Ve: Curve
    mu_eg: Curve
    mass: Optional[float] = REDUCED_MASS
    mu_gg: Curve = ZERO
    mu_ee: Curve = ZERO
    f_ge: Curve = ZERO
    V_init: Optional[Curve] = None
    name: str = "custom"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.mass is not None and not self.mass > 0:
            raise ValueError(f"reduced mass must be positive, got {self.mass}")

    @property
    def initial_surface(self) -> Curve:
        return self.V_init if self.V_init is not None else self.Vg

    def curves(self):
        out = {"Vg": self.Vg, "Ve": self.Ve, "mu_eg": self.mu_eg, "mu_gg": self.mu_gg,
               "mu_ee": self.mu_ee, "f_ge": self.f_ge}
        if self.V_init is not None:
            out["V_init"] = self.V_init
        return out

    def domain(self):
        lo, hi = -np.inf, np.inf
        for c in self.curves().values():
            if c.domain is not None:
                lo, hi = max(lo, c.domain[0]), min(hi, c.domain[1])
        return lo, hi

    def evaluate(self, q):
        """All curves sampled at ``q`` as a dict of arrays."""
        q = np.asarray(q, dtype=float)
        out = {}
        for name, c in self.curves().items():
            c.check_domain(q)
            out[name] = np.asarray(c(q), dtype=float)
        return out

    def with_mass(self, mass):
        return replace(self, mass=mass)


# ---------------------------------------------------------------------------
# built-in model systems
# ---------------------------------------------------------------------------

# Morse table, eV / 1/angstrom / angstrom / eV
MORSE_TABLE = {
    "S0": (3.0, 1.0, 2.0, 0.0),
    "S1": (0.01, 2.43, 2.5, 3.0),
    "S2": (3.0, 1.0, 2.3, 4.5),
}
SIGMOID_DIPOLE = (4.0, 2.4575, 4.232)  # a.u., 1/angstrom, angstrom


def morse_state(label: str) -> MorseParams:
    return MorseParams.from_ev_angstrom(*MORSE_TABLE[label])


def model_dipole() -> SigmoidDipoleParams:
    return SigmoidDipoleParams.from_angstrom(*SIGMOID_DIPOLE)


def catalyst_system(mass=REDUCED_MASS) -> BareSystem:
    """|g> = S1 (dissociative), |e> = S2 (bound); excitation starts on S0."""
    return BareSystem(
        Vg=MorseCurve(morse_state("S1")),
        Ve=MorseCurve(morse_state("S2")),
        mu_eg=SigmoidCurve(model_dipole()),
        V_init=MorseCurve(morse_state("S0")),
        mass=mass,
        name="photonic-catalyst",
    )


def bound_system(mass=REDUCED_MASS) -> BareSystem:
    """|g> = S0, |e> = S1 (dissociative); excitation starts on S0."""
    return BareSystem(
        Vg=MorseCurve(morse_state("S0")),
        Ve=MorseCurve(morse_state("S1")),
        mu_eg=SigmoidCurve(model_dipole()),
        mass=mass,
        name="photonic-bound",
    )


@dataclass(frozen=True)
class TwoModeCoInModel:
    """Synthetic two-mode surfaces with a dipole-forbidden transition at the origin.

    Vg = k_g (q1^2 + q2^2)/2
    Ve = dE + alpha q1^4 - beta q1^2 + k_e q2^2 / 2      (double minimum along q1)
    mu = c1 q1 + c2 q2

    Both surfaces are even in q1 and q2 while the dipole is odd, so the
    transition is forbidden at the symmetric origin.  Atomic units; the
    coordinates are dimensionless-ish mode displacements measured in bohr.
    """

    delta_E: float = to_au(3.5, "eV")
    k_g: float = 0.01
    k_e: float = 0.012
    alpha: float = 0.002
    beta: float = 0.01
    c1: float = 1.0
    c2: float = 0.6
    mass: float = 1836.15267
    extent: float = 2.0

    def Vg(self, q1, q2):
        return 0.5 * self.k_g * (np.asarray(q1) ** 2 + np.asarray(q2) ** 2)

    def Ve(self, q1, q2):
        q1 = np.asarray(q1)
        return self.delta_E + self.alpha * q1**4 - self.beta * q1**2 + 0.5 * self.k_e * np.asarray(q2) ** 2

    def mu(self, q1, q2):
        return self.c1 * np.asarray(q1) + self.c2 * np.asarray(q2)

    def grad_Vg(self, q1, q2):
        return self.k_g * np.asarray(q1), self.k_g * np.asarray(q2)

    def grad_Ve(self, q1, q2):
        q1 = np.asarray(q1)
        return 4 * self.alpha * q1**3 - 2 * self.beta * q1, self.k_e * np.asarray(q2)

    def grad_mu(self, q1, q2):
        shape = np.broadcast(np.asarray(q1), np.asarray(q2)).shape
        return np.full(shape, self.c1), np.full(shape, self.c2)

    @property
    def resonance_energy(self):
        return float(self.Ve(0.0, 0.0) - self.Vg(0.0, 0.0))

    def max_abs_dipole(self):
        """max |mu| over the square map [-extent, extent]^2 (attained at a corner)."""
        return (abs(self.c1) + abs(self.c2)) * self.extent

    def line(self, q2=0.0) -> BareSystem:
        """1-D cut along q1 at fixed q2."""
        return BareSystem(
            Vg=FunctionCurve(lambda q: self.Vg(q, q2), lambda q: self.grad_Vg(q, q2)[0]),
            Ve=FunctionCurve(lambda q: self.Ve(q, q2), lambda q: self.grad_Ve(q, q2)[0]),
            mu_eg=FunctionCurve(lambda q: self.mu(q, q2), lambda q: self.grad_mu(q, q2)[0]),
            mass=self.mass,
            name="photoinduced-coin",
        )


# ---------------------------------------------------------------------------
# tabulated files
# ---------------------------------------------------------------------------

TABLE_COLUMNS = ("q", "Vg", "Ve", "mu_eg", "mu_gg", "mu_ee", "f_ge")


def _parse_units(line, lineno):
    parts = line.split()
    if len(parts) < 2:
        raise TableFormatError(f"line {lineno}: units line needs '<length> <energy> [au]'")
    length_u, energy_u = parts[0], parts[1]
    dipole_u = parts[2] if len(parts) > 2 else "au"
    try:
        if dimension(length_u) != "length":
            raise TableFormatError(f"line {lineno}: {length_u!r} is not a length unit")
        if dimension(energy_u) != "energy":
            raise TableFormatError(f"line {lineno}: {energy_u!r} is not an energy unit")
    except UnitError as err:
        raise TableFormatError(f"line {lineno}: {err}") from None
    if dipole_u not in ("au", "au_dipole"):
        raise TableFormatError(f"line {lineno}: dipoles must be given in atomic units, got {dipole_u!r}")
    return length_u, energy_u


def load_tabulated(path, mass=None) -> BareSystem:
    """Read a whitespace-separated curve table.

    Expected layout::

        # q Vg Ve [mu_eg] [mu_gg] [mu_ee] [f_ge]
        # units: angstrom eV au
        # mass: 3650            (optional)
        1.00  8.93  21.3  3.99
        ...

    Missing optional columns default to zero.  The mass comes from the
    ``mass`` argument, else a ``# mass:`` line, else stays unset.
    """
    path = Path(path)
    columns = None
    length_u, energy_u = "bohr", "hartree"
    rows = []
    linenos = []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                low = body.lower()
                if low.startswith("units:"):
                    length_u, energy_u = _parse_units(body.split(":", 1)[1], lineno)
                elif low.startswith("mass:"):
                    try:
                        file_mass = float(body.split(":", 1)[1])
                    except ValueError:
                        raise TableFormatError(f"line {lineno}: mass is not a number") from None
                    if mass is None:
                        mass = file_mass
                elif columns is None and body.split() and body.split()[0] == "q":
                    columns = body.split()
                    unknown = [c for c in columns if c not in TABLE_COLUMNS]
                    if unknown:
                        raise TableFormatError(f"line {lineno}: unknown column(s) {unknown}")
                    if columns[:3] != ["q", "Vg", "Ve"]:
                        raise TableFormatError(f"line {lineno}: header must start with 'q Vg Ve'")
                continue
            if columns is None:
                raise TableFormatError(f"line {lineno}: data before the '# q Vg Ve ...' header")
            fields = line.split()
            if len(fields) != len(columns):
                raise TableFormatError(
                    f"line {lineno}: expected {len(columns)} columns ({' '.join(columns)}), got {len(fields)}"
                )
            try:
                rows.append([float(x) for x in fields])
            except ValueError:
                bad = next(x for x in fields if not _isfloat(x))
                raise TableFormatError(f"line {lineno}: non-numeric field {bad!r}") from None
            linenos.append(lineno)
    if columns is None:
        raise TableFormatError(f"{path}: missing '# q Vg Ve ...' header")
    if len(rows) < 4:
        raise TableFormatError(f"{path}: need at least 4 data rows for cubic interpolation")
    data = np.array(rows)
    dq = np.diff(data[:, 0])
    if np.any(dq <= 0):
        i = int(np.argmax(dq <= 0)) + 1
        what = "duplicate" if dq[i - 1] == 0 else "decreasing"
        raise TableFormatError(f"line {linenos[i]}: {what} q value {data[i, 0]!r}; grid must be strictly increasing")

    q = convert(data[:, 0], length_u, "bohr")
    curves = {}
    for j, name in enumerate(columns[1:], start=1):
        col = data[:, j]
        if name in ("Vg", "Ve"):
            col = convert(col, energy_u, "hartree")
        elif name == "f_ge":
            col = col / convert(1.0, length_u, "bohr")
        curves[name] = TabulatedCurve(q, col)
    for name in ("mu_eg", "mu_gg", "mu_ee", "f_ge"):
        if name not in curves:
            curves[name] = TabulatedCurve(q, np.zeros_like(q))
    return BareSystem(mass=mass, name=path.stem, meta={"source": str(path)}, **curves)


def _isfloat(x):
    try:
        float(x)
        return True
    except ValueError:
        return False


def save_tabulated(system: BareSystem, q, path, length_unit="angstrom", energy_unit="eV"):
    """Sample ``system`` at ``q`` (bohr) and write it in the tabulated format."""
    q = np.asarray(q, dtype=float)
    vals = system.evaluate(q)
    cols = [convert(q, "bohr", length_unit),
            convert(vals["Vg"], "hartree", energy_unit),
            convert(vals["Ve"], "hartree", energy_unit),
            vals["mu_eg"], vals["mu_gg"], vals["mu_ee"],
            vals["f_ge"] * convert(1.0, length_unit, "bohr")]
    header = f"q Vg Ve mu_eg mu_gg mu_ee f_ge\nunits: {length_unit} {energy_unit} au"
    if system.mass is not None:
        header += f"\nmass: {system.mass!r}"
    np.savetxt(path, np.column_stack(cols), header=header, comments="# ", fmt="%.17g")
