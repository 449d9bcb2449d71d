"""Unit conversions between user-facing units and atomic units.

All physics inside the package runs in atomic units (hbar = m_e = 4 pi eps0 = 1).
Conversions happen only at I/O boundaries.  Constants are CODATA 2014.
"""

from __future__ import annotations

import numpy as np

# CODATA 2014
HARTREE_IN_EV = 27.21138602
BOHR_IN_ANGSTROM = 0.52917721067
AU_TIME_IN_FS = 2.418884326509e-2
AU_DIPOLE_IN_DEBYE = 2.541746473
AMU_IN_AU_MASS = 1822.888486192

CONSTANTS = {
    "source": "CODATA 2014",
    "hartree_in_eV": HARTREE_IN_EV,
    "bohr_in_angstrom": BOHR_IN_ANGSTROM,
    "au_time_in_fs": AU_TIME_IN_FS,
}

# unit -> (dimension, size of the unit expressed in the atomic unit of that dimension)
_UNITS = {
    "hartree": ("energy", 1.0),
    "eV": ("energy", 1.0 / HARTREE_IN_EV),
    "meV": ("energy", 1e-3 / HARTREE_IN_EV),
    "bohr": ("length", 1.0),
    "angstrom": ("length", 1.0 / BOHR_IN_ANGSTROM),
    "au_time": ("time", 1.0),
    "fs": ("time", 1.0 / AU_TIME_IN_FS),
    "ps": ("time", 1e3 / AU_TIME_IN_FS),
    "au_dipole": ("dipole", 1.0),
    "au_mass": ("mass", 1.0),
}

UNITS = tuple(_UNITS)


class UnitError(ValueError):
    """Raised for unknown units or dimensionally incompatible conversions."""


def dimension(unit: str) -> str:
    try:
        return _UNITS[unit][0]
    except KeyError:
        raise UnitError(f"unknown unit {unit!r}; known units: {', '.join(UNITS)}") from None


def convert(value, from_unit: str, to_unit: str):
    """Convert ``value`` (scalar or array) from ``from_unit`` to ``to_unit``.

    Raises
    ------
    UnitError
        If either unit is unknown or the two units measure different dimensions.
    """
    dim_from, size_from = _UNITS.get(from_unit, (None, None))
    dim_to, size_to = _UNITS.get(to_unit, (None, None))
    if dim_from is None:
        dimension(from_unit)
    if dim_to is None:
        dimension(to_unit)
    if dim_from != dim_to:
        raise UnitError(
            f"cannot convert {from_unit} ({dim_from}) to {to_unit} ({dim_to})"
        )
    if from_unit == to_unit:
        return value
    if isinstance(value, (list, tuple)):
        value = np.asarray(value, dtype=float)
    return value * (size_from / size_to)


def to_au(value, unit: str):
    """Shorthand for converting into the atomic unit of ``unit``'s dimension."""
    return convert(value, unit, _ATOMIC[dimension(unit)])


def from_au(value, unit: str):
    return convert(value, _ATOMIC[dimension(unit)], unit)


_ATOMIC = {"energy": "hartree", "length": "bohr", "time": "au_time",
           "dipole": "au_dipole", "mass": "au_mass"}


def fwhm_to_sigma(fwhm):
    """Gaussian temporal width sigma from an intensity-independent FWHM of exp(-t^2/2 sigma^2)."""
    return fwhm / (2.0 * np.sqrt(2.0 * np.log(2.0)))
