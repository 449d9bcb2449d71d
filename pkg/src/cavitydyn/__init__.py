"""Cavity-dressed potential surfaces, non-adiabatic couplings and wave-packet dynamics."""

__version__ = "0.1.0"

from .units import convert, to_au, from_au  # noqa: E402
from .surfaces import BareSystem, catalyst_system, bound_system, load_tabulated  # noqa: E402
from .dressing import CavityParams, cavity_from_resonance, dressed_fields  # noqa: E402
from .couplings import compute_couplings  # noqa: E402
from .grid import GridSpec, PMLParams, make_grid, make_pml  # noqa: E402
from .dynamics import Hamiltonian, WavePacket, propagate, propagate_step, relax_ground_state  # noqa: E402
from .observables import PulseParams, fit_biexponential, populations  # noqa: E402

__all__ = [
    "__version__", "convert", "to_au", "from_au", "BareSystem", "catalyst_system", "bound_system",
    "load_tabulated", "CavityParams", "cavity_from_resonance", "dressed_fields", "compute_couplings",
    "GridSpec", "PMLParams", "make_grid", "make_pml", "Hamiltonian", "WavePacket", "propagate",
    "propagate_step", "relax_ground_state", "PulseParams", "fit_biexponential", "populations",
]
