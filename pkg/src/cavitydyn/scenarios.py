"""Configuration-driven scenarios: build, validate, run and write outputs.

Configs are INI files with the sections [system], [cavity], [grid],
[propagation], [signal] and [output].  Every dimensional key carries its
unit in the name (``g_max_mev``, ``dt_au``, ``q_min_angstrom`` ...).
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.interpolate import RectBivariateSpline

from . import __version__, _kernels
from .couplings import CouplingFields, compute_couplings
from .dressing import (CavityParams, CouplingError, DressedSurfaces, bare_surfaces, cavity_from_resonance,
                       dress, dressed_fields)
from .dynamics import Hamiltonian, KrylovStats, WavePacket, prepare_doorway, propagate, relax_ground_state, \
    save_checkpoint
from .grid import Grid, GridSpec, MIN_PROPAGATION_POINTS, PMLParams, make_grid, make_pml
from .observables import (BiExpFit, G0Propagator, PopulationRecorder, PopulationTrace, PulseParams,
                          fit_biexponential, population_discrepancy, record_signal_trajectory, signal_scan)
from .surfaces import (BareSystem, TableFormatError, TwoModeCoInModel, bound_system, catalyst_system,
                       load_tabulated)
from .units import AU_TIME_IN_FS, CONSTANTS, convert, from_au, to_au

log = logging.getLogger(__name__)

BUILTINS = ("photonic-catalyst", "photonic-bound", "photoinduced-coin")
SCENARIOS = BUILTINS + ("custom",)
SECTIONS = ("system", "cavity", "grid", "propagation", "signal", "output")

# key -> (type, default); a default of ``None`` marks an optional key without default
SCHEMA = {
    "system": {
        "scenario": (str, None),
        "file": (str, None),
        "mass_au": (float, None),
        "doorway_dipole_au": (float, None),
        "initial_surface": (str, None),
    },
    "cavity": {
        "resonance_angstrom": (float, None),
        "resonance_bohr": (float, None),
        "g_max_mev": (float, None),
        "omega_c_ev": (float, None),
        "eps_c_au": (float, None),
    },
    "grid": {
        "q_min_angstrom": (float, 1.0),
        "q_max_angstrom": (float, 12.0),
        "n_points": (int, 2048),
        "stagger": (bool, False),
        "pml_width_angstrom": (float, 1.2),
        "pml_strength": (float, 6.0),
        "pml_order": (int, 3),
        "pml_edges": (str, "right"),
        "gradient_method": (str, "auto"),
        "map_extent_bohr": (float, 2.0),
        "map_points": (int, 64),
        "line_q2_bohr": (float, 0.0),
    },
    "propagation": {
        "enabled": (bool, True),
        "t_final_fs": (float, 3000.0),
        "dt_au": (float, 1.0),
        "tol": (float, 1e-9),
        "mode": (str, "simplified"),
        "sample_every_fs": (float, 5.0),
        "fit_channel": (str, "plus"),
        "fit_t_min_fs": (float, 20.0),
        "fit_offset": (bool, False),
        "checkpoint": (bool, True),
    },
    "signal": {
        "enabled": (bool, False),
        "omega_l_ev": (float, 1.5),
        "fwhm_fs": (float, 10.0),
        "amplitude_au": (float, 1.0),
        "delays_fs": (str, None),
        "node_spacing_au": (float, None),
        "method": (str, "eigen"),
        "bare_reference": (bool, True),
    },
    "output": {
        "directory": (str, "output"),
    },
}

# which surface carries the initial vibrational state, per builtin
_INITIAL = {"photonic-catalyst": "init", "photonic-bound": "g"}


class ConfigError(ValueError):
    """Invalid scenario configuration (exit code 1)."""


class ScenarioRuntimeError(RuntimeError):
    """Failure while running physics (exit code 2)."""


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def _line_index(text):
    """(section, key) -> line number for error messages."""
    idx, sec = {}, None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            sec = line[1:-1].strip().lower()
            idx[(sec, None)] = n
        elif sec is not None and ("=" in line or ":" in line):
            key = line.split("=", 1)[0] if "=" in line else line.split(":", 1)[0]
            idx[(sec, key.strip().lower())] = n
    return idx


def _parse_bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass
class ScenarioConfig:
    """Resolved configuration; values in the units named by their keys."""

    path: str
    values: dict
    lines: dict = field(default_factory=dict, repr=False)
    warnings: list = field(default_factory=list)

    def get(self, section, key):
        return self.values[section][key]

    def where(self, section, key=None):
        n = self.lines.get((section, key)) or self.lines.get((section, None))
        return f"{self.path}:{n}" if n else self.path

    @property
    def scenario(self):
        return self.values["system"]["scenario"]

    def resolved(self):
        """JSON-serializable resolved values (the hash input)."""
        return {s: {k: v for k, v in sorted(d.items())} for s, d in sorted(self.values.items())}

    def hash(self):
        """Digest of everything that shapes the results; the output location is left out."""
        cfg = {s: d for s, d in self.resolved().items() if s != "output"}
        payload = json.dumps({"config": cfg, "version": __version__}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def parse_config(path, overrides=None) -> ScenarioConfig:
    """Parse and type-check a config file; raises :class:`ConfigError` with file:line context."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: config file not found")
    text = path.read_text()
    lines = _line_index(text)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as err:
        raise ConfigError(f"{path}: {err}") from None

    def where(sec, key=None):
        n = lines.get((sec, key)) or lines.get((sec, None))
        return f"{path}:{n}" if n else str(path)

    for sec in cp.sections():
        if sec.lower() not in SCHEMA:
            raise ConfigError(f"{where(sec.lower())}: unknown section [{sec}] (expected one of {', '.join(SECTIONS)})")
    values = {}
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        given = cp[sec] if cp.has_section(sec) else {}
        for key in given:
            if key not in keys:
                raise ConfigError(f"{where(sec, key)}: unknown key '{key}' in [{sec}]")
        for key, (typ, default) in keys.items():
            if key in given:
                raw = given[key]
                try:
                    val = _parse_bool(raw) if typ is bool else typ(raw)
                except ValueError:
                    raise ConfigError(
                        f"{where(sec, key)}: [{sec}] {key} = {raw!r} is not a valid {typ.__name__}"
                    ) from None
                if typ is float and not math.isfinite(val):
                    raise ConfigError(f"{where(sec, key)}: [{sec}] {key} must be finite")
            else:
                val = default
            values[sec][key] = val
    for (sec, key), val in (overrides or {}).items():
        values[sec][key] = val
    return ScenarioConfig(str(path), values, lines)


def parse_delays(spec):
    """'50, 100, 150' or 'start:stop:step' (inclusive stop) -> array in fs."""
    spec = spec.strip()
    if ":" in spec:
        a, b, c = (float(x) for x in spec.split(":"))
        if c <= 0:
            raise ValueError("delay step must be positive")
        n = int(math.floor((b - a) / c + 1e-9)) + 1
        return a + c * np.arange(n)
    return np.array([float(x) for x in spec.replace(",", " ").split()])


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def _require(cfg, sec, key, why=""):
    if cfg.values[sec][key] is None:
        raise ConfigError(f"{cfg.where(sec)}: missing required key [{sec}] {key}{why}")
    return cfg.values[sec][key]


def build_system(cfg: ScenarioConfig):
    sc = cfg.scenario
    mass = cfg.get("system", "mass_au")
    if sc == "photonic-catalyst":
        return catalyst_system() if mass is None else catalyst_system(mass)
    if sc == "photonic-bound":
        return bound_system() if mass is None else bound_system(mass)
    if sc == "photoinduced-coin":
        return TwoModeCoInModel() if mass is None else TwoModeCoInModel(mass=mass)
    fpath = Path(_require(cfg, "system", "file", " for custom scenarios"))
    if not fpath.is_absolute():
        fpath = Path(cfg.path).parent / fpath
    if not fpath.is_file():
        raise ConfigError(f"{cfg.where('system', 'file')}: tabulated system file {fpath} does not exist")
    _require(cfg, "system", "mass_au", " for custom scenarios")
    try:
        return load_tabulated(fpath, mass=mass)
    except TableFormatError as err:
        raise ConfigError(f"{cfg.where('system', 'file')}: {err}") from None


def build_cavity(cfg: ScenarioConfig, system, q_samples) -> CavityParams:
    c = cfg.values["cavity"]
    if isinstance(system, TwoModeCoInModel):
        g_max = c["g_max_mev"]
        if c["omega_c_ev"] is not None and c["eps_c_au"] is not None:
            return CavityParams(to_au(c["omega_c_ev"], "eV"), c["eps_c_au"])
        if g_max is None:
            raise ConfigError(f"{cfg.where('cavity')}: missing required key [cavity] g_max_mev")
        return CavityParams(system.resonance_energy, 2.0 * to_au(g_max, "meV") / system.max_abs_dipole())
    if c["omega_c_ev"] is not None or c["eps_c_au"] is not None:
        if c["omega_c_ev"] is None or c["eps_c_au"] is None:
            raise ConfigError(f"{cfg.where('cavity')}: give both omega_c_ev and eps_c_au, or resonance + g_max_mev")
        return CavityParams(to_au(c["omega_c_ev"], "eV"), c["eps_c_au"])
    if c["resonance_angstrom"] is not None:
        q_res = to_au(c["resonance_angstrom"], "angstrom")
    elif c["resonance_bohr"] is not None:
        q_res = c["resonance_bohr"]
    else:
        raise ConfigError(f"{cfg.where('cavity')}: missing required key [cavity] resonance_angstrom")
    if c["g_max_mev"] is None:
        raise ConfigError(f"{cfg.where('cavity')}: missing required key [cavity] g_max_mev")
    if not (q_samples.min() <= q_res <= q_samples.max()):
        raise ConfigError(f"{cfg.where('cavity', 'resonance_angstrom')}: resonance point lies outside the grid")
    try:
        return cavity_from_resonance(system, q_res, to_au(c["g_max_mev"], "meV"), q_samples)
    except CouplingError as err:
        raise ConfigError(f"{cfg.where('cavity')}: {err}") from None


def build_grid(cfg: ScenarioConfig, system) -> Grid:
    g = cfg.values["grid"]
    mass = system.mass
    if isinstance(system, TwoModeCoInModel):
        ext = g["map_extent_bohr"]
        spec = GridSpec(-ext, ext, g["n_points"], mass, True)
    else:
        spec = GridSpec.from_angstrom(g["q_min_angstrom"], g["q_max_angstrom"], g["n_points"],
                                      mass=mass, stagger=g["stagger"])
    return make_grid(spec)


def build_pml(cfg: ScenarioConfig, grid: Grid):
    g = cfg.values["grid"]
    edges = tuple(e.strip() for e in g["pml_edges"].replace(",", " ").split() if e.strip())
    if not edges or edges == ("none",):
        return None
    return PMLParams(to_au(g["pml_width_angstrom"], "angstrom"), g["pml_strength"], g["pml_order"], edges)


# ---------------------------------------------------------------------------
# photoinduced conical intersection: 2-D maps
# ---------------------------------------------------------------------------

@dataclass
class GapMap:
    q1: np.ndarray
    q2: np.ndarray
    delta_c: np.ndarray
    g: np.ndarray
    Omega: np.ndarray
    V_minus: np.ndarray
    V_plus: np.ndarray
    f_mp: np.ndarray  # (2, n1, n2), one field per mode

    def interpolated_origin_gap(self):
        """Omega at (0, 0) from bicubic interpolation of delta_c and g."""
        d = RectBivariateSpline(self.q1, self.q2, self.delta_c, kx=3, ky=3)(0.0, 0.0)[0, 0]
        gg = RectBivariateSpline(self.q1, self.q2, self.g, kx=3, ky=3)(0.0, 0.0)[0, 0]
        return float(math.sqrt(4.0 * gg**2 + d**2))

    def minimum_grid_gap(self):
        i = np.unravel_index(np.argmin(self.Omega), self.Omega.shape)
        return float(self.Omega[i]), float(self.q1[i[0]]), float(self.q2[i[1]])


def coin_gap_map(model: TwoModeCoInModel, cavity: CavityParams, n=64, extent=None) -> GapMap:
    """Dressed gap and per-mode derivative coupling on a staggered square grid."""
    extent = model.extent if extent is None else extent
    h = 2.0 * extent / n
    q = -extent + (np.arange(n) + 0.5) * h
    Q1, Q2 = np.meshgrid(q, q, indexing="ij")
    ds = dress(model.Vg(Q1, Q2), model.Ve(Q1, Q2), model.mu(Q1, Q2), cavity)
    gVg, gVe, gmu = model.grad_Vg(Q1, Q2), model.grad_Ve(Q1, Q2), model.grad_mu(Q1, Q2)
    f = np.empty((2,) + Q1.shape)
    Om2 = ds.Omega**2
    for i in range(2):
        dG = gVe[i] - gVg[i]
        dg = cavity.coupling(gmu[i])
        f[i] = (ds.delta_c * dg - ds.g * dG) / Om2
    return GapMap(q, q.copy(), ds.delta_c, ds.g, ds.Omega, ds.V_minus, ds.V_plus, f)


def cone_check(model: TwoModeCoInModel, cavity: CavityParams, q1_values=(1e-3, 1e-2, 1e-1)):
    """Gap / |q1| along q2 = 0 at several distances; returns (ratios, max relative spread)."""
    q1 = np.asarray(q1_values, dtype=float)
    ds = dress(model.Vg(q1, 0.0), model.Ve(q1, 0.0), model.mu(q1, 0.0), cavity)
    ratio = ds.Omega / np.abs(q1)
    return ratio, float((ratio.max() - ratio.min()) / ratio.min())


# ---------------------------------------------------------------------------
# scenario object
# ---------------------------------------------------------------------------

class Scenario:
    """All physics objects for one configuration, built lazily."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.name = cfg.scenario
        self.model = build_system(cfg)
        if isinstance(self.model, TwoModeCoInModel):
            self.system = self.model.line(cfg.get("grid", "line_q2_bohr"))
        else:
            self.system = self.model
        if self.system.mass is None:
            raise ConfigError(f"{cfg.where('system')}: missing required key [system] mass_au")
        self.grid = build_grid(cfg, self.system)
        self.cavity = build_cavity(cfg, self.model, self.grid.q)
        self.pml_params = build_pml(cfg, self.grid) if cfg.get("propagation", "enabled") else None
        self._ds = self._cf = self._bare = None

    @property
    def mode(self):
        return self.cfg.get("propagation", "mode")

    @property
    def surfaces(self) -> DressedSurfaces:
        if self._ds is None:
            self._ds = dressed_fields(self.system, self.cavity, self.grid)
        return self._ds

    @property
    def couplings(self) -> CouplingFields:
        if self._cf is None:
            f_ge = self.system.f_ge(self.grid.q)
            self._cf = compute_couplings(self.surfaces, self.grid, f_ge=f_ge if np.any(f_ge) else None,
                                         method=self.cfg.get("grid", "gradient_method"))
        return self._cf

    @property
    def bare(self) -> DressedSurfaces:
        if self._bare is None:
            self._bare = bare_surfaces(self.system, self.cavity, self.grid)
        return self._bare

    def pml(self):
        return make_pml(self.grid, self.pml_params)

    def hamiltonian(self, mode=None, pml=True) -> Hamiltonian:
        if self.couplings.singular.size:
            qs = from_au(self.grid.q[self.couplings.singular], "angstrom")
            raise ScenarioRuntimeError(
                f"propagation grid contains {qs.size} singular point(s) (Omega = 0) at q = {np.round(qs, 6).tolist()} angstrom"
            )
        return Hamiltonian(self.grid, self.surfaces.potentials(), self.couplings, mode or self.mode,
                           pml=self.pml() if pml else None)

    def bare_hamiltonian(self, pml=True) -> Hamiltonian:
        return Hamiltonian(self.grid, self.bare.potentials(), None, "simplified", pml=self.pml() if pml else None)

    def initial_surface(self):
        which = self.cfg.get("system", "initial_surface") or _INITIAL.get(self.name, "g")
        if which == "init" and self.system.V_init is not None:
            return self.system.V_init(self.grid.q)
        if which in ("init", "g"):
            return self.system.Vg(self.grid.q)
        raise ConfigError(f"{self.cfg.where('system', 'initial_surface')}: initial_surface must be 'g' or 'init'")

    def doorway_dipole(self):
        mu0 = self.cfg.get("system", "doorway_dipole_au")
        if mu0 is None and self.name == "photonic-catalyst":
            mu0 = 1.0
        return mu0

    def ground_state(self):
        if not hasattr(self, "_gs"):
            self._gs = relax_ground_state(self.initial_surface(), self.grid)
        return self._gs

    def initial_state(self) -> WavePacket:
        return prepare_doorway(self.ground_state().chi, self.surfaces, self.grid, self.doorway_dipole())

    def bare_initial_state(self) -> WavePacket:
        return prepare_doorway(self.ground_state().chi, self.bare, self.grid, self.doorway_dipole())

    def max_gap(self):
        return float(np.max(self.surfaces.V_plus + self.surfaces.offsets["plus"]
                            - self.surfaces.V_g0 - self.surfaces.offsets["g0"]))

    def pulse(self, amplitude=None):
        s = self.cfg.values["signal"]
        return PulseParams.from_fwhm(s["omega_l_ev"], s["fwhm_fs"],
                                     s["amplitude_au"] if amplitude is None else amplitude)

    def delays_fs(self):
        spec = self.cfg.get("signal", "delays_fs")
        return parse_delays(spec) if spec else np.array([])

    def node_stride(self, dt):
        """Propagation steps between stored signal nodes (>= 40 nodes per 8 sigma)."""
        s = self.cfg.values["signal"]
        sigma = self.pulse().sigma
        spacing = s["node_spacing_au"] or 8.0 * sigma / (2 * MIN_NODES_TARGET)
        return max(1, int(math.floor(spacing / dt + 1e-9)))

    def run_populations(self, t_final_fs=None, dt=None, mode=None, sample_every_fs=None, tol=None,
                        bare=False, signal_horizon_fs=None, node_stride=None):
        """Propagate the doorway state; returns (trace, final packet, stats, signal record or None)."""
        p = self.cfg.values["propagation"]
        t_final = to_au(p["t_final_fs"] if t_final_fs is None else t_final_fs, "fs")
        dt = dt or p["dt_au"]
        tol = tol or p["tol"]
        every_fs = p["sample_every_fs"] if sample_every_fs is None else sample_every_fs
        every = max(1, int(round(to_au(every_fs, "fs") / dt)))
        H = self.bare_hamiltonian() if bare else self.hamiltonian(mode)
        ds = self.bare if bare else self.surfaces
        psi0 = self.bare_initial_state() if bare else self.initial_state()
        rec = PopulationRecorder(self.grid)

        n_steps = int(round(t_final / dt))

        def cb(step, psi, stats):
            # the signal recorder may run a few steps past t_final to complete its last node
            if step > n_steps:
                return
            if step % every == 0 or step == n_steps:
                rec(step, psi, stats)

        if signal_horizon_fs is not None:
            record, psi, stats = record_signal_trajectory(
                H, psi0, ds, self.grid, n_steps * dt, dt, node_stride or self.node_stride(dt), tol,
                callback=cb, t_record=to_au(signal_horizon_fs, "fs"))
        else:
            record = None
            psi, stats = propagate(H, psi0, dt, n_steps, tol, callback=cb)
        return rec.trace(), psi, stats, record


MIN_NODES_TARGET = 24  # nodes per 4 sigma; 48 per 8 sigma leaves margin over the required 40


def mode_discrepancy(scn: Scenario, t_fs=500.0, dt=None):
    """Max population difference between simplified and full propagation up to ``t_fs``."""
    a = scn.run_populations(t_final_fs=t_fs, dt=dt, mode="simplified")[0]
    b = scn.run_populations(t_final_fs=t_fs, dt=dt, mode="full")[0]
    F = scn.couplings.F
    est = float(max(np.max(np.abs(F["F_pp"])), np.max(np.abs(F["F_mm"]))) / (2.0 * scn.grid.mass))
    return {"max_population_difference": population_discrepancy(a, b), "F_term_magnitude_hartree": est,
            "t_fs": t_fs}


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    path: str
    ok: bool
    errors: list
    warnings: list

    def __str__(self):
        out = [f"{self.path}: {'OK' if self.ok else 'INVALID'}"]
        out += [f"  error: {e}" for e in self.errors]
        out += [f"  warning: {w}" for w in self.warnings]
        return "\n".join(out)


def check_config(cfg: ScenarioConfig):
    """Schema and physics plausibility checks; returns (Scenario, warnings) or raises ConfigError."""
    warnings = []
    sc = cfg.get("system", "scenario")
    if sc is None:
        raise ConfigError(f"{cfg.where('system')}: missing required key [system] scenario")
    if sc not in SCENARIOS:
        raise ConfigError(f"{cfg.where('system', 'scenario')}: unknown scenario {sc!r} (expected one of {', '.join(SCENARIOS)})")
    p, s, g = cfg.values["propagation"], cfg.values["signal"], cfg.values["grid"]
    if p["mode"] not in ("simplified", "full"):
        raise ConfigError(f"{cfg.where('propagation', 'mode')}: mode must be 'simplified' or 'full'")
    if g["gradient_method"] not in ("auto", "spectral", "fd8"):
        raise ConfigError(f"{cfg.where('grid', 'gradient_method')}: gradient_method must be auto, spectral or fd8")
    if s["method"] not in ("eigen", "krylov"):
        raise ConfigError(f"{cfg.where('signal', 'method')}: method must be 'eigen' or 'krylov'")
    if p["fit_channel"] not in ("g0", "minus", "plus", "norm"):
        raise ConfigError(f"{cfg.where('propagation', 'fit_channel')}: fit_channel must be g0, minus, plus or norm")
    for key in ("dt_au", "tol", "t_final_fs", "sample_every_fs"):
        if not p[key] > 0:
            raise ConfigError(f"{cfg.where('propagation', key)}: [propagation] {key} must be positive")
    if p["enabled"] and g["n_points"] < MIN_PROPAGATION_POINTS:
        raise ConfigError(f"{cfg.where('grid', 'n_points')}: propagation needs n_points >= {MIN_PROPAGATION_POINTS}")
    try:
        scn = Scenario(cfg)
    except ConfigError:
        raise
    except (ValueError, TableFormatError) as err:
        raise ConfigError(f"{cfg.path}: {err}") from None
    if scn.pml_params is not None and not scn.pml_params.width < scn.grid.length / 4:
        raise ConfigError(
            f"{cfg.where('grid', 'pml_width_angstrom')}: PML width {g['pml_width_angstrom']} angstrom must be below "
            f"a quarter of the domain ({from_au(scn.grid.length / 4, 'angstrom'):.4g} angstrom)"
        )
    if s["enabled"]:
        if not p["enabled"]:
            raise ConfigError(f"{cfg.where('signal', 'enabled')}: the signal needs [propagation] enabled = true")
        if not s["delays_fs"]:
            raise ConfigError(f"{cfg.where('signal')}: missing required key [signal] delays_fs")
        try:
            delays = parse_delays(s["delays_fs"])
        except ValueError as err:
            raise ConfigError(f"{cfg.where('signal', 'delays_fs')}: {err}") from None
        if not s["fwhm_fs"] > 0:
            raise ConfigError(f"{cfg.where('signal', 'fwhm_fs')}: fwhm_fs must be positive")
        pulse = scn.pulse()
        half = from_au(4.0 * pulse.sigma, "fs")
        if delays.min() - half < 0 or delays.max() + half > p["t_final_fs"]:
            raise ConfigError(
                f"{cfg.where('signal', 'delays_fs')}: probe window [{delays.min() - half:.4g}, {delays.max() + half:.4g}] fs "
                f"is not inside the propagated horizon [0, {p['t_final_fs']:.4g}] fs"
            )
        wl = to_au(s["omega_l_ev"], "eV")
        gmax = scn.max_gap()
        if not (0.0 <= wl <= 3.0 * gmax):
            warnings.append(f"{cfg.where('signal', 'omega_l_ev')}: omega_L = {s['omega_l_ev']} eV lies outside "
                            f"[0, 3 x max dressed gap = {from_au(3 * gmax, 'eV'):.4g} eV]")
        nodes = int(8.0 * pulse.sigma / (scn.node_stride(p["dt_au"]) * p["dt_au"])) + 1
        if nodes < 40:
            raise ConfigError(f"{cfg.where('signal', 'node_spacing_au')}: only {nodes} time nodes per 8 sigma (need >= 40)")
    cfg.warnings = warnings
    return scn, warnings


def validate_config(path, overrides=None) -> ValidationReport:
    """Never runs dynamics; collects the first error and all warnings."""
    try:
        cfg = parse_config(path, overrides)
        _, warnings = check_config(cfg)
    except ConfigError as err:
        return ValidationReport(str(path), False, [str(err)], [])
    return ValidationReport(str(path), True, [], warnings)


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------

def _csv(path, columns, units, rows, meta_hash, extra=()):
    header = [f"cavitydyn {__version__} metadata_hash={meta_hash}",
              "units: " + ", ".join(f"{c}[{u}]" for c, u in zip(columns, units))]
    header += list(extra)
    with open(path, "w") as fh:
        for h in header:
            fh.write(f"# {h}\n")
        fh.write(",".join(columns) + "\n")
        for row in np.column_stack(rows):
            fh.write(",".join(f"{x:.12e}" for x in row) + "\n")


def write_surfaces_csv(path, ds: DressedSurfaces, meta_hash):
    ev = lambda x: from_au(x, "eV")
    cols = ["q", "delta_c", "g", "Omega", "V_g0", "V_minus", "V_plus", "cos_theta", "sin_theta",
            "mu_g_plus", "mu_g_minus", "mu_minus_plus"]
    units = ["angstrom"] + ["eV"] * 6 + ["1", "1"] + ["au"] * 3
    rows = [from_au(ds.q, "angstrom"), ev(ds.delta_c), ev(ds.g), ev(ds.Omega), ev(ds.V_g0), ev(ds.V_minus),
            ev(ds.V_plus), ds.cos_theta, ds.sin_theta, ds.mu_g_plus, ds.mu_g_minus, ds.mu_minus_plus]
    extra = [f"potentials exclude photon energies; offsets g0={from_au(ds.offsets['g0'], 'eV'):.12g} eV, "
             f"minus/plus={from_au(ds.offsets['plus'], 'eV'):.12g} eV"]
    _csv(path, cols, units, rows, meta_hash, extra)


def write_couplings_csv(path, q, cf: CouplingFields, meta_hash):
    cols = ["q", "f_mp", "f_gp", "f_gm", "Lambda", "F_pp", "F_mm", "F_mp", "F_gp", "F_gm", "h_mp"]
    units = ["angstrom"] + ["1/bohr"] * 4 + ["1/bohr^2"] * 6
    F = cf.F
    rows = [from_au(q, "angstrom"), cf.f_mp, cf.f_gp, cf.f_gm, cf.Lambda, F["F_pp"], F["F_mm"], F["F_mp"],
            F["F_gp"], F["F_gm"], cf.h_mp]
    extra = [f"gradient method: {cf.gradient_method}; singular points: {len(cf.singular)}"]
    _csv(path, cols, units, rows, meta_hash, extra)


def write_populations_csv(path, tr: PopulationTrace, meta_hash):
    _csv(path, ["t_fs", "P_g0", "P_minus", "P_plus", "norm"], ["fs", "1", "1", "1", "1"],
         [tr.times, tr.P_g0, tr.P_minus, tr.P_plus, tr.norm], meta_hash,
         [f"cumulative absorbed probability at end: {tr.absorbed[-1]:.12e}"])


def write_signal_csv(path, T_fs, S, S_bare, meta_hash):
    _csv(path, ["T_fs", "S_N", "S_N_bare"], ["fs", "au", "au"], [T_fs, S, S_bare], meta_hash)


def write_fit_report(path, fit: BiExpFit, channel, meta_hash, extra=None):
    lines = [f"# cavitydyn {__version__} metadata_hash={meta_hash}", f"channel = {channel}"]
    rep = fit.report()
    units = {"tau1": "fs", "tau2": "fs", "t_min": "fs"}
    for k, v in rep.items():
        key = f"{k}_{units[k]}" if k in units else k
        lines.append(f"{key} = {v!r}" if not isinstance(v, str) else f"{key} = {v}")
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_gap_map_csv(path, gm: GapMap, meta_hash):
    Q1, Q2 = np.meshgrid(gm.q1, gm.q2, indexing="ij")
    ev = lambda x: from_au(x, "eV").ravel()
    _csv(path, ["q1", "q2", "delta_c", "g", "Omega", "V_minus", "V_plus", "f_mp_q1", "f_mp_q2"],
         ["bohr", "bohr"] + ["eV"] * 5 + ["1/bohr"] * 2,
         [Q1.ravel(), Q2.ravel(), ev(gm.delta_c), ev(gm.g), ev(gm.Omega), ev(gm.V_minus), ev(gm.V_plus),
          gm.f_mp[0].ravel(), gm.f_mp[1].ravel()], meta_hash)


def run_metadata(cfg: ScenarioConfig, scn: Scenario, extra=None):
    meta = {
        "engine": "cavitydyn",
        "version": __version__,
        "kernel_backend": _kernels.BACKEND,
        "metadata_hash": cfg.hash(),
        "config_path": cfg.path,
        "config": cfg.resolved(),
        "constants": CONSTANTS,
        "grid": scn.grid.metadata(),
        "pml": asdict(scn.pml_params) if scn.pml_params is not None else None,
        "cavity": {"omega_c_hartree": scn.cavity.omega_c, "eps_c_au": scn.cavity.eps_c, "n_c": scn.cavity.n_c,
                   "omega_c_eV": from_au(scn.cavity.omega_c, "eV")},
        "singular_points": {
            "indices": scn.surfaces.singular.tolist(),
            "q_bohr": scn.grid.q[scn.surfaces.singular].tolist(),
        },
        "warnings": list(cfg.warnings),
    }
    meta.update(extra or {})
    return meta


def run_scenario(path, output_dir=None, mode=None, seed=0, surfaces_only=False):
    """Run a config end to end; returns (metadata dict, list of written files).

    Raises :class:`ConfigError` on invalid input and
    :class:`ScenarioRuntimeError` on failures during the physics.
    """
    overrides = {}
    if mode is not None:
        overrides[("propagation", "mode")] = mode
    if output_dir is not None:
        overrides[("output", "directory")] = str(output_dir)
    cfg = parse_config(path, overrides)
    scn, _ = check_config(cfg)
    out = Path(cfg.get("output", "directory"))
    if not out.is_absolute() and output_dir is None:
        out = Path(cfg.path).parent / out
    out.mkdir(parents=True, exist_ok=True)
    h = cfg.hash()
    t0 = time.perf_counter()
    files = []
    extra = {"seed": seed}

    write_surfaces_csv(out / "surfaces.csv", scn.surfaces, h)
    write_couplings_csv(out / "couplings.csv", scn.grid.q, scn.couplings, h)
    files += [out / "surfaces.csv", out / "couplings.csv"]
    extra["singular_coupling_points"] = scn.couplings.singular.tolist()

    if isinstance(scn.model, TwoModeCoInModel):
        gm = coin_gap_map(scn.model, scn.cavity, n=cfg.get("grid", "map_points"),
                          extent=cfg.get("grid", "map_extent_bohr"))
        write_gap_map_csv(out / "gap_map.csv", gm, h)
        files.append(out / "gap_map.csv")
        ratios, spread = cone_check(scn.model, scn.cavity)
        gmin, q1m, q2m = gm.minimum_grid_gap()
        extra["coin"] = {
            "interpolated_origin_gap_eV": from_au(gm.interpolated_origin_gap(), "eV"),
            "min_grid_gap_eV": from_au(gmin, "eV"), "min_grid_gap_at_bohr": [q1m, q2m],
            "cone_ratio_eV_per_bohr": from_au(ratios, "eV").tolist(), "cone_ratio_spread": spread,
        }

    p, s = cfg.values["propagation"], cfg.values["signal"]
    if p["enabled"] and not surfaces_only:
        try:
            horizon = None
            if s["enabled"]:
                delays = scn.delays_fs()
                horizon = float(delays.max() + from_au(4.0 * scn.pulse().sigma, "fs"))
            tr, psi, stats, record = scn.run_populations(signal_horizon_fs=horizon)
            write_populations_csv(out / "populations.csv", tr, h)
            files.append(out / "populations.csv")
            extra["krylov"] = asdict(stats)
            extra["ground_state_energy_hartree"] = scn.ground_state().energy
            fit = fit_biexponential(tr, p["fit_channel"], t_min=p["fit_t_min_fs"], with_offset=p["fit_offset"],
                                    seed=seed)
            write_fit_report(out / "fit_report.txt", fit, p["fit_channel"], h,
                             {"final_norm": float(tr.norm[-1]), "absorbed": float(tr.absorbed[-1])})
            files.append(out / "fit_report.txt")
            if p["checkpoint"]:
                save_checkpoint(out / "checkpoint.txt", psi, scn.grid, h)
                files.append(out / "checkpoint.txt")
            if s["enabled"]:
                pulse = scn.pulse()
                prop = G0Propagator(scn.grid, scn.surfaces.V_g0, method=s["method"])
                S = signal_scan(record, pulse, to_au(delays, "fs"), prop)
                if s["bare_reference"]:
                    _, _, _, rec_b = scn.run_populations(t_final_fs=horizon, bare=True, signal_horizon_fs=horizon)
                    S_b = signal_scan(rec_b, pulse, to_au(delays, "fs"), prop)
                else:
                    S_b = np.full_like(S, np.nan)
                write_signal_csv(out / "signal.csv", delays, S, S_b, h)
                files.append(out / "signal.csv")
        except (ValueError, ArithmeticError, RuntimeError) as err:
            if isinstance(err, ConfigError):
                raise
            raise ScenarioRuntimeError(str(err)) from err

    meta = run_metadata(cfg, scn, extra)
    meta["wall_clock_s"] = time.perf_counter() - t0
    meta["outputs"] = [f.name for f in files]
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")
    files.append(out / "metadata.json")
    return meta, files


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def shipped_configs():
    """Paths of the default configs bundled with the package."""
    base = resources.files("cavitydyn") / "configs"
    return sorted(Path(str(p)) for p in base.iterdir() if str(p).endswith(".ini"))
