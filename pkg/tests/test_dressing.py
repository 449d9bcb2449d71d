import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cavitydyn.dressing import (
    CavityParams, CouplingError, analytic_eigenvectors, bare_surfaces, cavity_from_resonance,
    dress, dressed_fields, gap_oracle_deviation, jc_matrix, jc_matrix_from_values,
    oracle_eigenvectors,
)
from cavitydyn.surfaces import BareSystem, ConstantCurve, MorseCurve, morse_state
from cavitydyn.units import convert, to_au

MEV = to_au(1.0, "meV")
energies = st.floats(-0.5, 0.5)
dipoles = st.floats(-5, 5)


def test_cavity_validation():
    with pytest.raises(ValueError):
        CavityParams(omega_c=0.0, eps_c=0.1)
    with pytest.raises(ValueError):
        CavityParams(omega_c=0.1, eps_c=-1.0)
    with pytest.raises(ValueError):
        CavityParams(omega_c=0.1, eps_c=0.1, n_c=1)


def test_cavity_from_resonance_catalyst(catalyst, grid2048):
    sys_, cav, _ = catalyst
    assert convert(cav.omega_c, "hartree", "eV") == pytest.approx(1.496, abs=5e-4)
    # the sigmoid reaches 4 a.u. only asymptotically; on [1, 12] A its peak is 0.04% lower
    assert cav.eps_c == pytest.approx(2 * to_au(0.054, "eV") / 4.0, rel=1e-3)
    assert cav.eps_c == pytest.approx(2 * 54 * MEV / np.max(np.abs(sys_.mu_eg(grid2048.q))), rel=1e-14)
    g = cav.coupling(sys_.mu_eg(grid2048.q))
    assert np.max(np.abs(g)) == pytest.approx(54 * MEV, rel=1e-12)


def test_cavity_from_resonance_constant_dipole():
    s = BareSystem(Vg=MorseCurve(morse_state("S0")), Ve=MorseCurve(morse_state("S2")),
                   mu_eg=ConstantCurve(2.5))
    q = np.linspace(2, 10, 50)
    cav = cavity_from_resonance(s, 4.0, 0.01, q)
    assert cav.eps_c == pytest.approx(2 * 0.01 / 2.5, rel=1e-15)


def test_cavity_from_resonance_bound_is_near_two_ev(bound):
    _, cav, _ = bound
    assert convert(cav.omega_c, "hartree", "eV") == pytest.approx(2.0, abs=0.06)


def test_zero_dipole_rejected():
    s = BareSystem(Vg=MorseCurve(morse_state("S0")), Ve=MorseCurve(morse_state("S2")),
                   mu_eg=ConstantCurve(0.0))
    with pytest.raises(CouplingError):
        cavity_from_resonance(s, 4.0, 0.01, np.linspace(2, 10, 20))


def test_zero_detuning_point():
    # dyadic values make the detuning exactly zero
    cav = CavityParams(omega_c=0.125, eps_c=0.01)
    ds = dress(Vg=[0.125], Ve=[0.25], mu_eg=[2.0], cavity=cav)
    g = ds.g[0]
    assert ds.delta_c[0] == 0.0
    assert ds.V_plus[0] == pytest.approx(0.1875 + g, rel=1e-15)
    assert ds.V_minus[0] == pytest.approx(0.1875 - g, rel=1e-15)
    assert ds.cos_theta[0] == pytest.approx(2**-0.5, rel=1e-15)
    assert ds.sin_theta[0] == pytest.approx(2**-0.5, rel=1e-15)


def test_decoupled_limit():
    cav = CavityParams(omega_c=0.05, eps_c=0.0)
    Vg = np.linspace(0.0, 0.1, 7)
    Ve = 0.2 - Vg
    ds = dress(Vg, Ve, np.full(7, 3.0), cav, mu_gg=np.full(7, 0.4), mu_ee=np.full(7, -0.2))
    np.testing.assert_allclose(ds.V_plus - ds.V_minus, np.abs(ds.delta_c), rtol=1e-15)
    # mixing is c s (mu_gg - mu_ee) and c s -> 0 away from resonance
    off = np.abs(ds.delta_c) > 1e-12
    np.testing.assert_allclose(ds.mu_minus_plus[off], 0.0, atol=1e-15)


def test_catalyst_minimal_gap(catalyst, grid2048):
    _, cav, ds = catalyst
    gap = ds.V_plus - ds.V_minus
    i = int(np.argmin(gap))
    # minimum sits at the resonance crossing and equals twice the coupling there
    assert abs(ds.delta_c[i]) < 0.02 * ds.Omega[i]
    assert gap[i] == pytest.approx(2 * ds.g[i], rel=1e-3)
    # the location lies where the S1-S2 gap is minimal, see the acceptance module
    q_A = convert(grid2048.q[i], "bohr", "angstrom")
    assert 2.25 < q_A < 2.35


def test_offsets_and_oracle_absolute_energies(catalyst):
    _, cav, ds = catalyst
    M = jc_matrix_from_values(ds.Vg, ds.Ve, ds.mu_eg, cav)
    ev = np.linalg.eigvalsh(M)
    np.testing.assert_allclose(ev[:, 0], ds.V_minus + ds.offsets["minus"], rtol=1e-13)
    np.testing.assert_allclose(ev[:, 1], ds.V_plus + ds.offsets["plus"], rtol=1e-13)


def test_jc_matrix_form(catalyst):
    sys_, cav, _ = catalyst
    q = 4.5
    v = sys_.evaluate([q])
    M = jc_matrix(sys_, cav, q)
    g = 0.5 * cav.eps_c * v["mu_eg"][0]
    expect = [[v["Ve"][0] + 0.5 * cav.omega_c, g], [g, v["Vg"][0] + 1.5 * cav.omega_c]]
    np.testing.assert_allclose(M, expect, rtol=1e-15)
    M0 = jc_matrix(sys_, cav.uncoupled(), q)
    assert M0[0, 1] == 0.0
    np.testing.assert_allclose(np.linalg.eigvalsh(M0), sorted(np.diag(M0)), rtol=1e-15)


@settings(max_examples=200, deadline=None)
@given(Vg=energies, Ve=energies, mu=dipoles, w=st.floats(0.01, 0.5), eps=st.floats(0, 0.05))
def test_invariants_pointwise(Vg, Ve, mu, w, eps):
    cav = CavityParams(omega_c=w, eps_c=eps)
    ds = dress([Vg], [Ve], [mu], cav)
    if ds.singular.size:
        return
    c, s, Om, g, d = ds.cos_theta[0], ds.sin_theta[0], ds.Omega[0], ds.g[0], ds.delta_c[0]
    assert c * c + s * s == pytest.approx(1.0, abs=1e-12)
    assert ds.V_plus[0] - ds.V_minus[0] == pytest.approx(Om, rel=1e-12, abs=1e-16)
    assert Om >= 2 * abs(g) * (1 - 1e-15)
    assert Om**2 == pytest.approx(4 * g * g + d * d, rel=1e-12)
    # dipole sum rule
    assert ds.mu_g_plus[0] ** 2 + ds.mu_g_minus[0] ** 2 == pytest.approx(mu * mu, rel=1e-12, abs=1e-300)
    assert ds.mu_minus_plus[0] == 0.0
    # eigenvalue difference of the explicit matrix
    ev = np.linalg.eigvalsh(jc_matrix_from_values(Vg, Ve, mu, cav))
    assert abs((ev[1] - ev[0]) - Om) < 1e-12 * max(1.0, abs(ev[1]))


@settings(max_examples=200, deadline=None)
@given(Vg=energies, Ve=energies, mu=dipoles, w=st.floats(0.01, 0.5), eps=st.floats(1e-4, 0.05))
def test_eigenvectors_match_oracle(Vg, Ve, mu, w, eps):
    cav = CavityParams(omega_c=w, eps_c=eps)
    ds = dress([Vg], [Ve], [mu], cav)
    if ds.Omega[0] < 1e-8:
        return
    vm, vp = analytic_eigenvectors(ds)
    ev, om, op = oracle_eigenvectors(Vg, Ve, mu, cav)
    # eigenvector ordering follows eigenvalue ordering, up to sign
    assert abs(abs(np.dot(vp[0], op)) - 1) < 1e-10
    assert abs(abs(np.dot(vm[0], om)) - 1) < 1e-10


def test_higher_state_is_excited_in_decoupled_limit():
    """With g -> 0 and positive detuning |+> must be |e,0>, the higher diagonal entry."""
    cav = CavityParams(omega_c=0.05, eps_c=1e-9)
    ds = dress([0.0], [0.1], [1.0], cav)
    vm, vp = analytic_eigenvectors(ds)
    assert abs(vp[0, 0]) == pytest.approx(1.0, abs=1e-12)
    assert abs(vm[0, 1]) == pytest.approx(1.0, abs=1e-12)


def test_degeneracy_criterion():
    cav = CavityParams(omega_c=0.05, eps_c=0.01)
    # exact degeneracy only with vanishing coupling and detuning
    ds = dress([0.0, 0.0, 0.0], [0.05, 0.05, 0.06], [0.0, 1.0, 0.0], cav)
    assert list(ds.singular) == [0]
    gap = ds.V_plus - ds.V_minus
    assert gap[0] == 0.0 and gap[1] > 0 and gap[2] > 0


@pytest.mark.parametrize("which", ["catalyst", "bound"])
def test_oracle_equivalence_on_grid(request, which):
    _, _, ds = request.getfixturevalue(which)
    assert np.max(gap_oracle_deviation(ds)) < 1e-12


def test_permanent_dipoles(grid2048):
    cav = CavityParams(omega_c=0.05, eps_c=0.01)
    ds = dress([0.0], [0.05], [1.0], cav, mu_gg=[0.3], mu_ee=[0.1])
    c, s = ds.cos_theta[0], ds.sin_theta[0]
    assert ds.mu_minus_plus[0] == pytest.approx(c * s * 0.2, rel=1e-15)


def test_bare_surfaces_coincide_with_dressing_at_zero_coupling(catalyst, grid2048):
    sys_, cav, _ = catalyst
    b = bare_surfaces(sys_, cav, grid2048)
    d = dressed_fields(sys_, cav.uncoupled(), grid2048)
    # same set of absolute levels, pairwise assigned by energy ordering
    hi = np.maximum(b.V_plus, b.V_minus)
    lo = np.minimum(b.V_plus, b.V_minus)
    np.testing.assert_allclose(d.V_plus, hi, rtol=1e-14)
    np.testing.assert_allclose(d.V_minus, lo, rtol=1e-14)
    np.testing.assert_allclose(b.V_plus + b.offsets["plus"], b.Ve + 0.5 * cav.omega_c, rtol=1e-14)
    np.testing.assert_allclose(b.V_minus + b.offsets["minus"], b.Vg + 1.5 * cav.omega_c, rtol=1e-14)
