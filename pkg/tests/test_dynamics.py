import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cavitydyn.couplings import compute_couplings
from cavitydyn.dressing import CavityParams, cavity_from_resonance, dress, dressed_fields
from cavitydyn.dynamics import (
    GroundStateError, Hamiltonian, KrylovConvergenceError, WavePacket, apply_hamiltonian,
    fgh_ground_state, imaginary_time_ground_state, krylov_expm, load_checkpoint, prepare_doorway,
    propagate, propagate_step, relax_ground_state, save_checkpoint,
)
from cavitydyn.grid import GridSpec, gradient, make_grid
from cavitydyn.surfaces import catalyst_system, eval_morse, morse_eigenvalue, morse_state
from cavitydyn.units import to_au


@pytest.fixture(scope="module")
def cat_H(catalyst, grid2048):
    _, _, ds = catalyst
    cf = compute_couplings(ds, grid2048)
    return ds, cf


def _rand(rng, n, rows=3):
    return rng.normal(size=(rows, n)) + 1j * rng.normal(size=(rows, n))


def test_wavepacket_shape_and_norm(grid2048):
    with pytest.raises(ValueError):
        WavePacket(np.zeros((2, 10)))
    psi = WavePacket.from_channels(plus=np.full(grid2048.n, 2.0))
    with pytest.raises(ValueError, match="exceeds 1"):
        psi.check(grid2048)
    with pytest.raises(ValueError, match="points"):
        WavePacket.zeros(10).check(grid2048)


def test_decoupled_block_stays(rng, grid2048):
    H = Hamiltonian(grid2048, np.zeros((3, grid2048.n)))
    assert H.blocks() == [(0,), (1,), (2,)]
    psi = WavePacket.from_channels(minus=rng.normal(size=grid2048.n))
    out = apply_hamiltonian(H, psi).data
    assert np.all(out[0] == 0) and np.all(out[2] == 0)


def test_eigenstate_of_channel(grid2048):
    V = eval_morse(morse_state("S0"), grid2048.q)
    chi, E = fgh_ground_state(V, grid2048)
    H = Hamiltonian(grid2048, np.stack([V, V, V]))
    out = H.apply(WavePacket.from_channels(g0=chi).data)[0]
    assert np.max(np.abs(out - E * chi)) < 1e-10 * np.max(np.abs(chi))


@pytest.mark.parametrize("mode", ["simplified", "full"])
def test_hermitian_plain_grid(rng, cat_H, grid2048, mode):
    ds, cf = cat_H
    H = Hamiltonian(grid2048, ds.potentials(), cf, mode=mode)
    assert H.hermitian
    assert H.blocks() == [(0,), (1, 2)]
    phi, psi = _rand(rng, grid2048.n), _rand(rng, grid2048.n)
    dq = grid2048.dq
    lhs = np.vdot(phi, H.apply(psi)) * dq
    rhs = np.vdot(H.apply(phi), psi) * dq
    scale = math.sqrt(np.vdot(phi, phi).real * dq * np.vdot(psi, psi).real * dq)
    assert abs(lhs - rhs) < 1e-12 * scale


def test_full_mode_adds_F(rng, cat_H, grid2048):
    ds, cf = cat_H
    Hs = Hamiltonian(grid2048, ds.potentials(), cf, mode="simplified")
    Hf = Hamiltonian(grid2048, ds.potentials(), cf, mode="full")
    psi = _rand(rng, grid2048.n)
    F = cf.F_matrix
    expect = np.einsum("kln,ln->kn", F, psi) / (2 * grid2048.mass)
    np.testing.assert_allclose(Hf.apply(psi) - Hs.apply(psi), expect, atol=1e-12)


def test_coupling_term_against_direct_form(rng, cat_H, grid2048):
    """(H psi)_k coupling part equals -(1/2m) sum_l [2 f_kl psi_l' + f_kl' psi_l]."""
    ds, cf = cat_H
    H = Hamiltonian(grid2048, ds.potentials(), cf)
    H0 = Hamiltonian(grid2048, ds.potentials())
    # smooth packets: the discrete product rule only holds for resolved fields
    q = grid2048.q
    psi = np.stack([np.exp(-2 * (q - c) ** 2 + 1j * k * q) for c, k in ((5.0, 2.0), (4.8, -5.0), (6.0, 1.0))])
    f = cf.f
    D = grid2048.spectral_derivative
    df = np.array([[gradient(grid2048, f[k, l]) for l in range(3)] for k in range(3)])
    direct = np.zeros_like(psi)
    for k in range(3):
        for l in range(3):
            direct[k] += 2 * f[k, l] * D(psi[l]) + df[k, l] * psi[l]
    direct *= -0.5 / grid2048.mass
    np.testing.assert_allclose(H.apply(psi) - H0.apply(psi), direct, atol=1e-10)


def test_diagonal_exponential(rng):
    g = make_grid(GridSpec(0.0, 10.0, 128, mass=1e12))
    V = rng.uniform(-0.1, 0.1, 128)
    H = Hamiltonian(g, np.stack([V, V, V]))
    chi = np.exp(-(g.q - 5) ** 2).astype(complex)
    psi = WavePacket.from_channels(g0=chi)
    out = propagate_step(H, psi, 3.0, tol=1e-12)
    np.testing.assert_allclose(out.data[0], np.exp(-1j * V * 3.0) * chi, atol=1e-10)
    assert out.time == 3.0


def test_free_gaussian_dispersion():
    m, s0 = 1.0, 0.5
    g = make_grid(GridSpec(-20.0, 20.0, 512, mass=m))
    psi = WavePacket.from_channels(g0=np.exp(-g.q**2 / (4 * s0**2)))
    psi.data /= math.sqrt(psi.norm2(g))
    H = Hamiltonian(g, np.zeros((3, g.n)))
    dt, n = 0.01, 100
    out, _ = propagate(H, psi, dt, n, tol=1e-12)
    rho = np.abs(out.data[0]) ** 2
    var = np.sum(g.q**2 * rho) * g.dq
    t = dt * n
    exact = s0**2 * (1 + (t / (2 * m * s0**2)) ** 2)
    assert abs(math.sqrt(var) - math.sqrt(exact)) / math.sqrt(exact) < 1e-8


def test_norm_conservation_1000_steps(cat_H, grid2048, catalyst):
    ds, cf = cat_H
    H = Hamiltonian(grid2048, ds.potentials(), cf)
    chi, _ = fgh_ground_state(eval_morse(morse_state("S0"), grid2048.q), grid2048)
    psi = prepare_doorway(chi, ds, grid2048, mu0=1.0)
    out, stats = propagate(H, psi, 2.0, 1000)
    assert abs(out.norm2(grid2048) - 1.0) < 1e-10
    assert stats.steps == 1000 and stats.absorbed == 0.0


def test_halved_dt_consistency(cat_H, grid2048):
    ds, cf = cat_H
    H = Hamiltonian(grid2048, ds.potentials(), cf)
    chi, _ = fgh_ground_state(eval_morse(morse_state("S0"), grid2048.q), grid2048)
    psi = prepare_doorway(chi, ds, grid2048, mu0=1.0)
    a, _ = propagate(H, psi, 4.0, 50, tol=1e-11)
    b, _ = propagate(H, psi, 2.0, 100, tol=1e-11)
    pa = np.sum(np.abs(a.data) ** 2, axis=1) * grid2048.dq
    pb = np.sum(np.abs(b.data) ** 2, axis=1) * grid2048.dq
    assert np.max(np.abs(pa - pb)) < 1e-8


def test_krylov_cap_error(grid2048):
    H = Hamiltonian(grid2048, np.zeros((3, grid2048.n)))
    psi = np.exp(-(grid2048.q - 10) ** 2 * 50)[None, :].astype(complex)
    with pytest.raises(KrylovConvergenceError, match="reduce the time step"):
        krylov_expm(lambda x: H.apply_block(x, (0,)), psi, 5000.0, 1e-12, max_dim=16)


def test_step_validation(grid2048):
    H = Hamiltonian(grid2048, np.zeros((3, grid2048.n)))
    psi = WavePacket.zeros(grid2048.n)
    with pytest.raises(ValueError):
        propagate_step(H, psi, 0.0)
    with pytest.raises(ValueError):
        propagate_step(H, psi, 1.0, tol=0.0)
    with pytest.raises(ValueError):
        Hamiltonian(grid2048, np.zeros((3, grid2048.n)), mode="exact")


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), dt=st.floats(0.1, 20.0))
def test_arnoldi_matches_lanczos_when_hermitian(seed, dt):
    r = np.random.default_rng(seed)
    A = r.normal(size=(40, 40)) + 1j * r.normal(size=(40, 40))
    A = 0.01 * (A + A.conj().T)
    v = r.normal(size=40) + 0j
    a, _ = krylov_expm(lambda x: A @ x, v, dt, 1e-12, hermitian=True)
    b, _ = krylov_expm(lambda x: A @ x, v, dt, 1e-12, hermitian=False)
    w, U = np.linalg.eigh(A)
    exact = U @ (np.exp(-1j * w * dt) * (U.conj().T @ v))
    np.testing.assert_allclose(a, exact, atol=1e-9)
    np.testing.assert_allclose(b, exact, atol=1e-9)


# ---------------------------------------------------------------------------
# ground state
# ---------------------------------------------------------------------------

def test_harmonic_ground_state():
    m, w = 3650.0, 0.01
    g = make_grid(GridSpec(-1.5, 1.5, 256, mass=m))
    V = 0.5 * m * w**2 * g.q**2
    gs = relax_ground_state(V, g)
    assert gs.energy == pytest.approx(0.5 * w, abs=1e-10)
    alpha = m * w
    gauss = (alpha / np.pi) ** 0.25 * np.exp(-0.5 * alpha * g.q**2)
    assert np.max(np.abs(gs.chi - gauss)) < 1e-8 * np.max(gauss)


def test_morse_ground_state(grid2048):
    p = morse_state("S0")
    gs = relax_ground_state(eval_morse(p, grid2048.q), grid2048)
    assert abs(gs.energy - morse_eigenvalue(p, 3650.0, 0)) < 1e-8
    assert grid2048.norm2(gs.chi) == pytest.approx(1.0, abs=1e-12)


def test_cross_method(grid2048):
    V = eval_morse(morse_state("S0"), grid2048.q)
    gs = relax_ground_state(V, grid2048, check=True)
    assert abs(gs.energy_check - gs.energy) < 1e-8 * abs(gs.energy)
    chi_it, e_it = imaginary_time_ground_state(V, grid2048)
    assert e_it == pytest.approx(gs.energy, rel=1e-8)
    assert abs(grid2048.inner(gs.chi, chi_it)) == pytest.approx(1.0, abs=1e-7)


def test_cross_method_disagreement_raises(grid2048):
    V = eval_morse(morse_state("S0"), grid2048.q)
    with pytest.raises(GroundStateError):
        relax_ground_state(V, grid2048, check=True, rtol=1e-30)
    with pytest.raises(ValueError):
        relax_ground_state(np.full(grid2048.n, np.inf), grid2048)


# ---------------------------------------------------------------------------
# doorway
# ---------------------------------------------------------------------------

def _chi(grid):
    chi = np.exp(-(grid.q - 4.0) ** 2)
    return chi / math.sqrt(grid.norm2(chi))


def test_doorway_equal_mixing(grid2048):
    n = grid2048.n
    cav = CavityParams(omega_c=0.05, eps_c=0.01)
    ds = dress(np.zeros(n), np.full(n, 0.05), np.full(n, 1.0), cav)
    psi = prepare_doorway(_chi(grid2048), ds, grid2048, mu0=1.0)
    P = np.sum(np.abs(psi.data) ** 2, axis=1) * grid2048.dq
    np.testing.assert_allclose(P, [0.0, 0.5, 0.5], atol=1e-14)


def test_doorway_decoupled(grid2048):
    n = grid2048.n
    ds = dress(np.zeros(n), np.full(n, 0.2), np.full(n, 1.0), CavityParams(omega_c=0.05, eps_c=0.0))
    psi = prepare_doorway(_chi(grid2048), ds, grid2048, mu0=1.0)
    assert psi.norm2(grid2048) == pytest.approx(1.0, abs=1e-14)
    assert np.all(psi.data[1] == 0)


def test_doorway_ratio_bound(bound, grid2048):
    _, _, ds = bound
    chi, _ = fgh_ground_state(ds.V_g0, grid2048)
    psi = prepare_doorway(chi, ds, grid2048)
    P = np.sum(np.abs(psi.data) ** 2, axis=1)
    expect = np.sum(ds.cos_theta**2 * ds.mu_eg**2 * chi**2) / np.sum(ds.sin_theta**2 * ds.mu_eg**2 * chi**2)
    assert P[2] / P[1] == pytest.approx(expect, rel=1e-12)
    assert psi.meta["weight_total"] == pytest.approx(psi.meta["weight_plus"] + psi.meta["weight_minus"])


def test_doorway_zero_weight(grid2048):
    n = grid2048.n
    ds = dress(np.zeros(n), np.full(n, 0.2), np.zeros(n), CavityParams(omega_c=0.05, eps_c=0.0))
    with pytest.raises(ValueError, match="zero weight"):
        prepare_doorway(_chi(grid2048), ds, grid2048)


def test_checkpoint_round_trip(tmp_path, rng, grid2048):
    psi = WavePacket(_rand(rng, grid2048.n), time=123.5)
    path = tmp_path / "chk.txt"
    save_checkpoint(path, psi, grid2048, scenario_hash="abc123", extra={"step": 7})
    q, back, head = load_checkpoint(path)
    np.testing.assert_array_equal(q, grid2048.q)
    np.testing.assert_array_equal(back.data, psi.data)
    assert back.time == 123.5
    assert head["scenario_hash"] == "abc123" and head["step"] == "7"
    assert "n_points=2048" in head["grid"]


def _diabatic_split_operator(ds, grid, psi0, t, dt=0.25):
    """Independent route: Strang splitting in the {|e,0>, |g,1>} basis, coupling g as a potential."""
    c, s = ds.cos_theta, ds.sin_theta
    x = np.stack([c * psi0.data[2] - s * psi0.data[1], s * psi0.data[2] + c * psi0.data[1]], axis=-1)
    w = ds.cavity.omega_c
    V = np.moveaxis(np.array([[ds.Ve + 0.5 * w, ds.g], [ds.g, ds.Vg + 1.5 * w]]), (0, 1), (-2, -1))
    ev, U = np.linalg.eigh(V)
    half = U @ (np.exp(-0.5j * ev * dt)[..., None] * np.conj(np.swapaxes(U, -1, -2)))
    k = 2.0 * np.pi * np.fft.fftfreq(grid.n, d=grid.dq)
    kin = np.exp(-0.5j * k**2 / grid.mass * dt)[:, None]
    for _ in range(int(round(t / dt))):
        x = np.einsum("nij,nj->ni", half, x)
        x = np.fft.ifft(kin * np.fft.fft(x, axis=0), axis=0)
        x = np.einsum("nij,nj->ni", half, x)
    p_plus = c * x[:, 0] + s * x[:, 1]
    p_minus = -s * x[:, 0] + c * x[:, 1]
    return np.array([np.sum(np.abs(p_minus) ** 2), np.sum(np.abs(p_plus) ** 2)]) * grid.dq


@pytest.mark.parametrize("mode, tol", [("full", 1e-6), ("simplified", 1e-4)])
def test_dressed_propagation_matches_diabatic_route(mode, tol):
    """The dressed channels with f (and F) reproduce exact diabatic dynamics of the JC model."""
    g = make_grid(GridSpec.from_angstrom(1.0, 12.0, 512))
    sys_ = catalyst_system()
    cav = cavity_from_resonance(sys_, to_au(2.3, "angstrom"), to_au(54.0, "meV"), g.q)
    ds = dressed_fields(sys_, cav, g)
    chi, _ = fgh_ground_state(sys_.V_init(g.q), g)
    psi0 = prepare_doorway(chi, ds, g, mu0=1.0)
    t = to_au(50.0, "fs")
    ref = _diabatic_split_operator(ds, g, psi0, t)
    H = Hamiltonian(g, ds.potentials(), compute_couplings(ds, g), mode)
    out, _ = propagate(H, psi0, 1.0, int(round(t)), tol=1e-11)
    P = np.sum(np.abs(out.data[1:]) ** 2, axis=1) * g.dq
    assert np.max(np.abs(P - ref)) < tol
