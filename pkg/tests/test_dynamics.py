import math

import numpy as np
import pytest
import scipy.linalg as sla

from magnon_gkp import dynamics as dy
from magnon_gkp import hilbert as hb


def random_density(dims, seed=0, rank=2):
    rng = np.random.default_rng(seed)
    n = math.prod(dims)
    a = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    rho = a @ a.conj().T
    return hb.DensityState(rho / np.trace(rho), dims)


@pytest.mark.parametrize("theta", [0.0, 0.9])
def test_cd_unitary_matches_matrix_exponential(theta):
    dim, chi, t = 60, 1.0, 1.4
    h = dy.cd_hamiltonian(chi, (dim, 2), theta)
    assert h.is_hermitian()
    exact = sla.expm(-1j * t * h.matrix)
    closed = dy.cd_unitary(dim, chi * t / 2, theta).matrix
    psi = hb.tensor(hb.fock(dim, 1), hb.qubit("g")).amplitudes
    assert np.allclose(exact @ psi, closed @ psi, atol=1e-10)


def test_cd_displaces_along_p_conditioned_on_sigma_x():
    dim, alpha = 60, 1.1
    out = dy.evolve_pure_cd(hb.tensor(hb.vacuum(dim), hb.qubit("+")), 2.0, alpha)
    p = hb.embed(hb.quadrature_p(dim), (dim, 2), 0)
    q = hb.embed(hb.quadrature_q(dim), (dim, 2), 0)
    assert abs(hb.expectation(out, p).real - math.sqrt(2) * alpha) < 1e-9
    assert abs(hb.expectation(out, q).real) < 1e-9


def test_evolve_pure_and_density_agree():
    dim = 40
    psi = hb.tensor(hb.coherent(dim, 0.3).normalize(), hb.qubit("+"))
    a = dy.evolve_pure_cd(psi, 1.0, 1.2, 0.4)
    b = dy.evolve_pure_cd(psi.to_density(), 1.0, 1.2, 0.4)
    assert np.allclose(a.to_density().matrix, b.matrix, atol=1e-12)


def _damping_model(dim, kappa, gamma):
    dims = (dim, 2)
    m = hb.embed(hb.annihilation(dim), dims, 0)
    sz = hb.embed(hb.sigma_z(), dims, 1)
    return dy.LindbladModel(hb.Operator(np.zeros((2 * dim, 2 * dim)), dims),
                            ((kappa, m), (gamma, sz)))


def test_liouvillian_matches_dense_rhs():
    dim = 6
    model = dy.LindbladModel(dy.cd_hamiltonian(0.7, (dim, 2), 0.3),
                             _damping_model(dim, 0.2, 0.1).dissipators)
    rho = random_density((dim, 2))
    lv = dy.liouvillian(model)
    assert np.allclose(lv @ rho.matrix.ravel(), dy.lindblad_rhs(model, rho).ravel(), atol=1e-12)


def test_closed_system_matches_unitary():
    dim, chi, t = 30, 1.0, 0.8
    model = dy.LindbladModel(dy.cd_hamiltonian(chi, (dim, 2)))
    assert model.is_closed
    rho0 = hb.tensor(hb.vacuum(dim), hb.qubit("g")).to_density()
    traj = dy.integrate(model, rho0, t, dy.IntegratorSettings(dt=t / 400))
    ref = dy.evolve_pure_cd(rho0, chi, t)
    assert np.max(np.abs(traj.final.matrix - ref.matrix)) < 1e-9


def test_energy_decay_and_dephasing_rates():
    # coefficient c of D[o] = 2 o rho o^dag - {o^dag o, rho}:
    # <n> decays as e^{-2ct}, sigma_z dephasing with c kills coherences as e^{-4ct}
    dim, c_m, c_z, t = 8, 0.3, 0.2, 1.5
    model = _damping_model(dim, c_m, c_z)
    rho0 = hb.tensor(hb.fock(dim, 3), hb.qubit("+")).to_density()
    final = dy.integrate(model, rho0, t, dy.IntegratorSettings(dt=1e-3)).final
    n_op = hb.embed(hb.number(dim), (dim, 2), 0)
    sx = hb.embed(hb.sigma_x(), (dim, 2), 1)
    assert abs(hb.expectation(final, n_op).real - 3 * math.exp(-2 * c_m * t)) < 1e-9
    assert abs(hb.expectation(final, sx).real - math.exp(-4 * c_z * t)) < 1e-9


def test_drift_bounds_hold_for_effective_model(em_noisy):
    dim = 30
    model = dy.effective_master_model(em_noisy, dim)
    rho0 = hb.tensor(hb.vacuum(dim), hb.qubit("g")).to_density()
    traj = dy.integrate(model, rho0, em_noisy.t1 / 4,
                        dy.IntegratorSettings.for_model(em_noisy, 2000))
    d = traj.diagnostics
    assert d["trace_drift"] < 1e-10
    assert d["herm_drift"] < 1e-10
    assert d["min_eig"] > -1e-8


def test_oversized_step_raises_drift_error(em_noisy):
    dim = 20
    model = dy.effective_master_model(em_noisy, dim)
    rho0 = hb.tensor(hb.vacuum(dim), hb.qubit("g")).to_density()
    with pytest.raises(dy.DriftError) as info:
        dy.integrate(model, rho0, em_noisy.t1, dy.IntegratorSettings(dt=em_noisy.t1))
    assert "t" in info.value.diagnostics


def test_integrate_store_and_zero_time():
    dim = 5
    model = _damping_model(dim, 0.1, 0.1)
    rho0 = hb.tensor(hb.fock(dim, 1), hb.qubit("g")).to_density()
    traj = dy.integrate(model, rho0, 1.0, dy.IntegratorSettings(dt=0.01, checkpoints=4), store=True)
    assert len(traj.times) == 5 and traj.times[-1] == 1.0
    assert dy.integrate(model, rho0, 0.0, dy.IntegratorSettings(dt=0.1)).final is rho0


def test_lindblad_model_validation():
    h = dy.cd_hamiltonian(1.0, (4, 2))
    with pytest.raises(ValueError):
        dy.LindbladModel(h, ((-1.0, h),))
    with pytest.raises(hb.DimensionError):
        dy.LindbladModel(h, ((1.0, hb.annihilation(4)),))


def test_effective_master_model_terms(em, em_noisy):
    assert dy.effective_master_model(em, 10).is_closed
    assert dy.effective_master_model(em_noisy, 10, noisy=False).is_closed
    coeffs = sorted(c for c, _ in dy.effective_master_model(em_noisy, 10).dissipators)
    expected = sorted([em_noisy.kappa_m_prime / 2, em_noisy.kappa_m_dprime / 2,
                       em_noisy.gamma_prime / 2, em_noisy.gamma_dprime / 4,
                       em_noisy.gamma_dprime / 4])
    assert np.allclose(coeffs, expected)


def test_fn_generator_cancels_interaction(em):
    # away from the truncation edge, [H_0, V] = -H_I
    cfg = em.config
    o = dy.full_model_ops(6, 8)
    cd, md = o.c.conj().T, o.m.conj().T
    h0 = cfg.omega_q / 2 * o.sz + cfg.omega_c * cd @ o.c + em.omega_m_prime * md @ o.m
    hi = cfg.g_cq * (cd + o.c) @ o.sx + em.g_cm_prime * (cd + o.c) @ (md + o.m)
    v = dy.fn_generator(em, 6, 8).matrix
    assert np.allclose(v, -v.conj().T)
    resid = hi + h0 @ v - v @ h0
    psi = np.zeros(6 * 8 * 2)
    psi[0] = 1.0
    assert np.linalg.norm(resid @ psi) < 1e-6 * np.linalg.norm(hi @ psi)


def test_full_model_frames_and_cap(em):
    lab = dy.full_model_hamiltonian(em, 3, 6, frame="lab")
    sq = dy.full_model_hamiltonian(em, 3, 6, frame="squeezed")
    assert lab.is_hermitian() and sq.is_hermitian()
    with pytest.raises(ValueError):
        dy.full_model_hamiltonian(em, 3, 6, frame="other")
    with pytest.raises(MemoryError):
        dy.full_model_ops(100, 100)


def test_jc_resonant_ladder():
    # zero detunings: doublets at +-chi sqrt(n) for n = 1..dim-1, plus the dark states
    chi, dim = 0.5, 4
    ev = np.linalg.eigvalsh(dy.jc_hamiltonian(0.0, 0.0, chi, dim).matrix)
    ladder = [s * chi * math.sqrt(n) for n in range(1, dim) for s in (1, -1)] + [0.0, 0.0]
    assert np.allclose(ev, sorted(ladder))
