import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magnon_gkp import hilbert as hb

small_complex = st.complex_numbers(max_magnitude=1.5, allow_nan=False, allow_infinity=False)


def random_state(dims, seed=0):
    rng = np.random.default_rng(seed)
    n = math.prod(dims)
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return hb.HybridState(v / np.linalg.norm(v), dims)


def random_density(dims, seed=0, rank=3):
    rng = np.random.default_rng(seed)
    n = math.prod(dims)
    a = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    rho = a @ a.conj().T
    return hb.DensityState(rho / np.trace(rho), dims)


def test_truncated_commutator():
    m = hb.annihilation(12)
    comm = (m @ m.dag() - m.dag() @ m).matrix
    expected = np.eye(12)
    expected[-1, -1] = -11
    assert np.allclose(comm, expected, atol=1e-12)


def test_arrays_are_read_only():
    op = hb.annihilation(4)
    with pytest.raises(ValueError):
        op.matrix[0, 0] = 1
    st_ = hb.vacuum(4)
    with pytest.raises(ValueError):
        st_.amplitudes[0] = 0


def test_operator_shape_checked():
    with pytest.raises(hb.DimensionError):
        hb.Operator(np.eye(3), (2,))
    with pytest.raises(hb.DimensionError):
        hb.annihilation(3) + hb.annihilation(4)


def test_quadratures():
    q, p = hb.quadrature_q(30), hb.quadrature_p(30)
    assert q.is_hermitian() and p.is_hermitian()
    comm = (q @ p - p @ q).matrix
    assert np.allclose(comm[:-1, :-1], 1j * np.eye(29))


def test_vacuum_overlap_of_displacement():
    d = hb.displacement(40, 1.0)
    assert abs(d.matrix[0, 0] - math.exp(-0.5)) < 1e-8


@pytest.mark.parametrize("alpha", [0.7, 2.0j, 1.5 - 1.1j, -2.4])
def test_displacement_matches_coherent_amplitudes(alpha):
    # closed-form Poisson amplitudes are an independent route to D(alpha)|0>
    d = hb.displacement(60, alpha) @ hb.vacuum(60)
    c = hb.coherent(60, alpha)
    assert np.allclose(d.amplitudes, c.amplitudes, atol=1e-10)


@given(small_complex)
@settings(max_examples=25, deadline=None)
def test_displacement_is_unitary_and_inverse(alpha):
    d = hb.displacement(30, alpha)
    assert np.allclose(d.matrix @ d.dag().matrix, np.eye(30), atol=1e-10)
    assert np.allclose(d.dag().matrix, hb.displacement(30, -alpha).matrix, atol=1e-10)


def test_displacement_leakage_warning():
    with pytest.warns(hb.TruncationWarning):
        hb.displacement(20, 6.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        hb.displacement(80, 2.0)


@given(small_complex, small_complex)
@settings(max_examples=30, deadline=None)
def test_weyl_relation(alpha, beta):
    dim = 80
    psi = hb.fock(dim, 2)
    lhs = hb.displacement(dim, beta) @ (hb.displacement(dim, alpha) @ psi)
    phase = np.exp(1j * (beta * np.conj(alpha)).imag)
    rhs = hb.displacement(dim, alpha + beta) @ psi
    assert np.allclose(lhs.amplitudes, phase * rhs.amplitudes, atol=1e-8)


def test_squeezed_vacuum_moments():
    dim = 120
    sq = hb.squeezing(dim, 1.0) @ hb.vacuum(dim)
    q, p, n = hb.quadrature_q(dim), hb.quadrature_p(dim), hb.number(dim)
    var_q = hb.expectation(sq, q @ q).real
    var_p = hb.expectation(sq, p @ p).real
    assert abs(var_p - math.exp(-2) / 2) / (math.exp(-2) / 2) < 1e-2
    assert abs(var_q - math.exp(2) / 2) / (math.exp(2) / 2) < 1e-2
    assert abs(hb.expectation(sq, n).real - math.sinh(1) ** 2) < 1e-3


def test_squeezing_bogoliubov_relation():
    dim, r = 100, 0.6
    s = hb.squeezing(dim, r).matrix
    m = hb.annihilation(dim).matrix
    lhs = s.conj().T @ m @ s
    rhs = math.cosh(r) * m + math.sinh(r) * m.T
    # truncation only touches the top of the space
    assert np.allclose(lhs[:10, :10], rhs[:10, :10], atol=1e-9)


@pytest.mark.parametrize("y", [0.8, -1.7])
def test_squeezing_rescales_imaginary_displacement(y):
    dim, r = 160, 1.0
    s = hb.squeezing(dim, r)
    vac = hb.vacuum(dim)
    lhs = s @ (hb.displacement(dim, 1j * y) @ vac)
    rhs = hb.displacement(dim, 1j * y * math.exp(-r)) @ (s @ vac)
    assert hb.fidelity(lhs, rhs) > 1 - 1e-9


def test_tensor_dims_and_associativity():
    a = hb.Operator(np.arange(4).reshape(2, 2), (2,))
    b = hb.Operator(np.arange(9).reshape(3, 3), (3,))
    c = hb.sigma_x()
    left = hb.tensor(hb.tensor(a, b), c)
    right = hb.tensor(a, hb.tensor(b, c))
    assert left.space_dims == (2, 3, 2)
    assert np.array_equal(left.matrix, right.matrix)
    with pytest.raises(TypeError):
        hb.tensor(a, hb.vacuum(2))


def test_expectation_dimension_mismatch():
    with pytest.raises(hb.DimensionError):
        hb.expectation(hb.vacuum(4), hb.number(5))


def test_project_qubit_probabilities():
    psi = hb.tensor(hb.vacuum(5), hb.qubit("+"))
    post, p = hb.project_qubit(psi, "g")
    assert abs(p - 0.5) < 1e-12
    assert abs(post.norm - 1) < 1e-12
    rho_post, p2 = hb.project_qubit(psi.to_density(), "e")
    assert abs(p2 - 0.5) < 1e-12
    with pytest.raises(hb.ImpossibleOutcomeError):
        hb.project_qubit(hb.tensor(hb.vacuum(5), hb.qubit("g")), "e")


def test_project_after_conditional_displacement():
    # (D(ia)|0>|+> + D(-ia)|0>|->)/sqrt2 projected on g: p = (1 + e^{-2a^2})/2
    dim, a = 60, 1.3
    plus = hb.tensor(hb.displacement(dim, 1j * a) @ hb.vacuum(dim), hb.qubit("+"))
    minus = hb.tensor(hb.displacement(dim, -1j * a) @ hb.vacuum(dim), hb.qubit("-"))
    psi = hb.HybridState((plus.amplitudes + minus.amplitudes) / math.sqrt(2), (dim, 2))
    _, p = hb.project_qubit(psi, "g")
    assert abs(p - (1 + math.exp(-2 * a * a)) / 2) < 1e-12


def test_partial_trace_and_magnon_part():
    rho = random_density((6, 2))
    red = hb.partial_trace_qubit(rho)
    assert red.space_dims == (6,)
    assert abs(red.trace - 1) < 1e-12
    prod = hb.tensor(hb.coherent(20, 0.5).normalize(), hb.qubit("e"))
    mag = hb.magnon_part(prod)
    assert isinstance(mag, hb.HybridState)
    assert hb.fidelity(mag, hb.coherent(20, 0.5).normalize()) > 1 - 1e-12
    ent = random_state((6, 2))
    assert isinstance(hb.magnon_part(ent), hb.DensityState)


def test_fidelity_conventions():
    vac = hb.vacuum(40)
    coh = hb.coherent(40, 1.0).normalize()
    assert abs(hb.fidelity(vac, vac) - 1) < 1e-12
    assert abs(hb.fidelity(vac, coh) - math.exp(-1)) < 1e-10
    assert abs(hb.fidelity(vac, coh.to_density()) - math.exp(-1)) < 1e-10
    assert abs(hb.fidelity(vac.to_density(), coh.to_density()) - math.exp(-1)) < 1e-8
    a, b = random_density((5,), 1), random_density((5,), 2)
    assert abs(hb.fidelity(a, b) - hb.fidelity(b, a)) < 1e-8


def test_density_check():
    rho = random_density((4, 2))
    rho.check()
    bad = hb.DensityState(2 * rho.matrix, rho.space_dims)
    with pytest.raises(ValueError):
        bad.check()


def test_apply_local_matches_kron():
    u = hb.displacement(7, 0.4 + 0.2j).matrix
    r = hb.qubit_rotation("y", 0.7).matrix
    psi = random_state((7, 2))
    rho = random_density((7, 2))
    full_u = np.kron(u, np.eye(2))
    full_r = np.kron(np.eye(7), r)
    assert np.allclose(hb.apply_local(u, psi, 0).amplitudes, full_u @ psi.amplitudes)
    assert np.allclose(hb.apply_local(r, psi, 1).amplitudes, full_r @ psi.amplitudes)
    assert np.allclose(hb.apply_local(u, rho, 0).matrix, full_u @ rho.matrix @ full_u.conj().T)


def test_qubit_rotation_and_states():
    r = hb.qubit_rotation("x", math.pi)
    out = r @ hb.qubit("g")
    assert abs(abs(out.amplitudes[1]) - 1) < 1e-12
    assert abs(hb.expectation(hb.qubit("+"), hb.sigma_x()) - 1) < 1e-12
    assert abs(hb.expectation(hb.qubit("e"), hb.sigma_z()) - 1) < 1e-12
    sp = hb.sigma_plus()
    assert np.allclose((sp @ hb.qubit("g")).amplitudes, hb.qubit("e").amplitudes)


def test_resize_and_support():
    c = hb.coherent(80, 2.0).normalize()
    n = hb.support_dim(c, 1e-14)
    assert 20 < n < 80
    small = hb.resize(c, n)
    assert abs(small.norm - 1) < 1e-6
    back = hb.resize(small, 80)
    assert back.space_dims == (80,)
    rho = hb.tensor(c, hb.qubit("g")).to_density()
    assert hb.resize(rho, 100).space_dims == (100, 2)
    assert hb.leakage(hb.fock(10, 9)) == 1.0
