import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgtlab import freefermion as ff
from qgtlab import oracle
from qgtlab.model import (
    ChainParams,
    PauliTerm,
    build_dense_derivative,
    build_pauli_hamiltonian,
    derivative_terms,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)
PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
MINUS = np.array([1, -1], dtype=complex) / np.sqrt(2)
seeds = st.integers(0, 2**32 - 1)


def random_hermitian(rng, dim):
    M = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (M + M.conj().T) / 2


def random_state(rng, dim):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def random_pauli_hamiltonian(rng, n, n_terms=3):
    terms = []
    for _ in range(n_terms):
        k = int(rng.integers(1, n + 1))
        sites = rng.choice(n, size=k, replace=False)
        terms.append(PauliTerm(rng.normal(), [(int(s), str(rng.choice(list("xyz")))) for s in sites]))
    return build_pauli_hamiltonian(terms, n)


# ---------------------------------------------------------------------
# Eigensystems and evolution
# ---------------------------------------------------------------------


def test_eigensystem_diag():
    eig = oracle.eigensystem(np.diag([1.0, -1.0]))
    np.testing.assert_allclose(eig.energies, [-1, 1])


def test_cluster_point_n4():
    eig = oracle.full_eigensystem(ChainParams(n_sites=4))
    assert eig.energies[0] == pytest.approx(-4.0, abs=1e-12)
    assert eig.gap == pytest.approx(2.0, abs=1e-12)


def test_degenerate_ground_state_error():
    with pytest.raises(oracle.DegenerateGroundStateError):
        oracle.eigensystem(np.zeros((2, 2)))
    assert oracle.eigensystem(np.zeros((2, 2)), require_nondegenerate=False).ground_degeneracy == 2


def test_non_hermitian_rejected():
    with pytest.raises(ValueError):
        oracle.eigensystem(np.array([[0, 1], [0, 0]]))


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_eigensystem_residual_and_orthonormality(seed):
    rng = np.random.default_rng(seed)
    H = random_pauli_hamiltonian(rng, 3)
    eig = oracle.eigensystem(H, require_nondegenerate=False)
    V = eig.states
    assert np.max(np.abs(V.conj().T @ V - np.eye(8))) < 1e-10
    assert np.max(np.linalg.norm(H @ V - V * eig.energies, axis=0)) < 1e-9


def test_evolve_identity_and_bloch_rotation():
    eig = oracle.eigensystem(Z)
    s = oracle.DenseState(PLUS)
    np.testing.assert_allclose(oracle.evolve(s, eig, 0.0).amplitudes, PLUS, atol=1e-15)
    out = oracle.evolve(s, eig, np.pi / 2).amplitudes
    assert abs(np.vdot(MINUS, out)) == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=10, deadline=None)
@given(seeds, st.floats(-20, 20))
def test_energy_conservation(seed, t):
    rng = np.random.default_rng(seed)
    H = random_hermitian(rng, 8)
    eig = oracle.eigensystem(H, require_nondegenerate=False)
    s = oracle.DenseState(random_state(rng, 8))
    st_ = oracle.evolve(s, eig, t)
    assert np.linalg.norm(st_.amplitudes) == pytest.approx(1.0, abs=1e-12)
    assert st_.expectation(H).real == pytest.approx(s.expectation(H).real, abs=1e-10)


def test_dense_state_norm_checked():
    with pytest.raises(ValueError):
        oracle.DenseState(np.array([1.0, 1.0]))


# ---------------------------------------------------------------------
# D(t) and q1
# ---------------------------------------------------------------------


def test_d_operator_at_zero():
    rng = np.random.default_rng(0)
    D = oracle.d_operator(random_hermitian(rng, 4), random_hermitian(rng, 4), 0.0)
    assert np.max(np.abs(D.matrix)) == 0.0


def test_d_operator_commuting_case():
    H = np.diag([0.3, -1.2, 2.0, 0.5])
    dH = np.diag([1.0, 2.0, -1.0, 0.0])
    for method in ("spectral", "simpson"):
        D = oracle.d_operator(H, dH, 1.7, method=method)
        np.testing.assert_allclose(D.matrix, 1.7 * dH, atol=1e-10)


def test_d_operator_simpson_vs_spectral_n3():
    rng = np.random.default_rng(11)
    H, dH = random_pauli_hamiltonian(rng, 3, 4), random_pauli_hamiltonian(rng, 3, 3)
    a = oracle.d_operator(H, dH, 1.5).matrix
    b = oracle.d_operator(H, dH, 1.5, n_steps=200, method="simpson").matrix
    assert np.max(np.abs(a - b)) < 1e-6


def test_d_operator_dual_methods_random():
    rng = np.random.default_rng(12)
    for _ in range(20):
        H, dH = random_hermitian(rng, 8), random_hermitian(rng, 8)
        t = rng.uniform(0.1, 3)
        a = oracle.d_operator(H, dH, t)
        b = oracle.d_operator(H, dH, t, method="simpson")
        assert np.max(np.abs(a.matrix - b.matrix)) < 1e-6
        assert np.max(np.abs(a.matrix - a.matrix.conj().T)) < 1e-12


def test_d_operator_per_site_sums():
    p = ChainParams(n_sites=4, h=0.5, lambda_x=0.3, lambda_y=0.1)
    eig = oracle.full_eigensystem(p)
    local = [build_pauli_hamiltonian([t], 4) for t in derivative_terms(4, "lambda_x")]
    D = oracle.d_operator(eig, build_dense_derivative(4, "lambda_x"), 0.9, local_terms=local)
    np.testing.assert_allclose(sum(D.per_site), D.matrix, atol=1e-12)


def test_d_operator_rejects_non_hermitian():
    with pytest.raises(ValueError):
        oracle.d_operator(np.eye(2), np.array([[0, 1], [0, 0]]), 1.0)
    with pytest.raises(ValueError):
        oracle.d_operator(np.eye(2), np.eye(2), 1.0, method="euler")


def test_q1_examples():
    assert oracle.q1_variance(PLUS, np.eye(2)) == pytest.approx(0.0, abs=1e-15)
    assert oracle.q1_variance(np.array([1, 0], dtype=complex), X) == pytest.approx(1.0)


def test_q1_formulas_agree():
    rng = np.random.default_rng(5)
    for _ in range(10):
        H, dH = random_hermitian(rng, 16), random_hermitian(rng, 16)
        eig = oracle.eigensystem(random_hermitian(rng, 16))
        D = oracle.d_operator(H, dH, rng.uniform(0, 2))
        assert oracle.q1_variance(eig.ground_state, D) == pytest.approx(oracle.q1_spectral_sum(eig, D), abs=1e-9)


def test_q1_zero_on_eigenvector_of_d():
    rng = np.random.default_rng(6)
    D = random_hermitian(rng, 8)
    w, v = np.linalg.eigh(D)
    assert oracle.q1_variance(v[:, 3], D) < 1e-12
    assert oracle.q1_variance(random_state(rng, 8), D) > 1e-3


# ---------------------------------------------------------------------
# Correlator representation of q1
# ---------------------------------------------------------------------


def test_q1_from_correlators_t0():
    assert oracle.q1_from_correlators(PLUS, Z, [X], 0.0) == 0.0


def test_q1_from_correlators_single_site():
    eig = oracle.eigensystem(Z)
    D = oracle.d_operator(eig, X, 1.2)
    val = oracle.q1_from_correlators(PLUS, eig, [X], 1.2, grid=512)
    assert val == pytest.approx(oracle.q1_variance(PLUS, D), rel=1e-10)


def eq3_pair(n, t, coord="lambda_x"):
    p = ChainParams(n_sites=n, lambda_x=0.3, lambda_y=0.1)
    psi = oracle.ground_state(p).amplitudes
    eigq = oracle.full_eigensystem(p.with_(h=0.5))
    dH = build_dense_derivative(n, coord)
    local = [build_pauli_hamiltonian([term], n) for term in derivative_terms(n, coord)]
    corr = oracle.q1_from_correlators(psi, eigq, local, t, dHq=dH)
    var = oracle.q1_variance(psi, oracle.d_operator(eigq, dH, t))
    return corr, var


def test_eq3_identity_n6():
    corr, var = eq3_pair(6, 1.3)
    assert corr == pytest.approx(var, rel=1e-5)


@pytest.mark.parametrize("n", [4, 8])
def test_eq3_identity_sizes(n):
    corr, var = eq3_pair(n, 0.8, "lambda_y")
    assert corr == pytest.approx(var, rel=1e-5)


def test_eq3_terms_must_sum():
    with pytest.raises(ValueError):
        oracle.q1_from_correlators(PLUS, Z, [X], 1.0, dHq=2 * X)


def test_eq3_full_double_sum_without_translation_invariance():
    rng = np.random.default_rng(9)
    H = random_pauli_hamiltonian(rng, 3, 5)
    terms = [random_pauli_hamiltonian(rng, 3, 1) for _ in range(3)]
    psi = random_state(rng, 8)
    val = oracle.q1_from_correlators(psi, H, terms, 0.7, translation_invariant=False)
    assert val == pytest.approx(oracle.q1_variance(psi, oracle.d_operator(H, sum(terms), 0.7)), rel=1e-6)


# ---------------------------------------------------------------------
# Correlators
# ---------------------------------------------------------------------


def test_connected_correlator_examples():
    rng = np.random.default_rng(1)
    psi = random_state(rng, 4)
    A = random_hermitian(rng, 4)
    assert abs(oracle.connected_correlator(psi, A, np.eye(4))) < 1e-14
    c = oracle.connected_correlator(psi, A, A)
    assert abs(c.imag) < 1e-14 and c.real >= 0
    prod = np.kron(random_state(rng, 2), random_state(rng, 2))
    assert abs(oracle.connected_correlator(prod, np.kron(A[:2, :2], np.eye(2)), np.kron(np.eye(2), X))) < 1e-12


def test_unequal_time_correlator_examples():
    rng = np.random.default_rng(2)
    H, A = random_hermitian(rng, 8), random_hermitian(rng, 8)
    psi = random_state(rng, 8)
    assert oracle.unequal_time_correlator(psi, A, H, 0, 0) == pytest.approx(np.vdot(psi, A @ A @ psi))
    assert oracle.unequal_time_correlator(psi, np.eye(8), H, 0.3, 1.9) == pytest.approx(1.0)
    for _ in range(5):
        t1, t2 = rng.uniform(-3, 3, size=2)
        c12 = oracle.unequal_time_correlator(psi, A, H, t1, t2)
        c21 = oracle.unequal_time_correlator(psi, A, H, t2, t1)
        assert abs(c12 - np.conj(c21)) < 1e-12


def test_heisenberg_convention():
    # A(t) = e^{-itH} A e^{itH}
    from scipy.linalg import expm

    rng = np.random.default_rng(3)
    H, A = random_hermitian(rng, 4), random_hermitian(rng, 4)
    psi = random_state(rng, 4)
    t1, t2 = 0.4, -1.1
    At = lambda t: expm(-1j * t * H) @ A @ expm(1j * t * H)  # noqa: E731
    expected = np.vdot(psi, At(t1) @ At(t2) @ psi)
    assert oracle.unequal_time_correlator(psi, A, H, t1, t2) == pytest.approx(expected, abs=1e-12)


# ---------------------------------------------------------------------
# Dephasing
# ---------------------------------------------------------------------


def test_dephase_commuting_rho():
    eig = oracle.eigensystem(np.diag([0.0, 1.0, 3.0]))
    rho = np.diag([0.5, 0.3, 0.2]).astype(complex)
    out, pur = oracle.dephase(rho, eig)
    np.testing.assert_allclose(out, rho, atol=1e-15)
    assert pur == pytest.approx(0.38)


def test_dephase_plus_state():
    out, pur = oracle.dephase(np.outer(PLUS, PLUS.conj()), oracle.eigensystem(Z))
    np.testing.assert_allclose(out, np.eye(2) / 2, atol=1e-15)
    assert pur == pytest.approx(0.5)
    assert oracle.dephased_purity(PLUS, oracle.eigensystem(Z)) == pytest.approx(0.5)


def test_dephase_invalid_rho():
    with pytest.raises(ValueError):
        oracle.dephase(np.diag([0.7, 0.7]), oracle.eigensystem(Z))
    with pytest.raises(ValueError):
        oracle.dephase(np.diag([1.5, -0.5]), oracle.eigensystem(Z))


def test_dephase_groups_degenerate_levels():
    eig = oracle.eigensystem(np.diag([0.0, 1.0, 1.0]))
    rho = np.outer(*(2 * [np.array([0, 1, 1]) / np.sqrt(2)]))
    out, pur = oracle.dephase(rho, eig)
    assert pur == pytest.approx(1.0)


def test_dephase_projection_and_contraction():
    rng = np.random.default_rng(8)
    for _ in range(10):
        eig = oracle.eigensystem(random_hermitian(rng, 6))
        G = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        rho = G @ G.conj().T
        rho /= np.trace(rho)
        once, p1 = oracle.dephase(rho, eig)
        twice, p2 = oracle.dephase(once, eig)
        assert np.max(np.abs(once - twice)) < 1e-12
        assert p1 <= np.sum(np.abs(rho) ** 2).real + 1e-12
        assert np.trace(once).real == pytest.approx(1.0)
        assert np.linalg.eigvalsh(once)[0] > -1e-12


def test_dephased_purity_matches_free_fermion():
    p = ChainParams(n_sites=8, lambda_x=0.3, lambda_y=0.1)
    eig0, idx = oracle.sector_eigensystem(p)
    eigq, _ = oracle.sector_eigensystem(p.with_(h=0.5), require_nondegenerate=False)
    dense = oracle.dephased_purity(eig0.ground_state, eigq)
    assert dense == pytest.approx(ff.dephased_purity(ff.quench_evolve(p, 0.5, 0.0)), abs=1e-8)


# ---------------------------------------------------------------------
# Non-resonance
# ---------------------------------------------------------------------


def test_nonresonance_examples():
    r = oracle.check_nonresonance(np.array([0.0, 1.0, 2.0]))
    assert r.spectrum_ok and not r.gaps_ok and r.offending_gaps
    r = oracle.check_nonresonance(np.array([0.0, 1.0, 3.0]))
    assert r.ok
    r = oracle.check_nonresonance(np.array([0.0, 0.0, 3.0]))
    assert not r.spectrum_ok and r.offending_levels == [(0, 1)]


def test_nonresonance_cluster_xy_n6():
    # quadratic-fermion spectra are sums of mode energies, so gap degeneracies are generic
    eig = oracle.full_eigensystem(ChainParams(n_sites=6, h=0.53, lambda_x=0.317, lambda_y=0.211))
    r = oracle.check_nonresonance(eig)
    assert not r.gaps_ok and len(r.offending_gaps) > 0


def test_nonresonance_random_local_hamiltonian():
    from qgtlab.model import random_local_terms

    H = build_pauli_hamiltonian(random_local_terms(4, np.random.default_rng(0)), 4)
    assert oracle.check_nonresonance(oracle.eigensystem(H)).ok
