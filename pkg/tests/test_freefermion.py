import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgtlab import freefermion as ff
from qgtlab import oracle
from qgtlab.model import ChainParams, QuadraticForm, build_dense_derivative, parity_indices

couplings = st.floats(-1.2, 1.2, allow_nan=False)
P8 = ChainParams(n_sites=8, h=0.0, lambda_x=0.3, lambda_y=0.1)


def manual_spectrum(theta) -> ff.BogoliubovSpectrum:
    theta = np.asarray(theta, dtype=float)
    n = 2 * len(theta)
    return ff.BogoliubovSpectrum(
        params=ChainParams(n_sites=n),
        momenta=np.pi * (2 * np.arange(len(theta)) + 1) / n,
        a=np.cos(2 * theta),
        b=np.sin(2 * theta),
        theta=theta,
        Lambda=np.ones_like(theta),
        constant_offset=0.0,
    )


# ---------------------------------------------------------------------
# Diagonalization
# ---------------------------------------------------------------------


@pytest.mark.parametrize("a, b, lam, theta", [(1.0, 0.0, 1.0, 0.0), (0.0, 1.0, 1.0, np.pi / 4)])
def test_diagonalize_single_mode(a, b, lam, theta):
    qf = QuadraticForm(ChainParams(n_sites=4), np.array([np.pi / 4]), np.array([a]), np.array([b]), 0.0)
    spec = ff.diagonalize(qf)
    assert spec.Lambda[0] == pytest.approx(lam)
    assert spec.theta[0] == pytest.approx(theta)


def test_pair_ground_state_convention():
    # the ground state of each 2x2 block is (cos theta, i sin theta) with energy -2 Lambda
    qf = ff.jordan_wigner_quadratic(ChainParams(n_sites=10, h=0.4, lambda_x=0.3, lambda_y=-0.6))
    spec = ff.diagonalize(qf)
    Hk = np.zeros((len(qf.momenta), 2, 2), dtype=complex)
    Hk[:, 0, 0], Hk[:, 1, 1] = -2 * qf.a, 2 * qf.a
    Hk[:, 0, 1], Hk[:, 1, 0] = 2j * qf.b, -2j * qf.b
    g = spec.ground_amplitudes()
    e = spec.excited_amplitudes()
    np.testing.assert_allclose(np.einsum("kij,kj->ki", Hk, g), -2 * spec.Lambda[:, None] * g, atol=1e-13)
    np.testing.assert_allclose(np.einsum("kij,kj->ki", Hk, e), 2 * spec.Lambda[:, None] * e, atol=1e-13)
    np.testing.assert_allclose(np.sum(np.conj(g) * e, axis=1), 0, atol=1e-15)


def test_ground_energy_n10():
    p = ChainParams(n_sites=10, h=0.7, lambda_x=0.2, lambda_y=0.1)
    eig, _ = oracle.sector_eigensystem(p)
    assert ff.ground_energy(p) == pytest.approx(eig.energies[0], abs=1e-9)


def test_constant_offset_vanishes():
    qf = ff.jordan_wigner_quadratic(ChainParams(n_sites=12, h=0.9, lambda_x=-0.4, lambda_y=1.1))
    assert abs(qf.constant_offset) < 1e-12


def test_enumeration_limit():
    with pytest.raises(ValueError):
        ff.even_sector_energies(ff.spectrum(ChainParams(n_sites=22)))


# ---------------------------------------------------------------------
# Quench
# ---------------------------------------------------------------------


def test_null_quench_is_stationary():
    s = ff.quench_evolve(P8, 0.0, 0.0)
    assert np.all(s.chi == 0)
    for t in (0.5, 3.0):
        assert ff.fidelity(s, s.at(t)) == pytest.approx(1.0, abs=1e-14)


def test_t0_overlap_with_initial():
    s = ff.quench_evolve(P8, 0.5, 0.0)
    spec = ff.spectrum(P8)
    g = ff.make_quenched_state(spec, spec, 0.0)
    assert abs(ff.overlap(g, s)) == pytest.approx(1.0, abs=1e-14)


def test_quench_matches_dense_state():
    s = ff.quench_evolve(P8, 0.5, 1.3)
    v = ff.dense_vector(s.amplitudes(), s.initial.momenta, 8)
    d = oracle.quenched_state(P8, 0.5, 1.3).amplitudes
    assert abs(np.vdot(v, d)) == pytest.approx(1.0, abs=1e-8)


def test_quench_parameter_mismatch():
    with pytest.raises(ValueError):
        ff.make_quenched_state(ff.spectrum(P8), ff.spectrum(P8.with_(n_sites=10)), 0.0)
    with pytest.raises(ValueError):
        ff.make_quenched_state(ff.spectrum(P8), ff.spectrum(P8), -1.0)


def test_vectorized_amplitudes():
    ts = np.array([0.0, 0.7, 2.0])
    s = ff.quench_evolve(P8, 0.5, 0.0)
    many = ff.pair_amplitudes(s.initial, s.quench, ts)
    for k, t in enumerate(ts):
        np.testing.assert_allclose(many[k], s.at(t).amplitudes(), atol=1e-15)


# ---------------------------------------------------------------------
# Overlaps and fidelity
# ---------------------------------------------------------------------


def test_self_overlap():
    s = ff.quench_evolve(P8, 0.5, 1.1)
    assert ff.overlap(s, s) == pytest.approx(1.0 + 0.0j, abs=1e-14)


def test_orthogonal_bogoliubov_vacua():
    th = np.array([0.1, 0.4, -0.2])
    a, b = manual_spectrum(th), manual_spectrum(th + np.array([0.0, np.pi / 2, 0.0]))
    s1 = ff.make_quenched_state(a, a, 0.0)
    s2 = ff.make_quenched_state(b, b, 0.0)
    assert abs(ff.overlap(s1, s2)) < 1e-15
    assert ff.infidelity(s1, s2) == pytest.approx(1.0)


def test_nearby_fidelity_matches_dense():
    rng = np.random.default_rng(4)
    for _ in range(4):
        lx, ly = rng.uniform(-0.8, 0.8, size=2)
        d = rng.normal(scale=0.05, size=2)
        p1 = ChainParams(n_sites=8, lambda_x=lx, lambda_y=ly)
        p2 = p1.with_(lambda_x=lx + d[0], lambda_y=ly + d[1])
        t = rng.uniform(0, 2)
        f_ff = ff.fidelity(ff.quench_evolve(p1, 0.5, t), ff.quench_evolve(p2, 0.5, t))
        f_dense = abs(np.vdot(oracle.quenched_state(p1, 0.5, t).amplitudes, oracle.quenched_state(p2, 0.5, t).amplitudes)) ** 2
        assert f_ff == pytest.approx(f_dense, abs=1e-8)


def test_product_structure():
    s1 = ff.quench_evolve(P8, 0.5, 0.9)
    s2 = ff.quench_evolve(P8.with_(lambda_x=0.5), 0.5, 0.9)
    per = 1 - ff.pair_infidelities(s1.amplitudes(), s2.amplitudes())
    assert np.all((per >= 0) & (per <= 1 + 1e-15))
    assert np.log(ff.fidelity(s1, s2)) == pytest.approx(np.sum(np.log(per)), abs=1e-12)


def test_infidelity_precision_for_close_states():
    # 1 - F ~ 1e-14 must not be lost to cancellation
    s1 = ff.quench_evolve(ChainParams(n_sites=64, lambda_x=0.3, lambda_y=0.1), 0.5, 1.0)
    s2 = ff.quench_evolve(ChainParams(n_sites=64, lambda_x=0.3 + 1e-8, lambda_y=0.1), 0.5, 1.0)
    inf = ff.infidelity(s1, s2)
    assert 0 < inf < 1e-12


@settings(max_examples=15, deadline=None)
@given(couplings, couplings, st.floats(-1.5, 1.5), st.floats(0, 10))
def test_unitarity_and_energy_conservation(lx, ly, hq, t):
    p = ChainParams(n_sites=12, lambda_x=lx, lambda_y=ly)
    s = ff.quench_evolve(p, hq, t)
    assert abs(ff.overlap(s, s)) == pytest.approx(1.0, abs=1e-12)
    assert ff.energy_expectation(s) == pytest.approx(ff.energy_expectation(s.at(0.0)), abs=1e-10)


# ---------------------------------------------------------------------
# Dephased purity
# ---------------------------------------------------------------------


def test_purity_null_quench():
    assert ff.dephased_purity(ff.quench_evolve(P8, 0.0, 1.0)) == 1.0


def test_purity_single_mode_quarter_pi():
    th = np.zeros(4)
    s = ff.make_quenched_state(manual_spectrum(th), manual_spectrum(th + np.array([np.pi / 4, 0, 0, 0])), 0.0)
    assert ff.dephased_purity(s) == pytest.approx(0.5)


def test_purity_matches_dense():
    s = ff.quench_evolve(P8, 0.5, 0.0)
    eig0, _ = oracle.sector_eigensystem(P8)
    eigq, _ = oracle.sector_eigensystem(P8.with_(h=0.5), require_nondegenerate=False)
    assert ff.dephased_purity(s) == pytest.approx(oracle.dephased_purity(eig0.ground_state, eigq), abs=1e-8)


@settings(max_examples=20, deadline=None)
@given(couplings, couplings, st.floats(-2, 2))
def test_purity_bounds_and_time_independence(lx, ly, hq):
    p = ChainParams(n_sites=16, lambda_x=lx, lambda_y=ly)
    s = ff.quench_evolve(p, hq, 0.0)
    vals = [ff.dephased_purity(s.at(t)) for t in (0.0, 1.0, 10.0)]
    assert vals[0] == vals[1] == vals[2]
    assert 2.0**-16 <= vals[0] <= 1.0
    assert ff.log_dephased_purity(s) == pytest.approx(np.log(vals[0]), abs=1e-12)


# ---------------------------------------------------------------------
# Gaps
# ---------------------------------------------------------------------


def test_gap_cluster_point():
    r = ff.min_gap(ChainParams(n_sites=12))
    assert r.finite == pytest.approx(2.0) and r.continuum == pytest.approx(2.0)


def test_finite_gap_above_continuum():
    rng = np.random.default_rng(7)
    for _ in range(20):
        h, lx, ly = rng.uniform(-1.5, 1.5, size=3)
        for n in (8, 32, 128):
            r = ff.min_gap(ChainParams(n_sites=n, h=h, lambda_x=lx, lambda_y=ly))
            assert r.finite >= r.continuum - 1e-9


def test_gap_closes_at_ly_one():
    ly = np.linspace(0, 2, 41)
    gaps = np.array([ff.continuum_gap(ChainParams(n_sites=8, lambda_y=v)) for v in ly])
    assert ly[np.argmin(gaps)] == pytest.approx(1.0)
    assert gaps.min() < 1e-4


def test_dense_gap_cross_check():
    # finite-size ED gap (lowest excitation in the full spectrum of the even sector)
    p = ChainParams(n_sites=8, h=0.3, lambda_x=0.2, lambda_y=0.4)
    eig, _ = oracle.sector_eigensystem(p)
    e_ff = ff.even_sector_energies(ff.spectrum(p))
    assert eig.gap == pytest.approx(e_ff[1] - e_ff[0], abs=1e-10)


# ---------------------------------------------------------------------
# Closed-form geometry ingredients
# ---------------------------------------------------------------------


def test_quench_q1_matches_dense_variance():
    t = 1.3
    eig0, idx = oracle.sector_eigensystem(P8)
    eigq, _ = oracle.sector_eigensystem(P8.with_(h=0.5), require_nondegenerate=False)
    for coord, direction in (("lambda_x", (1, 0)), ("lambda_y", (0, 1))):
        dH = build_dense_derivative(8, coord)[np.ix_(idx, idx)]
        dense = oracle.q1_variance(eig0.ground_state, oracle.d_operator(eigq, dH, t))
        assert float(ff.quench_q1(P8, 0.5, t, direction)) == pytest.approx(dense, rel=1e-10)


def test_ground_qgt_is_real_psd():
    q = ff.ground_qgt(ChainParams(n_sites=32, lambda_x=0.3, lambda_y=0.1))
    assert np.allclose(q, q.T) and np.all(np.linalg.eigvalsh(q) >= -1e-14)


# ---------------------------------------------------------------------
# Real-space correlations
# ---------------------------------------------------------------------


def test_majorana_correlations_match_dense():
    from qgtlab.model import PauliTerm, build_pauli_hamiltonian

    s = ff.quench_evolve(P8, 0.5, 0.8)
    psi = oracle.quenched_state(P8, 0.5, 0.8).amplitudes
    M = ff.majorana_correlations(s.amplitudes(), s.initial.momenta, 8)
    n = 8
    for name, factors in (
        ("z", [(3, "z")]),
        ("xx", [(3, "x"), (4, "x")]),
        ("yy", [(3, "y"), (4, "y")]),
        ("xzx", [(2, "x"), (3, "z"), (4, "x")]),
    ):
        A = build_pauli_hamiltonian([PauliTerm(1.0, factors)], n)
        assert ff.bilinear_expectation(M, ff.bilinear(name, 3, n)) == pytest.approx(np.vdot(psi, A @ psi), abs=1e-12)


def test_majorana_matrix_structure():
    s = ff.quench_evolve(P8, 0.5, 0.8)
    M = ff.majorana_correlations(s.amplitudes(), s.initial.momenta, 8)
    np.testing.assert_allclose(np.diag(M), 1.0, atol=1e-14)
    # <g_m g_n> + <g_n g_m> = 2 delta_mn
    np.testing.assert_allclose(M + M.T, 2 * np.eye(16), atol=1e-14)


def test_bilinear_support_crossing_boundary():
    with pytest.raises(ValueError):
        ff.bilinear("xzx", 0, 8)


def test_profile_vectorized_matches_wick():
    s = ff.quench_evolve(ChainParams(n_sites=16, lambda_x=0.3, lambda_y=0.1), 0.5, 1.1)
    M = ff.majorana_correlations(s.amplitudes(), s.initial.momenta, 16)
    for name in ff.BILINEAR_TEMPLATES:
        vec = ff.bilinear_profile(s.amplitudes(), s.initial.momenta, 16, name)
        op0 = ff.bilinear(name, 1, 16)
        loop = [ff.bilinear_connected(M, op0, ff.bilinear(name, 1 + d, 16)) for d in range(9)]
        np.testing.assert_allclose(vec, loop, atol=1e-14)


def test_dense_vector_parity_and_norm():
    s = ff.quench_evolve(ChainParams(n_sites=6, lambda_x=0.2, lambda_y=-0.3), 0.7, 0.4)
    v = ff.dense_vector(s.amplitudes(), s.initial.momenta, 6)
    odd = parity_indices(6, "odd")
    assert np.linalg.norm(v) == pytest.approx(1.0)
    assert np.max(np.abs(v[odd])) < 1e-15
