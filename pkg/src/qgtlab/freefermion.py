"""
Exact free-fermion engine for the Cluster-XY chain (even parity sector).

Every state handled here is a product over momentum pairs (k, -k), k > 0,
of a two-component vector on (|0>, |k,-k> = c_k^dag c_{-k}^dag |0>).
Ground state of a pair:  cos(theta_k) |0> + i sin(theta_k) |k,-k>,
with theta_k = atan2(b_k, a_k) / 2 and pair energies -/+ 2 Lambda_k,
Lambda_k = sqrt(a_k^2 + b_k^2). A single quasiparticle costs 2 Lambda_k.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import (
    DENSE_LIMIT,
    ChainParams,
    PauliTerm,
    QuadraticForm,
    coupling_derivative_ab,
    jordan_wigner_quadratic,
    majorana_couplings,
    pauli_string_sparse,
)

CONTINUUM_SAMPLES = 100_000


@dataclass(frozen=True)
class BogoliubovSpectrum:
    params: ChainParams
    momenta: np.ndarray
    a: np.ndarray
    b: np.ndarray
    theta: np.ndarray
    Lambda: np.ndarray
    constant_offset: float

    @property
    def n_sites(self) -> int:
        return self.params.n_sites

    @property
    def ground_energy(self) -> float:
        return self.constant_offset - 2.0 * float(self.Lambda.sum())

    def ground_amplitudes(self) -> np.ndarray:
        """Pair amplitudes of the ground state, shape (n_pairs, 2)."""
        return np.stack([np.cos(self.theta), 1j * np.sin(self.theta)], axis=1)

    def excited_amplitudes(self) -> np.ndarray:
        """The doubly-excited pair state i sin|0> + cos|k,-k>, orthogonal to the ground one."""
        return np.stack([1j * np.sin(self.theta), np.cos(self.theta)], axis=1)


def diagonalize(qf: QuadraticForm) -> BogoliubovSpectrum:
    return BogoliubovSpectrum(
        params=qf.params,
        momenta=qf.momenta,
        a=qf.a,
        b=qf.b,
        theta=0.5 * np.arctan2(qf.b, qf.a),
        Lambda=np.hypot(qf.a, qf.b),
        constant_offset=qf.constant_offset,
    )


def spectrum(params: ChainParams) -> BogoliubovSpectrum:
    return diagonalize(jordan_wigner_quadratic(params))


def ground_energy(params: ChainParams) -> float:
    return spectrum(params).ground_energy


def even_sector_energies(spec: BogoliubovSpectrum) -> np.ndarray:
    """All 2^(N-1) many-body energies of the even-parity sector, ascending.

    Each pair contributes -2L, +2L (even states |0>-like, |k,-k>-like) or
    0, 0 (singly occupied |k>, |-k>); the total parity is even when an even
    number of pairs is singly occupied.
    """
    n_pairs = len(spec.momenta)
    if n_pairs > 10:
        raise ValueError("explicit enumeration is limited to N <= 20")
    levels = np.stack([-2 * spec.Lambda, 2 * spec.Lambda, 0 * spec.Lambda, 0 * spec.Lambda], axis=1)
    energies = []
    for choice in itertools.product(range(4), repeat=n_pairs):
        if sum(c >= 2 for c in choice) % 2:
            continue
        energies.append(sum(levels[i, c] for i, c in enumerate(choice)))
    return np.sort(np.asarray(energies) + spec.constant_offset)


# ---------------------------------------------------------------------
# Quench
# ---------------------------------------------------------------------


@dataclass(frozen=True)
class QuenchedFFState:
    """e^{-i H^q t} |GS(H)> for quadratic H, H^q sharing the momentum sector."""

    initial: BogoliubovSpectrum
    quench: BogoliubovSpectrum
    chi: np.ndarray
    t: float

    @property
    def n_sites(self) -> int:
        return self.initial.n_sites

    def amplitudes(self) -> np.ndarray:
        return pair_amplitudes(self.initial, self.quench, self.t)

    def global_phase(self) -> complex:
        return np.exp(-1j * self.quench.constant_offset * self.t)

    def at(self, t: float) -> "QuenchedFFState":
        return QuenchedFFState(self.initial, self.quench, self.chi, float(t))


def _check_compatible(p: ChainParams, q: ChainParams) -> None:
    if p.n_sites != q.n_sites or p.parity_sector != q.parity_sector:
        raise ValueError("initial and quench Hamiltonians live on different spaces")


def make_quenched_state(initial: BogoliubovSpectrum, quench: BogoliubovSpectrum, t: float) -> QuenchedFFState:
    _check_compatible(initial.params, quench.params)
    if t < 0:
        raise ValueError("t must be nonnegative")
    return QuenchedFFState(initial, quench, quench.theta - initial.theta, float(t))


def quench_evolve(initial: ChainParams, hq: float, t: float) -> QuenchedFFState:
    """Orthogonal quench: ground state of ``initial`` evolved with the field set to hq.

    The couplings (lambda_x, lambda_y) are kept; only the transverse field changes.
    """
    return make_quenched_state(spectrum(initial), spectrum(initial.with_(h=hq)), t)


def pair_amplitudes(initial: BogoliubovSpectrum, quench: BogoliubovSpectrum, t) -> np.ndarray:
    """Pair amplitudes at time(s) t; shape (n_pairs, 2) or (n_t, n_pairs, 2).

    The initial pair state decomposes as cos(chi)|g^q> - i sin(chi)|e^q> in the
    quench eigenbasis, with energies -2L^q and +2L^q (offset dropped).
    """
    chi = quench.theta - initial.theta
    t_arr = np.asarray(t, dtype=float)
    phase = np.exp(2j * np.multiply.outer(t_arr, quench.Lambda))
    cg = np.cos(chi) * phase
    ce = -1j * np.sin(chi) * np.conj(phase)
    g = quench.ground_amplitudes()
    e = quench.excited_amplitudes()
    return cg[..., None] * g + ce[..., None] * e


def _check_states(s1: QuenchedFFState, s2: QuenchedFFState) -> None:
    _check_compatible(s1.initial.params, s2.initial.params)


def overlap(s1: QuenchedFFState, s2: QuenchedFFState) -> complex:
    """<s1|s2> as a product of pair overlaps."""
    _check_states(s1, s2)
    per_pair = np.sum(np.conj(s1.amplitudes()) * s2.amplitudes(), axis=-1)
    return complex(np.conj(s1.global_phase()) * s2.global_phase() * np.prod(per_pair))


def pair_infidelities(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """1 - |<u_k|v_k>|^2 per pair, as |det[u_k, v_k]|^2 (no cancellation)."""
    return np.abs(u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]) ** 2


def infidelity_from_amplitudes(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """1 - |<u|v>|^2 for product states given by pair amplitudes (last two axes)."""
    with np.errstate(divide="ignore"):  # an orthogonal pair gives log 0 = -inf, i.e. F = 0
        logf = np.sum(np.log1p(-np.minimum(pair_infidelities(u, v), 1.0)), axis=-1)
    return -np.expm1(logf)


def infidelity(s1: QuenchedFFState, s2: QuenchedFFState) -> float:
    _check_states(s1, s2)
    return float(infidelity_from_amplitudes(s1.amplitudes(), s2.amplitudes()))


def fidelity(s1: QuenchedFFState, s2: QuenchedFFState) -> float:
    """Squared fidelity |<s1|s2>|^2."""
    return 1.0 - infidelity(s1, s2)


def dephased_purity(state: QuenchedFFState) -> float:
    """Purity of the state dephased in the quench eigenbasis: prod_k (1 - sin^2(2 chi_k)/2)."""
    return float(np.prod(1.0 - 0.5 * np.sin(2.0 * state.chi) ** 2))


def log_dephased_purity(state: QuenchedFFState) -> float:
    return float(np.sum(np.log1p(-0.5 * np.sin(2.0 * state.chi) ** 2)))


def energy_expectation(state: QuenchedFFState, spec: BogoliubovSpectrum | None = None) -> float:
    """<state| H |state> for a quadratic H in the same sector (default: the quench Hamiltonian)."""
    spec = spec or state.quench
    u = state.amplitudes()
    h = np.zeros((len(spec.momenta), 2, 2), dtype=complex)
    h[:, 0, 0] = -2 * spec.a
    h[:, 1, 1] = 2 * spec.a
    h[:, 0, 1] = 2j * spec.b
    h[:, 1, 0] = -2j * spec.b
    e = np.einsum("ki,kij,kj->", np.conj(u), h, u)
    return float(e.real) + spec.constant_offset


def _creation_operators(n_sites: int) -> list:
    """Sparse c_j^dag = (a_j - i b_j) / 2 with a_j = (prod_{l<j} Z_l) X_j, b_j = (prod_{l<j} Z_l) Y_j."""
    out = []
    for j in range(n_sites):
        string = [(l, "z") for l in range(j)]
        a = pauli_string_sparse(PauliTerm(1.0, string + [(j, "x")]), n_sites)
        b = pauli_string_sparse(PauliTerm(1.0, string + [(j, "y")]), n_sites)
        out.append(0.5 * (a - 1j * b))
    return out


def dense_vector(amplitudes: np.ndarray, momenta: np.ndarray, n_sites: int) -> np.ndarray:
    """Spin-basis vector of prod_k (u_k + v_k c_k^dag c_{-k}^dag)|vac>.

    c_k^dag = N^{-1/2} sum_j e^{ikj} c_j^dag; |vac> is all spins up.
    """
    if n_sites > DENSE_LIMIT:
        raise ValueError(f"N={n_sites} exceeds the dense limit {DENSE_LIMIT}")
    cdag = _creation_operators(n_sites)
    psi = np.zeros(1 << n_sites, dtype=complex)
    psi[0] = 1.0
    j = np.arange(n_sites)
    for k, (u, v) in zip(momenta, amplitudes):
        def create(q, vec):
            w = np.exp(1j * q * j) / np.sqrt(n_sites)
            return sum(w[i] * (cdag[i] @ vec) for i in range(n_sites))

        psi = u * psi + v * create(k, create(-k, psi))
    return psi


# ---------------------------------------------------------------------
# Gaps and dispersion
# ---------------------------------------------------------------------


@dataclass(frozen=True)
class GapReport:
    finite: float
    continuum: float
    k_continuum: float


def dispersion(params: ChainParams, k) -> np.ndarray:
    """Lambda(k) on arbitrary momenta (single-quasiparticle energy is 2 Lambda)."""
    J = majorana_couplings(params)
    k = np.asarray(k, dtype=float)
    a = -sum(c * np.cos(k * r) for r, c in J.items())
    b = sum(c * np.sin(k * r) for r, c in J.items())
    return np.hypot(a, b)


def min_gap(params: ChainParams, samples: int = CONTINUUM_SAMPLES) -> GapReport:
    """Lowest quasiparticle energy 2 min_k Lambda_k on the allowed and on continuum momenta."""
    finite = 2.0 * float(spectrum(params).Lambda.min())
    k = np.linspace(0.0, np.pi, samples)
    lam = dispersion(params, k)
    i = int(np.argmin(lam))
    return GapReport(finite=finite, continuum=2.0 * float(lam[i]), k_continuum=float(k[i]))


def continuum_gap(params: ChainParams, samples: int = CONTINUUM_SAMPLES) -> float:
    k = np.linspace(0.0, np.pi, samples)
    return 2.0 * float(dispersion(params, k).min())


def max_group_velocity(params: ChainParams, samples: int = 20_001) -> float:
    """max_k |d(2 Lambda_k)/dk| of the single-quasiparticle dispersion."""
    J = majorana_couplings(params)
    k = np.linspace(0.0, np.pi, samples)
    a = -sum(c * np.cos(k * r) for r, c in J.items())
    b = sum(c * np.sin(k * r) for r, c in J.items())
    da = sum(c * r * np.sin(k * r) for r, c in J.items())
    db = sum(c * r * np.cos(k * r) for r, c in J.items())
    lam = np.hypot(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(lam > 1e-14, (a * da + b * db) / lam, 0.0)
    return 2.0 * float(np.abs(v).max())


# ---------------------------------------------------------------------
# Closed-form geometry ingredients
# ---------------------------------------------------------------------


def _dtheta(spec: BogoliubovSpectrum, coordinate: str) -> np.ndarray:
    da, db = coupling_derivative_ab(spec.momenta, coordinate)
    return 0.5 * (spec.a * db - spec.b * da) / (spec.a**2 + spec.b**2)


def ground_qgt(params: ChainParams, coords=("lambda_x", "lambda_y")) -> np.ndarray:
    """QGT of the ground-state manifold: q_ij = sum_k d_i theta_k d_j theta_k (real)."""
    spec = spectrum(params)
    d = np.stack([_dtheta(spec, c) for c in coords])
    return d @ d.T


def _pair_d_operator(quench: BogoliubovSpectrum, coordinate: str, t) -> np.ndarray:
    """D_k(t) = int_0^t e^{i H_k s} dH_k e^{-i H_k s} ds on each pair, shape (..., n_pairs, 2, 2)."""
    da, db = coupling_derivative_ab(quench.momenta, coordinate)
    dh = np.zeros((len(quench.momenta), 2, 2), dtype=complex)
    dh[:, 0, 0] = -2 * da
    dh[:, 1, 1] = 2 * da
    dh[:, 0, 1] = 2j * db
    dh[:, 1, 0] = -2j * db
    V = np.stack([quench.ground_amplitudes(), quench.excited_amplitudes()], axis=2)  # columns
    E = np.stack([-2 * quench.Lambda, 2 * quench.Lambda], axis=1)
    dq = np.einsum("kim,kij,kjn->kmn", np.conj(V), dh, V)
    w = E[:, :, None] - E[:, None, :]
    t_arr = np.asarray(t, dtype=float)[..., None, None, None]
    small = np.abs(w) < 1e-12
    w_safe = np.where(small, 1.0, w)
    f = np.where(small, t_arr, (np.exp(1j * w_safe * t_arr) - 1.0) / (1j * w_safe))
    return np.einsum("kim,...kmn,kjn->...kij", V, dq * f, np.conj(V))


def quench_q1(
    initial: ChainParams,
    hq: float,
    t,
    direction=(1.0, 0.0),
    coords=("lambda_x", "lambda_y"),
) -> np.ndarray:
    """Variance of D_v(t) = sum_c v_c D_c(t) in the initial ground state (extensive).

    ``direction`` may be complex; the variance is <D^dag D> - |<D>|^2.
    """
    spec0 = spectrum(initial)
    specq = spectrum(initial.with_(h=hq))
    D = sum(complex(v) * _pair_d_operator(specq, c, t) for v, c in zip(direction, coords))
    psi = spec0.ground_amplitudes()
    Dpsi = np.einsum("...kij,kj->...ki", D, psi)
    mean = np.einsum("ki,...ki->...k", np.conj(psi), Dpsi)
    second = np.sum(np.abs(Dpsi) ** 2, axis=-1)
    return np.sum(second - np.abs(mean) ** 2, axis=-1)


# ---------------------------------------------------------------------
# Real-space Majorana correlations
# ---------------------------------------------------------------------


def majorana_by_separation(amplitudes: np.ndarray, momenta: np.ndarray, n_sites: int) -> dict:
    """<gamma^u_i gamma^w_{i+r}> for r = 0 .. N-1, keyed by (u, w) in {a, b}^2.

    a_j = c_j + c_j^dag and b_j = i (c_j^dag - c_j); for r < 0 the
    antiperiodic ring gives f(r) = -f(r + N).
    """
    u, v = amplitudes[..., 0], amplitudes[..., 1]
    nk = np.abs(v) ** 2
    Fk = -np.conj(u) * v  # <c_k c_{-k}> for k > 0
    r = np.arange(n_sites)
    phase = np.outer(r, momenta)
    Gn = (2.0 / n_sites) * nk @ np.cos(phase).T  # <c_i^dag c_{i+r}>
    Fp = (-2j / n_sites) * Fk @ np.sin(phase).T  # <c_i c_{i+r}>
    delta = (r == 0).astype(float)
    return {
        ("a", "a"): delta + 2j * Fp.imag,
        ("b", "b"): delta - 2j * Fp.imag,
        ("a", "b"): 1j * (delta - 2 * Gn - 2 * Fp.real),
        ("b", "a"): -1j * (delta - 2 * Gn + 2 * Fp.real),
    }


def _element(table: dict, kind_i: str, kind_j: str, sep, n_sites: int):
    sep = np.asarray(sep)
    f = table[(kind_i, kind_j)]
    return np.where(sep < 0, -1.0, 1.0) * f[..., sep % n_sites]


def majorana_correlations(amplitudes: np.ndarray, momenta: np.ndarray, n_sites: int) -> np.ndarray:
    """M[m, n] = <gamma_m gamma_n> with gamma_{2j} = a_j, gamma_{2j+1} = b_j."""
    table = majorana_by_separation(amplitudes, momenta, n_sites)
    i, j = np.meshgrid(np.arange(n_sites), np.arange(n_sites), indexing="ij")
    M = np.empty((2 * n_sites, 2 * n_sites), dtype=complex)
    for ku, su in (("a", 0), ("b", 1)):
        for kw, sw in (("a", 0), ("b", 1)):
            M[su::2, sw::2] = _element(table, ku, kw, j - i, n_sites)
    return M


# Local operators written as coefficient * gamma_p gamma_q, sites relative to the origin.
# Z_j = i b_j a_j; X_j X_{j+1} = -i b_j a_{j+1}; Y_j Y_{j+1} = -i b_{j+1} a_j;
# X_{j-1} Z_j X_{j+1} = -i b_{j-1} a_{j+1}.
BILINEAR_TEMPLATES = {
    "z": (1j, (0, "b"), (0, "a")),
    "xx": (-1j, (0, "b"), (1, "a")),
    "yy": (-1j, (1, "b"), (0, "a")),
    "xzx": (-1j, (-1, "b"), (1, "a")),
}


def _majorana_index(site: int, kind: str, n_sites: int) -> int:
    if not 0 <= site < n_sites:
        raise ValueError("operator support crosses the ring boundary; choose another origin")
    return 2 * site + (1 if kind == "b" else 0)


def bilinear(template: str, site: int, n_sites: int) -> tuple[complex, int, int]:
    coef, (dp, kp), (dq, kq) = BILINEAR_TEMPLATES[template]
    return coef, _majorana_index(site + dp, kp, n_sites), _majorana_index(site + dq, kq, n_sites)


def bilinear_expectation(M: np.ndarray, op) -> complex:
    c, p, q = op
    return c * M[p, q]


def bilinear_connected(M: np.ndarray, op1, op2) -> complex:
    """<O1 O2> - <O1><O2> for two Majorana bilinears by Wick's theorem."""
    c1, p, q = op1
    c2, r, s = op2
    return c1 * c2 * (-M[p, r] * M[q, s] + M[p, s] * M[q, r])


def bilinear_profile(amplitudes: np.ndarray, momenta: np.ndarray, n_sites: int, template: str) -> np.ndarray:
    """<O_0 O_d>_C for d = 0 .. N/2 of a bilinear template, vectorized over d."""
    coef, (dp, kp), (dq, kq) = BILINEAR_TEMPLATES[template]
    table = majorana_by_separation(amplitudes, momenta, n_sites)
    d = np.arange(n_sites // 2 + 1)

    def m(k1, o1, k2, o2):
        # <gamma^{k1}_{o1} gamma^{k2}_{d + o2}>, separations d + o2 - o1
        return _element(table, k1, k2, d + o2 - o1, n_sites)

    # Wick: <p q p' q'> - <p q><p' q'> = -<p p'><q q'> + <p q'><q p'>
    return coef * coef * (-m(kp, dp, kp, dp) * m(kq, dq, kq, dq) + m(kp, dp, kq, dq) * m(kq, dq, kp, dp))
