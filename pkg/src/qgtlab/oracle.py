"""
Dense exact-diagonalization reference engine (N <= dense limit).

Everything here works on explicit 2^N vectors and matrices and serves as
the brute-force ground truth for the free-fermion engine and the
geometric estimators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .model import (
    ChainParams,
    build_dense_derivative,
    build_dense_hamiltonian,
    parity_indices,
)

DEGENERACY_TOL = 1e-8


class DegenerateGroundStateError(ValueError):
    """The lowest eigenvalue is degenerate within tolerance."""


@dataclass(frozen=True)
class EigenSystem:
    energies: np.ndarray
    states: np.ndarray  # columns are eigenvectors
    ground_degeneracy: int = 1

    @property
    def dimension(self) -> int:
        return len(self.energies)

    @property
    def ground_state(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def gap(self) -> float:
        return float(self.energies[1] - self.energies[0])

    def to_eigenbasis(self, M: np.ndarray) -> np.ndarray:
        return self.states.conj().T @ M @ self.states

    def from_eigenbasis(self, M: np.ndarray) -> np.ndarray:
        return self.states @ M @ self.states.conj().T


@dataclass(frozen=True)
class DenseState:
    amplitudes: np.ndarray

    def __post_init__(self):
        norm = np.linalg.norm(self.amplitudes)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state is not normalized (norm = {norm!r})")

    @property
    def dimension(self) -> int:
        return len(self.amplitudes)

    def expectation(self, A: np.ndarray) -> complex:
        return complex(np.vdot(self.amplitudes, A @ self.amplitudes))

    def density_matrix(self) -> np.ndarray:
        return np.outer(self.amplitudes, np.conj(self.amplitudes))


@dataclass(frozen=True)
class DOperator:
    matrix: np.ndarray
    t: float
    per_site: list | None = field(default=None, repr=False)


def _as_vector(state) -> np.ndarray:
    return state.amplitudes if isinstance(state, DenseState) else np.asarray(state)


def _check_hermitian(M: np.ndarray, name: str, tol: float = 1e-10) -> None:
    if np.max(np.abs(M - M.conj().T), initial=0.0) > tol * max(1.0, np.max(np.abs(M), initial=0.0)):
        raise ValueError(f"{name} is not Hermitian")


def eigensystem(H: np.ndarray, *, require_nondegenerate: bool = True, tol: float = DEGENERACY_TOL) -> EigenSystem:
    """Full eigendecomposition with ascending energies.

    Raises DegenerateGroundStateError when the ground level is degenerate
    and ``require_nondegenerate`` is set.
    """
    H = np.asarray(H)
    _check_hermitian(H, "H")
    E, V = np.linalg.eigh(H)
    deg = int(np.sum(E - E[0] < tol))
    if require_nondegenerate and deg > 1:
        raise DegenerateGroundStateError(f"ground level is {deg}-fold degenerate (gap < {tol})")
    return EigenSystem(energies=E, states=V, ground_degeneracy=deg)


def evolve(state, eig: EigenSystem, t):
    """e^{-iHt} |state>; for array-valued t returns an (n_t, dim) array."""
    psi = _as_vector(state)
    c = eig.states.conj().T @ psi
    t_arr = np.asarray(t, dtype=float)
    phased = np.exp(-1j * np.multiply.outer(t_arr, eig.energies)) * c
    out = phased @ eig.states.T
    if t_arr.ndim == 0 and isinstance(state, DenseState):
        return DenseState(out / np.linalg.norm(out))
    return out


def heisenberg_series(eig: EigenSystem, A: np.ndarray, times) -> np.ndarray:
    """U(t)^dag A U(t) for each t, with U(t) = e^{-iHt}; shape (n_t, dim, dim)."""
    Aq = eig.to_eigenbasis(A)
    w = eig.energies[:, None] - eig.energies[None, :]
    ph = np.exp(1j * np.multiply.outer(np.asarray(times, dtype=float), w))
    return np.einsum("im,tmn,jn->tij", eig.states, Aq * ph, eig.states.conj())


def d_operator(
    Hq,
    dHq: np.ndarray,
    t: float,
    n_steps: int | None = None,
    *,
    method: str = "spectral",
    local_terms=None,
) -> DOperator:
    """D(t) = int_0^t U(s)^dag dHq U(s) ds with U(s) = e^{-i Hq s}.

    ``method="spectral"`` uses the closed form in the Hq eigenbasis;
    ``method="simpson"`` integrates the Heisenberg-picture operator with
    composite Simpson on ``n_steps`` panels (default: doubling from 64 until
    successive estimates agree to 1e-6 relative, at most 2^12 panels).
    """
    eig = Hq if isinstance(Hq, EigenSystem) else eigensystem(Hq, require_nondegenerate=False)
    dHq = np.asarray(dHq)
    _check_hermitian(dHq, "dHq")
    if method == "spectral":
        M = _d_spectral(eig, dHq, t)
    elif method == "simpson":
        M = _d_simpson(eig, dHq, t, n_steps)
    else:
        raise ValueError(f"unknown method {method!r}")
    per_site = None
    if local_terms is not None:
        per_site = [d_operator(eig, term, t, n_steps, method=method).matrix for term in local_terms]
    return DOperator(matrix=M, t=float(t), per_site=per_site)


def _d_spectral(eig: EigenSystem, dH: np.ndarray, t: float) -> np.ndarray:
    dq = eig.to_eigenbasis(dH)
    w = eig.energies[:, None] - eig.energies[None, :]
    small = np.abs(w) < 1e-12
    w_safe = np.where(small, 1.0, w)
    f = np.where(small, t, (np.exp(1j * w_safe * t) - 1.0) / (1j * w_safe))
    return eig.from_eigenbasis(dq * f)


def _d_simpson(eig: EigenSystem, dH: np.ndarray, t: float, n_steps: int | None) -> np.ndarray:
    if t == 0:
        return np.zeros_like(dH, dtype=complex)

    def integrate(n):
        if n % 2:
            raise ValueError("Simpson quadrature needs an even number of panels")
        s = np.linspace(0.0, t, n + 1)
        return simpson(heisenberg_series(eig, dH, s), x=s, axis=0)

    if n_steps is not None:
        return integrate(n_steps)
    n, prev = 64, integrate(64)
    while n < 2**12:
        n *= 2
        cur = integrate(n)
        if np.max(np.abs(cur - prev)) <= 1e-6 * max(1.0, np.max(np.abs(cur))):
            return cur
        prev = cur
    return prev


def q1_variance(state0, D) -> float:
    """<D^2> - <D>^2 in state0 (the quench contribution to the QGT)."""
    psi = _as_vector(state0)
    M = D.matrix if isinstance(D, DOperator) else np.asarray(D)
    Dpsi = M @ psi
    mean = np.vdot(psi, Dpsi)
    return float(max(np.vdot(Dpsi, Dpsi).real - abs(mean) ** 2, 0.0))


def q1_spectral_sum(eig: EigenSystem, D, ground_index: int = 0) -> float:
    """sum_{n != 0} |<psi_0|D|psi_n>|^2 over an eigenbasis containing psi_0."""
    M = D.matrix if isinstance(D, DOperator) else np.asarray(D)
    row = eig.states[:, ground_index].conj() @ M @ eig.states
    mask = np.ones(len(row), dtype=bool)
    mask[ground_index] = False
    return float(np.sum(np.abs(row[mask]) ** 2))


def _heisenberg_vectors(eig: EigenSystem, A: np.ndarray, psi: np.ndarray, times: np.ndarray):
    """(U(t)^dag A U(t) psi for each t, <psi|U^dag A U|psi>); U = e^{-iHt}."""
    Aq = eig.to_eigenbasis(A)
    c = eig.states.conj().T @ psi
    P = np.exp(-1j * np.multiply.outer(times, eig.energies))
    inner = (P * c) @ Aq.T
    vecs = np.conj(P) * inner  # eigenbasis components
    means = np.sum(np.conj(c) * vecs, axis=1)
    return vecs, means


def double_simpson(F: np.ndarray, t: float) -> complex:
    s = np.linspace(0.0, t, F.shape[0])
    return complex(simpson(simpson(F, x=s, axis=1), x=s, axis=0))


def q1_from_correlators(
    state0,
    Hq,
    dHq_terms,
    t: float,
    grid: int = 256,
    *,
    dHq: np.ndarray | None = None,
    translation_invariant: bool = True,
) -> float:
    """q1 from double time integrals of connected correlators of the local terms.

    With translation invariance q1 = N sum_j int int <dH_0(t') dH_j(t'')>_C,
    otherwise the full double sum over (i, j) is taken. ``grid`` is the
    number of Simpson panels per time axis.
    """
    terms = [np.asarray(T) for T in dHq_terms]
    if dHq is not None and np.max(np.abs(sum(terms) - dHq)) > 1e-10:
        raise ValueError("local terms do not sum to dHq")
    if t == 0:
        return 0.0
    if grid % 2:
        raise ValueError("grid must be an even number of panels")
    eig = Hq if isinstance(Hq, EigenSystem) else eigensystem(Hq, require_nondegenerate=False)
    psi = _as_vector(state0)
    times = np.linspace(0.0, t, grid + 1)
    data = [_heisenberg_vectors(eig, T, psi, times) for T in terms]
    origins = [0] if translation_invariant else range(len(terms))
    total = 0.0
    for i in origins:
        vi, mi = data[i]
        for vj, mj in data:
            F = np.conj(vi) @ vj.T - np.outer(mi, mj)
            total += double_simpson(F, t).real
    return float(len(terms) * total if translation_invariant else total)


def connected_correlator(state, A: np.ndarray, B: np.ndarray) -> complex:
    psi = _as_vector(state)
    return complex(np.vdot(psi, A @ (B @ psi)) - np.vdot(psi, A @ psi) * np.vdot(psi, B @ psi))


def unequal_time_correlator(state, A: np.ndarray, Hq, t1, t2) -> complex:
    """<A(t1) A(t2)> with A(t) = e^{-itHq} A e^{itHq}."""
    eig = Hq if isinstance(Hq, EigenSystem) else eigensystem(Hq, require_nondegenerate=False)
    C = correlator_grid(state, A, eig, np.array([t1, t2]))
    return complex(C[0, 1])


def correlator_grid(state, A: np.ndarray, eig: EigenSystem, times, connected: bool = False) -> np.ndarray:
    """C[i, j] = <A(t_i) A(t_j)> (optionally connected) on a time grid."""
    psi = _as_vector(state)
    times = np.asarray(times, dtype=float)
    Aq = eig.to_eigenbasis(A)
    c = eig.states.conj().T @ psi
    P = np.exp(1j * np.multiply.outer(times, eig.energies))
    vecs = np.conj(P) * ((P * c) @ Aq.T)  # A(t)|psi> in the eigenbasis
    C = np.conj(vecs) @ vecs.T
    if connected:
        means = np.sum(np.conj(c) * vecs, axis=1)
        C = C - np.outer(means, means)
    return C


def energy_levels(energies: np.ndarray, tol: float = DEGENERACY_TOL) -> list[np.ndarray]:
    """Group ascending energies into degenerate levels (consecutive gaps < tol)."""
    breaks = np.flatnonzero(np.diff(energies) >= tol) + 1
    return np.split(np.arange(len(energies)), breaks)


def dephase(rho: np.ndarray, eig: EigenSystem, tol: float = DEGENERACY_TOL) -> tuple[np.ndarray, float]:
    """sum_n P_n rho P_n over the (possibly degenerate) eigenspaces of Hq, and its purity."""
    rho = np.asarray(rho)
    _check_hermitian(rho, "rho")
    if abs(np.trace(rho) - 1.0) > 1e-10 or np.linalg.eigvalsh(rho)[0] < -1e-10:
        raise ValueError("rho is not a density matrix")
    rq = eig.to_eigenbasis(rho)
    out = np.zeros_like(rq)
    for level in energy_levels(eig.energies, tol):
        block = np.ix_(level, level)
        out[block] = rq[block]
    purity = float(np.sum(np.abs(out) ** 2))
    return eig.from_eigenbasis(out), purity


def dephased_purity(state, eig: EigenSystem, tol: float = DEGENERACY_TOL) -> float:
    """Tr(rho_bar^2) for a pure state, sum_levels ||P psi||^4."""
    c = eig.states.conj().T @ _as_vector(state)
    return float(sum(np.sum(np.abs(c[lv]) ** 2) ** 2 for lv in energy_levels(eig.energies, tol)))


@dataclass
class NonresonanceReport:
    spectrum_ok: bool
    gaps_ok: bool
    offending_levels: list = field(default_factory=list)
    offending_gaps: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.spectrum_ok and self.gaps_ok


def check_nonresonance(eig, tol: float = DEGENERACY_TOL, max_report: int = 20) -> NonresonanceReport:
    """Distinct energies and distinct gaps E_m - E_n (m > n), within tol."""
    E = np.sort(np.asarray(eig.energies if isinstance(eig, EigenSystem) else eig, dtype=float))
    lv = np.flatnonzero(np.diff(E) < tol)
    offending_levels = [(int(i), int(i + 1)) for i in lv[:max_report]]
    m, n = np.triu_indices(len(E), k=1)
    gaps = E[n] - E[m]
    order = np.argsort(gaps, kind="stable")
    close = np.flatnonzero(np.diff(gaps[order]) < tol)
    offending_gaps = [
        ((int(m[order[i]]), int(n[order[i]])), (int(m[order[i + 1]]), int(n[order[i + 1]])))
        for i in close[:max_report]
    ]
    return NonresonanceReport(
        spectrum_ok=len(lv) == 0,
        gaps_ok=len(close) == 0,
        offending_levels=offending_levels,
        offending_gaps=offending_gaps,
    )


def operator_norm(A: np.ndarray) -> float:
    return float(np.linalg.norm(A, 2))


# ---------------------------------------------------------------------
# Cluster-XY conveniences
# ---------------------------------------------------------------------


def sector_eigensystem(params: ChainParams, *, require_nondegenerate: bool = True) -> tuple[EigenSystem, np.ndarray]:
    """Eigensystem of H restricted to params.parity_sector and the embedding indices."""
    idx = parity_indices(params.n_sites, params.parity_sector)
    H = build_dense_hamiltonian(params)[np.ix_(idx, idx)]
    return eigensystem(H, require_nondegenerate=require_nondegenerate), idx


def embed(vec: np.ndarray, idx: np.ndarray, n_sites: int) -> np.ndarray:
    full = np.zeros(vec.shape[:-1] + (1 << n_sites,), dtype=complex)
    full[..., idx] = vec
    return full


def ground_state(params: ChainParams) -> DenseState:
    """Ground state in the parity sector of ``params``, embedded in the full space."""
    eig, idx = sector_eigensystem(params)
    return DenseState(embed(eig.ground_state, idx, params.n_sites))


def quenched_states(params: ChainParams, hq: float, times) -> np.ndarray:
    """e^{-i H(h=hq) t} |GS(params)>, rows over ``times`` (full-space vectors)."""
    eig0, idx = sector_eigensystem(params)
    eigq, _ = sector_eigensystem(params.with_(h=hq), require_nondegenerate=False)
    out = evolve(eig0.ground_state, eigq, np.atleast_1d(np.asarray(times, dtype=float)))
    return embed(out, idx, params.n_sites)


def quenched_state(params: ChainParams, hq: float, t: float) -> DenseState:
    v = quenched_states(params, hq, [t])[0]
    return DenseState(v / np.linalg.norm(v))


def full_eigensystem(params: ChainParams) -> EigenSystem:
    return eigensystem(build_dense_hamiltonian(params), require_nondegenerate=False)


def derivative_matrix(n_sites: int, coordinate: str) -> np.ndarray:
    return build_dense_derivative(n_sites, coordinate)
