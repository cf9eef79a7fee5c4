"""
Quantum geometric tensor estimators.

q_ij = <d_i psi| (1 - |psi><psi|) |d_j psi>,  g = Re q,  Im q_xy = (Berry curvature) / (-2).

The finite-difference estimator only needs overlaps between family members,
so it applies unchanged to dense vectors and to free-fermion product states.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import oracle
from .model import ChainParams

DEFAULT_DELTA = 1e-3
CLAMP = 1e-8
MIN_OVERLAP = 1e-3


@dataclass(frozen=True)
class QGTMatrix:
    q: np.ndarray
    coords: tuple[str, ...] = ("lambda_x", "lambda_y")
    n_sites: int | None = None
    t: float = 0.0

    @property
    def g(self) -> np.ndarray:
        return self.q.real

    @property
    def berry(self) -> float:
        """Im q_xy; the curvature two-form component is F_xy = -2 Im q_xy."""
        return float(self.q[0, 1].imag) if self.q.shape[0] > 1 else 0.0

    @property
    def eigenvalues(self) -> np.ndarray:
        return qgt_eigens(self.q)[0]

    @property
    def q_max(self) -> float:
        return float(self.eigenvalues[-1])


@dataclass(frozen=True)
class QGTDecomposition:
    q0: float
    q1: float
    lower: float
    upper: float
    direction: np.ndarray | None = None

    def contains(self, q: float, rel: float = 1e-6) -> bool:
        eps = rel * max(1.0, self.upper)
        return self.lower - eps <= q <= self.upper + eps


def qgt_eigens(q) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors (columns); tiny negatives clamped."""
    q = q.q if isinstance(q, QGTMatrix) else np.asarray(q)
    scale = max(1.0, np.max(np.abs(q)))
    if np.max(np.abs(q - q.conj().T)) > 1e-8 * scale:
        raise ValueError("QGT matrix is not Hermitian")
    w, v = np.linalg.eigh(0.5 * (q + q.conj().T))
    w = np.where((w < 0) & (w >= -CLAMP * scale), 0.0, w)
    return w, v


def triangular_bounds(q0: float, q1: float, direction=None) -> QGTDecomposition:
    if q0 < 0 or q1 < 0:
        raise ValueError("q0 and q1 must be nonnegative")
    cross = 2.0 * np.sqrt(q0 * q1)
    return QGTDecomposition(q0=q0, q1=q1, lower=q0 + q1 - cross, upper=q0 + q1 + cross, direction=direction)


# ---------------------------------------------------------------------
# Finite-difference estimator
# ---------------------------------------------------------------------


def _default_overlap(s1, s2):
    return np.sum(np.conj(s1) * s2, axis=-1)


def _stencil_estimate(get, infid, ovl, d: int, delta: float, factors=None):
    """Metric from centred infidelities and Im q from centred plaquettes at one step size."""
    center = get((0,) * d)
    unit = np.eye(d, dtype=int)

    def G(v):
        v = tuple(v)
        minus = tuple(-x for x in v)
        return 0.5 * (infid(center, get(v)) + infid(center, get(minus))) / delta**2

    shape = np.shape(infid(center, center))
    q = np.zeros(shape + (d, d), dtype=complex)
    for i in range(d):
        q[..., i, i] = G(unit[i])
    for i in range(d):
        for j in range(i + 1, d):
            gij = 0.25 * (G(unit[i] + unit[j]) - G(unit[i] - unit[j]))
            corners = [-unit[i] - unit[j], unit[i] - unit[j], unit[i] + unit[j], -unit[i] + unit[j]]
            states = [get(tuple(c)) for c in corners]
            edge = factors or ovl
            loop = 1.0
            for a in range(4):
                o = edge(states[a], states[(a + 1) % 4])
                if np.min(np.abs(o)) < MIN_OVERLAP:
                    raise ValueError("plaquette overlaps too small; reduce delta")
                loop = loop * o
            # a product state's loop phase is the sum of its per-factor phases; summing
            # them avoids underflow when many factors are each slightly below 1
            phase = np.sum(np.angle(loop), axis=-1) if factors else np.angle(loop)
            im = phase / (8.0 * delta**2)
            q[..., i, j] = gij + 1j * im
            q[..., j, i] = gij - 1j * im
    return q


def qgt_array(
    family: Callable,
    lam: Sequence[float],
    delta: float = DEFAULT_DELTA,
    *,
    overlap: Callable | None = None,
    infidelity: Callable | None = None,
    overlap_factors: Callable | None = None,
    richardson: bool = True,
    domain: Callable | None = None,
) -> np.ndarray:
    """QGT as an array of shape (..., d, d), broadcasting over whatever extra
    axes the family's states carry (e.g. a time axis).

    ``overlap_factors`` is optional for product states: it returns the factor
    overlaps along a trailing axis, whose product is ``overlap``. The plaquette
    phase and the small-overlap check then work factor by factor.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    lam = np.asarray(lam, dtype=float)
    d = lam.size
    ovl = overlap or _default_overlap
    infid = infidelity or (lambda a, b: 1.0 - np.abs(ovl(a, b)) ** 2)
    cache: dict = {}

    def at(step):
        def get(offset):
            key = (step, offset)
            if key not in cache:
                point = lam + step * np.asarray(offset, dtype=float)
                if domain is not None and not domain(point):
                    raise ValueError(f"stencil point {point} leaves the parameter domain")
                cache[key] = family(tuple(point))
            return cache[key]

        return get

    est = _stencil_estimate(at(delta), infid, ovl, d, delta, overlap_factors)
    if richardson:
        half = _stencil_estimate(at(0.5 * delta), infid, ovl, d, 0.5 * delta, overlap_factors)
        est = (4.0 * half - est) / 3.0
    return est


def qgt_finite_difference(
    family: Callable,
    lam: Sequence[float],
    delta: float = DEFAULT_DELTA,
    *,
    overlap: Callable | None = None,
    infidelity: Callable | None = None,
    richardson: bool = True,
    domain: Callable | None = None,
    coords: tuple[str, ...] | None = None,
    n_sites: int | None = None,
    t: float = 0.0,
) -> QGTMatrix:
    """QGT of a state family at ``lam`` from overlaps on a centred stencil.

    Parameters
    ----------
    family : callable
        Maps a coordinate tuple to a state understood by ``overlap``.
    lam : sequence of float
        Point of the manifold (one or two coordinates).
    delta : float
        Stencil step; with ``richardson`` the steps delta and delta/2 are
        combined to cancel the O(delta^2) truncation error.
    overlap, infidelity : callable, optional
        <s1|s2> and 1 - |<s1|s2>|^2. Defaults treat states as vectors.
    """
    q = qgt_array(
        family, lam, delta, overlap=overlap, infidelity=infidelity, richardson=richardson, domain=domain
    )
    if q.ndim != 2:
        raise ValueError("family states carry extra axes; use qgt_array")
    d = q.shape[0]
    if coords is None:
        coords = ("lambda_x", "lambda_y")[:d] if d <= 2 else tuple(f"x{i}" for i in range(d))
    return QGTMatrix(q=q, coords=tuple(coords), n_sites=n_sites, t=t)


# ---------------------------------------------------------------------
# Spectral (dense) estimators
# ---------------------------------------------------------------------


def _perturbed_ground(eig: oracle.EigenSystem, dH: np.ndarray) -> np.ndarray:
    """sum_{n>0} |n><n|dH|0> / (E_0 - E_n): the gauge-fixed ground-state derivative."""
    if eig.ground_degeneracy > 1 or eig.gap < oracle.DEGENERACY_TOL:
        raise oracle.DegenerateGroundStateError("q0 needs a non-degenerate ground state")
    row = eig.states.conj().T @ (dH @ eig.ground_state)
    denom = eig.energies[0] - eig.energies
    coeff = np.zeros_like(row)
    coeff[1:] = row[1:] / denom[1:]
    return eig.states @ coeff


def qgt_spectral_q0(eig: oracle.EigenSystem, dH: np.ndarray) -> float:
    """sum_{n != 0} |<psi_0|dH|psi_n>|^2 / (E_0 - E_n)^2 along one direction."""
    v = _perturbed_ground(eig, np.asarray(dH))
    return float(np.vdot(v, v).real)


def _project_out(psi: np.ndarray, v: np.ndarray) -> np.ndarray:
    return v - psi * np.vdot(psi, v)


def dense_qgt_from_derivatives(
    params: ChainParams,
    hq: float,
    t: float,
    coords: tuple[str, ...] = ("lambda_x", "lambda_y"),
) -> QGTMatrix:
    """QGT of e^{-iH^q t}|GS(H)> from explicit state derivatives.

    d_c|Omega> = U (d_c psi_0 - i D_c(t) psi_0), so q_ij is the projected
    Gram matrix of phi_c = d_c psi_0 - i D_c psi_0.
    """
    eig0, idx = oracle.sector_eigensystem(params)
    eigq, _ = oracle.sector_eigensystem(params.with_(h=hq), require_nondegenerate=False)
    psi = eig0.ground_state
    phis = []
    for c in coords:
        dH = oracle.derivative_matrix(params.n_sites, c)[np.ix_(idx, idx)]
        D = oracle.d_operator(eigq, dH, t).matrix
        phis.append(_project_out(psi, _perturbed_ground(eig0, dH) - 1j * (D @ psi)))
    Phi = np.array(phis)
    q = np.conj(Phi) @ Phi.T
    return QGTMatrix(q=q, coords=tuple(coords), n_sites=params.n_sites, t=t)


def quench_bounds(
    params: ChainParams,
    hq: float,
    t: float,
    direction: np.ndarray,
    coords: tuple[str, ...] = ("lambda_x", "lambda_y"),
) -> QGTDecomposition:
    """q0 and q1 along a (possibly complex) unit direction and the resulting interval.

    q0 = ||sum_n |n><n|d_v H|0> / (E_0 - E_n)||^2 and
    q1 = <D_v^dag D_v> - |<D_v>|^2 with d_v = sum_c v_c d_c.
    """
    eig0, idx = oracle.sector_eigensystem(params)
    eigq, _ = oracle.sector_eigensystem(params.with_(h=hq), require_nondegenerate=False)
    psi = eig0.ground_state
    dHv = sum(
        complex(v) * oracle.derivative_matrix(params.n_sites, c)[np.ix_(idx, idx)] for v, c in zip(direction, coords)
    )
    a = _perturbed_ground(eig0, dHv)
    q0 = float(np.vdot(a, a).real)
    dH_parts = [oracle.derivative_matrix(params.n_sites, c)[np.ix_(idx, idx)] for c in coords]
    Dv = sum(complex(v) * oracle.d_operator(eigq, dH, t).matrix for v, dH in zip(direction, dH_parts))
    b = _project_out(psi, Dv @ psi)
    q1 = float(np.vdot(b, b).real)
    return triangular_bounds(q0, q1, direction=np.asarray(direction))
