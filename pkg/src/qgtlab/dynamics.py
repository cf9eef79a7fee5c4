"""
Correlation spreading and equilibration analytics.

Connected-correlator profiles on the ring, correlation-length and
light-cone velocity fits, the Lieb-Robinson-type bound on q1/N, temporal
variances, the dephasing bound on unequal-time correlators, and the
q1(t) = alpha t^2 + X(t) t^2 decomposition.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import freefermion as ff
from . import oracle
from .model import ChainParams, PauliTerm, pauli_string_sparse

log = logging.getLogger(__name__)

LATTICE_SPACING = 1.0
FLOOR = 1e-12


@dataclass(frozen=True)
class CorrelationProfile:
    label: str
    t: float
    distances: np.ndarray
    values: np.ndarray
    n_sites: int

    def __post_init__(self):
        if abs(self.values[0].imag) > 1e-10 or self.values[0].real < -1e-10:
            raise ValueError("the distance-0 correlator must be real and nonnegative")


@dataclass(frozen=True)
class CorrelationFit:
    chi: float
    slope: float
    r2: float
    window: tuple[int, int]
    flag: str = "ok"  # "ok", "short-range" or "no-decay"


@dataclass(frozen=True)
class LRBoundParams:
    chi: float
    v_lr: float
    k_const: float = 1.0
    a: float = LATTICE_SPACING

    def __post_init__(self):
        if self.chi <= 0 or self.v_lr < 0 or self.k_const <= 0:
            raise ValueError("need chi > 0, v_lr >= 0 and k_const > 0")


@dataclass(frozen=True)
class LRVelocity:
    v_lr: float
    stderr: float
    times: np.ndarray
    fronts: np.ndarray


@dataclass
class VarianceReport:
    window: float
    samples: int
    mean: complex
    sigma2: float
    sigma2_connected: float
    bound: float
    purity: float
    norm_A: float
    sigma2_infinite: float | None = None
    nonresonance: oracle.NonresonanceReport | None = field(default=None, repr=False)

    @property
    def satisfied(self) -> bool:
        return self.sigma2 <= self.bound + 1e-10

    @property
    def satisfied_connected(self) -> bool:
        return self.sigma2_connected <= self.bound + 1e-10


@dataclass(frozen=True)
class EquilibrationFit:
    alpha: float
    times: np.ndarray
    x_series: np.ndarray
    x_variance: float
    finite_size_variance: float | None = None


class ResonanceError(RuntimeError):
    pass


# ---------------------------------------------------------------------
# Profiles
# ---------------------------------------------------------------------


def ring_distance(j: int, n_sites: int) -> int:
    return min(j % n_sites, (-j) % n_sites)


def _dense_profile(psi: np.ndarray, template, n_sites: int, origin: int) -> np.ndarray:
    base = PauliTerm(1.0, template)

    def op(site):
        return pauli_string_sparse(base.shifted(site, n_sites), n_sites)

    O0 = op(origin)
    v0 = O0 @ psi
    m0 = np.vdot(psi, v0)
    out = []
    for d in range(n_sites // 2 + 1):
        Od = op(origin + d)
        vd = Od @ psi
        out.append(np.vdot(O0.conj().T @ psi, vd) - m0 * np.vdot(psi, vd))
    return np.asarray(out)


def correlation_profile(state, template="z", t: float | None = None, *, tol: float = 1e-8) -> CorrelationProfile:
    """<O_0 O_d>_C for ring distances d = 0 .. N/2.

    ``state`` is a dense vector / DenseState (``template`` a list of
    (relative site, axis) factors, or a single axis letter) or a
    QuenchedFFState (``template`` one of the Majorana-bilinear names).
    """
    if isinstance(state, ff.QuenchedFFState):
        if t is not None:
            state = state.at(t)
        n = state.n_sites
        vals = ff.bilinear_profile(state.amplitudes(), state.initial.momenta, n, template)
        return CorrelationProfile(str(template), float(state.t), np.arange(n // 2 + 1), vals, n)

    psi = state.amplitudes if isinstance(state, oracle.DenseState) else np.asarray(state)
    n = int(round(np.log2(len(psi))))
    tmpl = [(0, template)] if isinstance(template, str) else list(template)
    p0 = _dense_profile(psi, tmpl, n, 0)
    p1 = _dense_profile(psi, tmpl, n, 1)
    if np.max(np.abs(p0 - p1)) > tol:
        warnings.warn("state is not translation invariant; averaging the profile over origins")
        p0 = np.mean([_dense_profile(psi, tmpl, n, o) for o in range(n)], axis=0)
    label = "".join(a for _, a in tmpl)
    return CorrelationProfile(label, float(t or 0.0), np.arange(n // 2 + 1), p0, n)


def fit_correlation_length(profile: CorrelationProfile, start: int = 2, floor: float = FLOOR) -> CorrelationFit:
    """chi = -1/slope of log|C(d)| on the largest window from ``start`` that stays linear."""
    d = profile.distances
    c = np.abs(profile.values)
    ok = (d >= start) & (c > floor * max(1.0, c[0]))
    if np.sum(ok) < 3:
        return CorrelationFit(chi=0.0, slope=-np.inf, r2=1.0, window=(start, start), flag="short-range")
    last = int(np.flatnonzero(ok).max())
    best = None
    for end in range(last, start + 1, -1):
        sel = ok & (d <= end)
        if np.sum(sel) < 3:
            break
        x, y = d[sel], np.log(c[sel])
        slope, icept = np.polyfit(x, y, 1)
        resid = y - (slope * x + icept)
        r2 = 1.0 - np.sum(resid**2) / max(np.sum((y - y.mean()) ** 2), 1e-300)
        if best is None:
            best = (slope, r2, end)
        if r2 >= 0.99:
            best = (slope, r2, end)
            break
    slope, r2, end = best
    if slope >= -1e-3:
        return CorrelationFit(chi=np.inf, slope=slope, r2=r2, window=(start, end), flag="no-decay")
    return CorrelationFit(chi=-1.0 / slope, slope=slope, r2=r2, window=(start, end))


def ff_ground_profile(params: ChainParams, template: str = "z") -> CorrelationProfile:
    spec = ff.spectrum(params)
    return correlation_profile(ff.make_quenched_state(spec, spec, 0.0), template)


# ---------------------------------------------------------------------
# Light cone
# ---------------------------------------------------------------------


def lr_bound_eval(params: LRBoundParams, t, distances) -> np.ndarray:
    """k [4 t^2 exp(2 v t / (chi + a)) sum_j exp(-d_j / (chi + a))]."""
    ell = params.chi + params.a
    s = np.sum(np.exp(-np.asarray(distances, dtype=float) / ell))
    t = np.asarray(t, dtype=float)
    return params.k_const * 4.0 * t**2 * np.exp(2.0 * params.v_lr * t / ell) * s


def ring_distances(n_sites: int) -> np.ndarray:
    return np.array([ring_distance(j, n_sites) for j in range(n_sites)])


def calibrate_k(measured: float, t0: float, chi: float, v_lr: float, distances) -> LRBoundParams:
    """Fix the prefactor so the bound equals the measured |q1|/N at t0."""
    unit = lr_bound_eval(LRBoundParams(chi=chi, v_lr=v_lr), t0, distances)
    return LRBoundParams(chi=chi, v_lr=v_lr, k_const=float(abs(measured) / unit))


def estimate_lr_velocity(
    profiles: list[CorrelationProfile],
    eps_rel: float = 1e-6,
    pair_factor: float = 2.0,
) -> LRVelocity:
    """Velocity from the motion of the correlation front d*(t).

    d*(t) is the largest distance with |C| > eps_rel |C(0)|. Correlations at
    distance d are carried by two quasiparticles moving apart, so the front
    advances at pair_factor * v; the returned v_lr is slope / pair_factor.
    """
    if len(profiles) < 4:
        raise ValueError("need at least 4 time slices")
    times = np.array([p.t for p in profiles])
    fronts = []
    for p in profiles:
        c = np.abs(p.values)
        above = np.flatnonzero(c > eps_rel * c[0])
        fronts.append(float(p.distances[above.max()]) if len(above) else 0.0)
    fronts = np.array(fronts)
    if np.ptp(fronts) == 0:
        return LRVelocity(0.0, 0.0, times, fronts)
    (slope, _), cov = np.polyfit(times, fronts, 1, cov=True)
    err = float(np.sqrt(max(cov[0, 0], 0.0)))
    return LRVelocity(max(slope, 0.0) / pair_factor, err / pair_factor, times, fronts)


# ---------------------------------------------------------------------
# Temporal statistics
# ---------------------------------------------------------------------


def temporal_variance(samples, times=None, T: float | None = None) -> tuple[float, complex]:
    """Trapezoidal mean and variance of f over a uniform window; returns (sigma2, mean)."""
    f = np.asarray(samples)
    if len(f) < 8:
        raise ValueError("need at least 8 samples")
    if times is None:
        times = np.linspace(0.0, T if T is not None else 1.0, len(f))
    times = np.asarray(times, dtype=float)
    span = times[-1] - times[0]
    mean = np.trapezoid(f, times) / span
    sigma2 = np.trapezoid(np.abs(f - mean) ** 2, times) / span
    return float(sigma2), complex(mean) if np.iscomplexobj(f) else float(mean)


def temporal_variance_2d(F: np.ndarray, times: np.ndarray) -> tuple[float, complex]:
    span = times[-1] - times[0]

    def avg(G):
        return np.trapezoid(np.trapezoid(G, times, axis=1), times) / span**2

    mean = avg(F)
    return float(avg(np.abs(F - mean) ** 2).real), complex(mean)


def infinite_time_variance(state, A: np.ndarray, eig: oracle.EigenSystem) -> float:
    """Infinite-horizon variance of <A(t') A(t'')> for a non-resonant spectrum.

    C = sum_{m,l,n} rho_nm A_ml A_ln e^{-i(E_m-E_l)t'} e^{-i(E_l-E_n)t''}; every
    (m,l,n) not all equal carries its own frequency pair.
    """
    if eig.dimension > 128:
        raise ValueError("the exact infinite-time variance is limited to dimension <= 128")
    c = eig.states.conj().T @ (state.amplitudes if isinstance(state, oracle.DenseState) else state)
    Aq = eig.to_eigenbasis(A)
    # coefficient tensor rho_nm A_ml A_ln with rho_nm = c_n conj(c_m)
    T = np.einsum("m,ml,ln,n->mln", np.conj(c), Aq, Aq, c)
    total = np.sum(np.abs(T) ** 2)
    diag = np.abs(np.einsum("nnn->n", T)) ** 2
    return float(total - diag.sum())


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    w = np.empty(len(times))
    w[1:-1] = 0.5 * (times[2:] - times[:-2])
    w[0] = 0.5 * (times[1] - times[0])
    w[-1] = 0.5 * (times[-1] - times[-2])
    return w / (times[-1] - times[0])


def correlator_variances(psi: np.ndarray, A: np.ndarray, eig: oracle.EigenSystem, times, chunk: int = 4096):
    """Trapezoidal 2-D variances of C(t', t'') and of its connected part on times x times.

    C(t', t'') = x(t')^dag x(t'') with x(t) = A(t) psi, so the grid average of
    |C|^2 is Tr(R^2) with R = sum_i w_i x_i x_i^dag; the connected part uses
    the augmented vectors (x, <A(t)>) and metric diag(1, ..., 1, -1). The cost
    is linear in the number of samples, which allows long windows.
    Returns (sigma2, sigma2_connected, mean).
    """
    times = np.asarray(times, dtype=float)
    if len(times) < 8:
        raise ValueError("need at least 8 samples per axis")
    w = _trapezoid_weights(times)
    c = eig.states.conj().T @ psi
    Aq = eig.to_eigenbasis(A)
    d = eig.dimension
    R = np.zeros((d + 1, d + 1), dtype=complex)
    ybar = np.zeros(d + 1, dtype=complex)
    for sl in range(0, len(times), chunk):
        t = times[sl : sl + chunk]
        P = np.exp(1j * np.multiply.outer(t, eig.energies))
        x = np.conj(P) * ((P * c) @ Aq.T)  # A(t) = e^{-itH} A e^{itH}
        a = x @ np.conj(c)
        y = np.concatenate([x, a[:, None]], axis=1)
        ww = w[sl : sl + chunk]
        R += (y.T * ww) @ np.conj(y)
        ybar += ww @ y
    eta = np.ones(d + 1)
    eta[-1] = -1.0
    xb = ybar[:d]
    mean = complex(np.vdot(xb, xb))
    s2 = float(np.sum(np.abs(R[:d, :d]) ** 2) - abs(mean) ** 2)
    Re = R * eta[None, :]
    s2c = float(np.trace(Re @ Re).real - abs(np.vdot(ybar, eta * ybar)) ** 2)
    return max(s2, 0.0), max(s2c, 0.0), mean


def theorem1_check(
    state,
    A: np.ndarray,
    Hq,
    T: float | None = None,
    grid: int | None = None,
    *,
    tol: float = oracle.DEGENERACY_TOL,
    require_nonresonant: bool = True,
) -> VarianceReport:
    """Temporal variance of C(t', t'') = <A(t') A(t'')> against ||A||^4 Tr(rho_bar^2).

    Parameters
    ----------
    T : float, optional
        Window [0, T] per time axis. The bound concerns infinite-time
        averages and finite windows carry a 1/T transient, so the default
        is long: T = 1000 N / ||Hq|| with N = log2(dimension).
    grid : int, optional
        Samples per axis; the default resolves the fastest Bohr frequency
        with spacing 1 / (4 ||Hq||).
    """
    eig = Hq if isinstance(Hq, oracle.EigenSystem) else oracle.eigensystem(Hq, require_nondegenerate=False)
    report = oracle.check_nonresonance(eig, tol)
    if require_nonresonant and not report.ok:
        raise ResonanceError("Hq violates the non-resonance condition")
    psi = state.amplitudes if isinstance(state, oracle.DenseState) else np.asarray(state)
    scale = max(float(np.abs(eig.energies).max()), 1e-12)
    if T is None:
        T = 1000.0 * np.log2(eig.dimension) / scale
    if grid is None:
        grid = max(64, int(np.ceil(4.0 * scale * T)) + 1)
    times = np.linspace(0.0, T, grid)
    s2, s2c, mean = correlator_variances(psi, A, eig, times)
    purity = oracle.dephased_purity(psi, eig, tol)
    normA = oracle.operator_norm(A)
    return VarianceReport(
        window=float(T),
        samples=grid * grid,
        mean=mean,
        sigma2=s2,
        sigma2_connected=s2c,
        bound=normA**4 * purity,
        purity=purity,
        norm_A=normA,
        sigma2_infinite=infinite_time_variance(psi, A, eig) if eig.dimension <= 128 else None,
        nonresonance=report,
    )


def equilibration_fit(times, q1, t_min: float = 0.5, reference=None) -> EquilibrationFit:
    """alpha = time average of q1/t^2 over [t_min, T]; X(t) = q1/t^2 - alpha.

    ``reference`` (same grid) is an optional large-size q1 series on the same
    footing; the variance of (q1 - reference)/t^2 isolates finite-size
    temporal fluctuations from the size-independent transient.
    """
    times = np.asarray(times, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    sel = times >= t_min
    if np.sum(sel) < 16:
        raise ValueError("need at least 16 samples with t >= t_min")
    t, y = times[sel], q1[sel] / times[sel] ** 2
    _, alpha = temporal_variance(y, t)
    x = y - alpha
    xv, _ = temporal_variance(x, t)
    fs = None
    if reference is not None:
        r = np.asarray(reference, dtype=float)[sel] / t**2
        fs, _ = temporal_variance(y - r, t)
    return EquilibrationFit(alpha=float(alpha), times=t, x_series=x, x_variance=xv, finite_size_variance=fs)


def lr_reference_size(v_lr: float, T: float, minimum: int = 256) -> int:
    """Even ring size large enough that a light cone of speed v_lr cannot wrap within T."""
    n = int(np.ceil(4 * v_lr * T + 64))
    n += n % 2
    return max(n, minimum)
