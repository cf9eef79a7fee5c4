"""
Verification suites behind ``qgtlab verify``.

Each suite returns a SuiteReport: a list of named cases with the measured
value, the tolerance or threshold it is judged against, and a pass flag.
Informational cases are reported but never fail a suite.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from . import freefermion as ff
from . import oracle
from .families import DenseFamily, FreeFermionFamily, family_qgt
from .geometry import qgt_eigens, quench_bounds
from .model import (
    ChainParams,
    PauliTerm,
    build_pauli_hamiltonian,
    derivative_terms,
    pauli_string_sparse,
    random_local_terms,
)

log = logging.getLogger(__name__)

SUITES = ("bounds", "theorem1", "equilibration", "oracle")
MODELS = ("cluster-xy",)


@dataclass
class Case:
    name: str
    value: float
    threshold: float
    passed: bool
    kind: str = "check"  # "check" or "info"
    detail: dict = field(default_factory=dict)


@dataclass
class SuiteReport:
    suite: str
    settings: dict
    cases: list[Case] = field(default_factory=list)
    elapsed: float = 0.0

    def add(self, name, value, threshold, passed, kind="check", **detail) -> Case:
        c = Case(name, float(value), float(threshold), bool(passed), kind, detail)
        self.cases.append(c)
        return c

    @property
    def checks(self) -> list[Case]:
        return [c for c in self.cases if c.kind == "check"]

    @property
    def failures(self) -> list[Case]:
        return [c for c in self.checks if not c.passed]

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def to_json(self) -> str:
        doc = {
            "suite": self.suite,
            "settings": self.settings,
            "passed": self.passed,
            "n_checks": len(self.checks),
            "n_failed": len(self.failures),
            "elapsed_s": round(self.elapsed, 3),
            "cases": [asdict(c) for c in self.cases],
        }
        return json.dumps(doc, indent=2, default=_json_default, allow_nan=True) + "\n"

    def summary(self) -> str:
        lines = [f"suite {self.suite}: {len(self.checks) - len(self.failures)}/{len(self.checks)} checks passed"]
        for c in self.cases:
            if c.kind == "info":
                tag = "info"
            else:
                tag = "PASS" if c.passed else "FAIL"
            lines.append(f"  [{tag}] {c.name}: {c.value:.6g} (threshold {c.threshold:.3g})")
        return "\n".join(lines)

    def write(self, out: str | Path) -> Path:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"verify_{self.suite}.json"
        path.write_text(self.to_json())
        return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serializable: {type(o)}")


# ---------------------------------------------------------------------
# Random draws
# ---------------------------------------------------------------------


def _draw_params(rng: np.random.Generator, n: int, span: float = 1.5, min_gap: float = 1e-3) -> ChainParams:
    """Random (h, lambda_x, lambda_y) with a non-degenerate even-sector ground state."""
    for _ in range(1000):
        h, lx, ly = rng.uniform(-span, span, size=3)
        p = ChainParams(n_sites=n, h=float(h), lambda_x=float(lx), lambda_y=float(ly))
        if ff.min_gap(p, samples=16).finite > 10 * min_gap:
            return p
    raise RuntimeError("could not draw a gapped parameter point")


def _haar_product_state(rng: np.random.Generator, n: int) -> np.ndarray:
    psi = np.ones(1, dtype=complex)
    for _ in range(n):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        psi = np.kron(psi, v / np.linalg.norm(v))
    return psi


def _random_local_observable(rng: np.random.Generator, n: int) -> np.ndarray:
    """n . sigma on a random site, unit operator norm."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    site = int(rng.integers(n))
    return sum(
        c * pauli_string_sparse(PauliTerm(1.0, [(site, a)]), n).toarray() for c, a in zip(axis, "xyz")
    )


# ---------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------


def run_oracle(seed: int = 0, draws: int = 20, sizes=(4, 6, 8, 10), eq3_sizes=(4, 6, 8), hq: float | None = None):
    """Free-fermion engine against dense ED and the two routes to q1."""
    rep = SuiteReport("oracle", {"seed": seed, "draws": draws, "sizes": list(sizes), "eq3_sizes": list(eq3_sizes)})
    rng = np.random.default_rng(seed)
    worst = {"spectrum": 0.0, "energy": 0.0, "fidelity": 0.0, "purity": 0.0}
    for d in range(draws):
        n = sizes[d % len(sizes)]
        p = _draw_params(rng, n)
        q = float(rng.uniform(-1.5, 1.5)) if hq is None else hq
        t = float(rng.uniform(0.1, 3.0))
        pq = p.with_(h=q)
        eig, idx = oracle.sector_eigensystem(p)
        e_ff = ff.even_sector_energies(ff.spectrum(p))
        worst["spectrum"] = max(worst["spectrum"], np.max(np.abs(e_ff - eig.energies)))
        worst["energy"] = max(worst["energy"], abs(ff.ground_energy(p) - eig.energies[0]))
        s_ff = ff.quench_evolve(p, q, t)
        s0_ff = s_ff.at(0.0)
        psi_t = oracle.quenched_state(p, q, t).amplitudes
        psi_0 = oracle.ground_state(p).amplitudes
        f_dense = abs(np.vdot(psi_0, psi_t)) ** 2
        worst["fidelity"] = max(worst["fidelity"], abs(ff.fidelity(s0_ff, s_ff) - f_dense))
        eigq, _ = oracle.sector_eigensystem(pq, require_nondegenerate=False)
        pur_dense = oracle.dephased_purity(eig.ground_state, eigq)
        worst["purity"] = max(worst["purity"], abs(ff.dephased_purity(s_ff) - pur_dense))
    for key, tol in (("spectrum", 1e-8), ("energy", 1e-9), ("fidelity", 1e-8), ("purity", 1e-8)):
        rep.add(f"max |ff - dense| {key} over {draws} draws", worst[key], tol, worst[key] < tol)

    for n in eq3_sizes:
        p = ChainParams(n_sites=n, h=0.0, lambda_x=0.3, lambda_y=0.1)
        qh = 0.5 if hq is None else hq
        for coord in ("lambda_x", "lambda_y"):
            q1v, q1c, t = eq3_pair(p, qh, 1.0, coord)
            rel = abs(q1c - q1v) / max(abs(q1v), 1e-300)
            rep.add(f"q1 correlators vs variance N={n} {coord}", rel, 1e-5, rel < 1e-5, q1_variance=q1v)
        q_dense = family_qgt(DenseFamily(n, qh, 1.0), (0.3, 0.1))
        q_ff = ff_qgt(p, qh, 1.0)
        diff = float(np.max(np.abs(q_dense - q_ff)) / n)
        rep.add(f"QGT/N ff vs dense N={n} t=1", diff, 1e-5, diff < 1e-5)
    return rep


def eq3_pair(params: ChainParams, hq: float, t: float, coord: str, grid: int = 256):
    """(q1 from the variance of D, q1 from connected correlators, t)."""
    eig0, idx = oracle.sector_eigensystem(params)
    eigq, _ = oracle.sector_eigensystem(params.with_(h=hq), require_nondegenerate=False)
    n = params.n_sites
    local = [build_pauli_hamiltonian([term], n)[np.ix_(idx, idx)] for term in derivative_terms(n, coord)]
    dH = sum(local)
    q1v = oracle.q1_variance(eig0.ground_state, oracle.d_operator(eigq, dH, t))
    q1c = oracle.q1_from_correlators(eig0.ground_state, eigq, local, t, grid=grid, dHq=dH)
    return q1v, q1c, t


def ff_qgt(params: ChainParams, hq: float, t) -> np.ndarray:
    return family_qgt(FreeFermionFamily(params.n_sites, hq, t, h=params.h), params.couplings)


def run_bounds(
    seed: int = 0,
    n: int = 8,
    hq: float = 0.5,
    times=(0.5, 1.0, 2.0),
    points: int = 4,
    model: str = "cluster-xy",
    rel: float = 1e-6,
):
    """Measured QGT eigenvalues against [q0 + q1 -/+ 2 sqrt(q0 q1)] along their eigenvectors."""
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    rep = SuiteReport("bounds", {"seed": seed, "n": n, "hq": hq, "times": list(times), "points": points})
    rng = np.random.default_rng(seed)
    lams = [(0.3, 0.1)]
    while len(lams) < points:
        lx, ly = rng.uniform(-0.8, 0.8, size=2)
        p = ChainParams(n_sites=n, lambda_x=float(lx), lambda_y=float(ly))
        if ff.min_gap(p, samples=16).finite > 0.05:
            lams.append((float(lx), float(ly)))
    for lam in lams:
        p = ChainParams(n_sites=n, h=0.0, lambda_x=lam[0], lambda_y=lam[1])
        q_all = family_qgt(DenseFamily(n, hq, np.asarray(times)), lam)
        for k, t in enumerate(times):
            w, v = qgt_eigens(q_all[k])
            for a in range(2):
                b = quench_bounds(p, hq, t, v[:, a])
                scale = max(1.0, b.upper)
                margin = min(w[a] - b.lower, b.upper - w[a]) / scale
                rep.add(
                    f"containment lam=({lam[0]:.3f},{lam[1]:.3f}) t={t:g} eig{a}",
                    margin,
                    -rel,
                    b.contains(w[a], rel=rel),
                    q=w[a],
                    q0=b.q0,
                    q1=b.q1,
                    lower=b.lower,
                    upper=b.upper,
                )
    return rep


def run_theorem1(seed: int = 0, draws: int = 20, n: int = 4, T: float | None = None, max_retries: int = 100):
    """sigma^2(C) <= ||A||^4 Tr(rho_bar^2) on random non-resonant local Hamiltonians."""
    rep = SuiteReport("theorem1", {"seed": seed, "draws": draws, "n": n, "T": T})
    rng = np.random.default_rng(seed)
    skipped = 0
    for d in range(draws):
        for _ in range(max_retries):
            H = build_pauli_hamiltonian(random_local_terms(n, rng), n)
            eig = oracle.eigensystem(H, require_nondegenerate=False)
            if oracle.check_nonresonance(eig).ok:
                break
            skipped += 1
            log.info("draw %d: resonant Hamiltonian skipped", d)
        else:
            raise dyn.ResonanceError(f"no non-resonant draw after {max_retries} retries")
        psi = _haar_product_state(rng, n)
        A = _random_local_observable(rng, n)
        r = dyn.theorem1_check(psi, A, eig, T=T)
        extra = {"bound": r.bound, "purity": r.purity, "window": r.window}
        if r.sigma2_infinite is not None:
            extra["sigma2_infinite"] = r.sigma2_infinite
        rep.add(f"draw {d} plain", r.sigma2, r.bound, r.satisfied, **extra)
        rep.add(f"draw {d} connected", r.sigma2_connected, r.bound, r.satisfied_connected, **extra)
    rep.add("resonant draws skipped", skipped, 0, True, kind="info")
    return rep


def equilibration_series(
    n: int, lam=(0.3, 0.1), hq: float = 0.5, T: float = 20.0, samples: int = 401, direction=(1.0, 0.0)
):
    """(times, q1(t)) for the free-fermion quench along ``direction``."""
    times = np.linspace(0.0, T, samples)
    p = ChainParams(n_sites=n, h=0.0, lambda_x=lam[0], lambda_y=lam[1])
    return times, ff.quench_q1(p, hq, times, direction)


def run_equilibration(
    seed: int = 0,
    sizes=(32, 64, 128),
    lam=(0.3, 0.1),
    hq: float = 0.5,
    T: float = 20.0,
    samples: int = 401,
    reference_size: int = 1024,
):
    """x_variance of q1/(N t^2) across sizes and the linearity of log purity in N."""
    rep = SuiteReport(
        "equilibration",
        {"seed": seed, "sizes": list(sizes), "lambda": list(lam), "hq": hq, "T": T, "samples": samples},
    )
    t_ref, q_ref = equilibration_series(reference_size, lam, hq, T, samples)
    xv, fsv, logp = [], [], []
    for n in sizes:
        t, q1 = equilibration_series(n, lam, hq, T, samples)
        fit = dyn.equilibration_fit(t, q1 / n, reference=q_ref / reference_size)
        xv.append(fit.x_variance)
        fsv.append(fit.finite_size_variance)
        p = ChainParams(n_sites=n, h=0.0, lambda_x=lam[0], lambda_y=lam[1])
        logp.append(ff.log_dephased_purity(ff.quench_evolve(p, hq, 0.0)))
        rep.add(f"x_variance per site N={n}", fit.x_variance, 0, True, kind="info", alpha=fit.alpha)
    steps = np.diff(xv)
    rep.add("x_variance decreasing in N (largest step)", float(np.max(steps)), 0.0, bool(np.all(steps < 0)))
    fs_steps = np.diff(fsv)
    rep.add(
        f"finite-size variance vs N={reference_size} decreasing (largest step)",
        float(np.max(fs_steps)),
        0.0,
        bool(np.all(fs_steps < 0)),
        kind="info",
        values=fsv,
    )
    slope, icept = np.polyfit(sizes, logp, 1)
    resid = np.asarray(logp) - (slope * np.asarray(sizes) + icept)
    r2 = 1.0 - np.sum(resid**2) / np.sum((np.asarray(logp) - np.mean(logp)) ** 2)
    rep.add("log purity linear in N (R^2)", r2, 0.99, r2 > 0.99, slope=slope, values=logp)
    rep.add("log purity slope", slope, 0.0, slope < 0)
    return rep


def run(suite: str, **kw) -> SuiteReport:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES}")
    fn = {"oracle": run_oracle, "bounds": run_bounds, "theorem1": run_theorem1, "equilibration": run_equilibration}
    start = time.perf_counter()
    rep = fn[suite](**kw)
    rep.elapsed = time.perf_counter() - start
    return rep


__all__ = ["SUITES", "Case", "SuiteReport", "run"]
