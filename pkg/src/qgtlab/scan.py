"""
Phase-diagram scans of the quenched manifold over (lambda_x, lambda_y, N, t).

For every grid point and size the ground state of H(h, lambda) is evolved
under H(hq, lambda); the QGT on the (lambda_x, lambda_y) manifold is taken
from the finite-difference estimator and q_max / N is fitted against N on
log-log axes. Points whose exponent exceeds a threshold are "divergent".
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import freefermion as ff
from .dynamics import CorrelationProfile, fit_correlation_length
from .families import DenseFamily, FreeFermionFamily, family_qgt
from .geometry import qgt_eigens
from .model import DENSE_LIMIT, ChainParams

log = logging.getLogger(__name__)

ENGINES = ("freefermion", "dense", "both")
ENGINE_ALIASES = {"ff": "freefermion", "freefermion": "freefermion", "dense": "dense", "both": "both"}
CSV_COLUMNS = (
    "lx", "ly", "n", "t", "q_xx", "q_yy", "re_q_xy", "im_q_xy",
    "q_max_over_n", "exponent", "class", "min_gap", "chi",
)  # fmt: skip
DEFAULT_THRESHOLD = 0.25
EXPONENT_FLOOR = 1e-14
AGREEMENT_TOL = 1e-5
AGREEMENT_MAX_N = 10
CHI_TEMPLATES = ("z", "xx", "yy", "xzx")


@dataclass(frozen=True)
class Axis:
    """Closed range start:stop with ``num`` points."""

    start: float
    stop: float
    num: int

    def __post_init__(self):
        if int(self.num) != self.num or self.num < 1:
            raise ValueError("an axis needs at least one point")
        if self.num == 1 and self.start != self.stop:
            raise ValueError("a one-point axis needs start == stop")

    @classmethod
    def parse(cls, text) -> "Axis":
        """'a:b:n', 'a' (single point) or a 3-sequence."""
        if isinstance(text, (list, tuple)):
            parts = list(text)
        elif isinstance(text, (int, float)):
            parts = [text]
        else:
            parts = str(text).split(":")
        if len(parts) == 1:
            v = float(parts[0])
            return cls(v, v, 1)
        if len(parts) != 3:
            raise ValueError(f"expected a:b:n, got {text!r}")
        return cls(float(parts[0]), float(parts[1]), int(parts[2]))

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.num)

    @property
    def step(self) -> float:
        return (self.stop - self.start) / (self.num - 1) if self.num > 1 else 0.0


@dataclass(frozen=True)
class ScanSpec:
    lx: Axis = field(default_factory=lambda: Axis(-2.0, 2.0, 41))
    ly: Axis = field(default_factory=lambda: Axis(-2.0, 2.0, 41))
    h: float = 0.0
    hq: float = 0.5
    sizes: tuple[int, ...] = (64, 128, 256, 512)
    times: tuple[float, ...] = (0.0, 1.0, 2.0)
    engine: str = "freefermion"
    seed: int = 0
    delta: float = 1e-3
    threshold: float = DEFAULT_THRESHOLD
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "engine", ENGINE_ALIASES.get(self.engine, self.engine))
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")
        sizes = tuple(int(n) for n in self.sizes)
        if not sizes or list(sizes) != sorted(set(sizes)):
            raise ValueError("sizes must be distinct and sorted ascending")
        if any(n % 2 or n < 4 for n in sizes):
            raise ValueError("sizes must be even and >= 4")
        if self.engine != "freefermion" and max(sizes) > DENSE_LIMIT:
            raise ValueError(f"the dense engine is limited to N <= {DENSE_LIMIT}")
        times = tuple(float(t) for t in self.times)
        if not times or min(times) < 0:
            raise ValueError("times must be nonnegative")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "times", times)

    def with_(self, **changes) -> "ScanSpec":
        return replace(self, **changes)


@dataclass
class PhaseDiagramGrid:
    """Scan results; array axes are (lx, ly, size, time) with trailing (2, 2) for q."""

    spec: ScanSpec
    lx: np.ndarray
    ly: np.ndarray
    q: np.ndarray
    q_max_over_n: np.ndarray
    exponent: np.ndarray  # (lx, ly, time)
    fit_r2: np.ndarray
    floored: np.ndarray
    min_gap: np.ndarray  # (lx, ly), continuum gap of the initial Hamiltonian
    chi: np.ndarray  # (lx, ly), initial-state correlation length at the largest size
    engine_delta: np.ndarray | None = None  # max |q_ff - q_dense| / N per (lx, ly)

    @property
    def divergent(self) -> np.ndarray:
        return self.exponent > self.spec.threshold

    @property
    def classification(self) -> np.ndarray:
        out = np.where(self.divergent, "divergent", "regular")
        return np.where(np.isnan(self.exponent), "undetermined", out)

    @property
    def sizes(self) -> tuple[int, ...]:
        return self.spec.sizes

    @property
    def times(self) -> tuple[float, ...]:
        return self.spec.times

    def rows(self):
        cls = self.classification
        for i, x in enumerate(self.lx):
            for j, y in enumerate(self.ly):
                for s, n in enumerate(self.sizes):
                    for k, t in enumerate(self.times):
                        q = self.q[i, j, s, k]
                        yield (
                            x, y, n, t, q[0, 0].real, q[1, 1].real, q[0, 1].real, q[0, 1].imag,
                            self.q_max_over_n[i, j, s, k], self.exponent[i, j, k], cls[i, j, k],
                            self.min_gap[i, j], self.chi[i, j],
                        )  # fmt: skip

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows():
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def divergent_values(self, axis: str = "ly", time_index: int = 0) -> np.ndarray:
        """Coordinates of divergent points along a one-dimensional sweep."""
        mask = self.divergent[..., time_index]
        if axis == "ly":
            if len(self.lx) != 1:
                raise ValueError("divergent_values needs a one-dimensional sweep")
            return self.ly[mask[0]]
        if len(self.ly) != 1:
            raise ValueError("divergent_values needs a one-dimensional sweep")
        return self.lx[mask[:, 0]]


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if np.isnan(v):
        return "nan"
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.12g}"


# ---------------------------------------------------------------------
# Fits
# ---------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentFit:
    exponent: float
    r2: float
    floored: bool


def scaling_exponent(sizes, values, floor: float = EXPONENT_FLOOR) -> ExponentFit:
    """Least-squares slope of log(values) against log(sizes).

    Values below ``floor`` (including nonpositive ones) are floored and flagged.
    """
    sizes = np.asarray(sizes, dtype=float)
    values = np.asarray(values, dtype=float)
    if sizes.shape != values.shape or sizes.size < 3:
        raise ValueError("need at least 3 sizes with one value each")
    if np.any(sizes <= 0):
        raise ValueError("sizes must be positive")
    floored = bool(np.any(~(values >= floor)))
    y = np.log(np.maximum(np.nan_to_num(values, nan=floor), floor))
    x = np.log(sizes)
    slope, icept = np.polyfit(x, y, 1)
    resid = y - (slope * x + icept)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return ExponentFit(float(slope), float(r2), floored)


def _profile_chi(amplitudes, momenta, n_sites: int) -> float:
    """Largest correlation length among the bilinear templates.

    Profiles on sublattice-structured points vanish at some distances, so the
    fit uses the monotone upper envelope max_{d' >= d} |C(d')|. Templates whose
    tail stays below 1e-6 |C(0)| carry no signal and are skipped. Returns 0
    when every template is short-ranged and nan when signal exists but no
    template decays exponentially (e.g. power laws at a critical point).
    """
    best = 0.0
    signal = False
    d = np.arange(n_sites // 2 + 1)
    for name in CHI_TEMPLATES:
        values = np.abs(ff.bilinear_profile(amplitudes, momenta, n_sites, name))
        if values[0] < 1e-12 or values[2:].max(initial=0.0) < 1e-6 * values[0]:
            continue
        signal = True
        env = np.maximum.accumulate(values[::-1])[::-1]
        fit = fit_correlation_length(CorrelationProfile(name, 0.0, d, env.astype(complex), n_sites))
        if fit.flag == "no-decay":
            return float("inf")
        if fit.flag == "ok" and fit.r2 >= 0.9:
            best = max(best, fit.chi)
    if signal and best == 0.0:
        return float("nan")
    return best


# ---------------------------------------------------------------------
# Workers
# ---------------------------------------------------------------------


def _point_task(args):
    spec, x, y = args
    lam = (float(x), float(y))
    nt = len(spec.times)
    qs = np.zeros((len(spec.sizes), nt, 2, 2), dtype=complex)
    dq = np.zeros(len(spec.sizes))
    for s, n in enumerate(spec.sizes):
        dense = None
        if spec.engine != "freefermion":
            dense = family_qgt(DenseFamily(n, spec.hq, spec.times, h=spec.h), lam, spec.delta)
        if spec.engine == "dense":
            qs[s] = dense
            continue
        qs[s] = family_qgt(FreeFermionFamily(n, spec.hq, spec.times, h=spec.h), lam, spec.delta)
        if dense is not None:
            dq[s] = np.max(np.abs(qs[s] - dense)) / n
    p0 = ChainParams(n_sites=spec.sizes[-1], h=spec.h, lambda_x=lam[0], lambda_y=lam[1])
    sp0 = ff.spectrum(p0)
    chi = _profile_chi(sp0.ground_amplitudes(), sp0.momenta, p0.n_sites)
    return qs, dq, ff.continuum_gap(p0), chi


def scan(spec: ScanSpec, out: str | Path | None = None, *, basename: str = "scan") -> PhaseDiagramGrid:
    """Run the scan; with ``out`` the CSV and a gnuplot script are written there."""
    lx, ly = spec.lx.values, spec.ly.values
    tasks = [(spec, x, y) for x in lx for y in ly]
    if spec.threads > 1:
        with ProcessPoolExecutor(max_workers=spec.threads) as pool:
            # map preserves task order whatever the completion order
            results = list(pool.map(_point_task, tasks, chunksize=max(1, len(tasks) // (4 * spec.threads))))
    else:
        results = [_point_task(t) for t in tasks]
    nx, ny, ns, nt = len(lx), len(ly), len(spec.sizes), len(spec.times)
    q = np.array([r[0] for r in results]).reshape(nx, ny, ns, nt, 2, 2)
    delta = np.array([r[1].max() for r in results]).reshape(nx, ny)
    gap = np.array([r[2] for r in results]).reshape(nx, ny)
    chi = np.array([r[3] for r in results]).reshape(nx, ny)

    sizes = np.asarray(spec.sizes, dtype=float)
    qmax = qgt_eigens_batched(q)[..., -1] / sizes[None, None, :, None]
    expo = np.full((nx, ny, nt), np.nan)
    r2 = np.full((nx, ny, nt), np.nan)
    floored = np.zeros((nx, ny, nt), dtype=bool)
    if ns >= 3:
        for idx in np.ndindex(nx, ny, nt):
            i, j, k = idx
            fit = scaling_exponent(sizes, qmax[i, j, :, k])
            expo[idx], r2[idx], floored[idx] = fit.exponent, fit.r2, fit.floored
    else:
        log.warning("fewer than 3 sizes; scaling exponents are undetermined")

    grid = PhaseDiagramGrid(
        spec=spec, lx=lx, ly=ly, q=q, q_max_over_n=qmax, exponent=expo, fit_r2=r2, floored=floored,
        min_gap=gap, chi=chi, engine_delta=delta if spec.engine == "both" else None,
    )  # fmt: skip
    if out is not None:
        write_outputs(grid, out, basename)
    return grid


def qgt_eigens_batched(q: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a stack of QGT matrices (tiny negatives clamped)."""
    flat = q.reshape(-1, q.shape[-2], q.shape[-1])
    w = np.array([qgt_eigens(m)[0] for m in flat])
    return w.reshape(q.shape[:-1])


# ---------------------------------------------------------------------
# Checks on a finished grid
# ---------------------------------------------------------------------


def engine_agreement(grid: PhaseDiagramGrid, tol: float = AGREEMENT_TOL) -> tuple[bool, float]:
    """Max free-fermion vs dense |q|/N difference over sizes N <= 10."""
    if grid.engine_delta is None:
        raise ValueError("engine agreement needs a scan with engine='both'")
    if max(grid.sizes) > AGREEMENT_MAX_N:
        log.info("agreement is asserted for N <= %d only", AGREEMENT_MAX_N)
    worst = float(np.max(grid.engine_delta))
    return worst < tol, worst


def gap_closing_locus(values: np.ndarray, gaps: np.ndarray) -> np.ndarray:
    """Sweep points whose gap is below the largest gap change over one step.

    Such points lie within one step of a zero of the gap.
    """
    gaps = np.asarray(gaps, dtype=float)
    if gaps.size < 2:
        return np.asarray(values)[gaps < 1e-8]
    jump = np.max(np.abs(np.diff(gaps)))
    return np.asarray(values)[gaps <= jump]


def sets_within(a, b, step: float, slack: float = 1e-9) -> bool:
    """Every element of each set lies within one grid step of the other set."""
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    if a.size == 0 or b.size == 0:
        return a.size == b.size
    lim = step * (1.0 + slack) + slack
    return bool(
        np.all(np.min(np.abs(a[:, None] - b[None, :]), axis=1) <= lim)
        and np.all(np.min(np.abs(b[:, None] - a[None, :]), axis=1) <= lim)
    )


# ---------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------


def gnuplot_script(grid: PhaseDiagramGrid, csv_name: str) -> str:
    """Heatmaps of q_max/N over (lx, ly) at the largest size, one PNG per time."""
    n = grid.sizes[-1]
    lines = [
        "# q_max/N heatmaps from " + csv_name,
        "set datafile separator ','",
        "set terminal pngcairo size 800,700",
        "set view map",
        "set xlabel 'lambda_x'",
        "set ylabel 'lambda_y'",
        "set cblabel 'q_max / N'",
        "set key off",
    ]
    for k, t in enumerate(grid.times):
        lines += [
            f"set output 'qmax_N{n}_t{k}.png'",
            f"set title 'N = {n}, t = {_fmt(t)}'",
            f"splot '{csv_name}' every ::1 using 1:2:(($3=={n} && abs($4-{_fmt(t)})<1e-9) ? $9 : 1/0) "
            "with points pointtype 5 pointsize 1.5 palette",
        ]
    return "\n".join(lines) + "\n"


def write_outputs(grid: PhaseDiagramGrid, out: str | Path, basename: str = "scan") -> tuple[Path, Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{basename}.csv"
    gp_path = out / f"{basename}.gp"
    csv_path.write_text(grid.to_csv())
    gp_path.write_text(gnuplot_script(grid, csv_path.name))
    return csv_path, gp_path


def spec_from_config(cfg: dict) -> ScanSpec:
    """ScanSpec from a TOML mapping; keys mirror the ScanSpec fields."""
    known = {"lx", "ly", "h", "hq", "sizes", "times", "engine", "seed", "delta", "threshold", "threads"}
    extra = set(cfg) - known
    if extra:
        raise ValueError(f"unknown scan keys: {sorted(extra)}")
    kw = {}
    for key in ("lx", "ly"):
        if key in cfg:
            kw[key] = Axis.parse(cfg[key])
    if "times" in cfg:
        kw["times"] = parse_times(cfg["times"])
    if "sizes" in cfg:
        kw["sizes"] = parse_sizes(cfg["sizes"])
    for key, cast in (("h", float), ("hq", float), ("engine", str), ("seed", int), ("delta", float),
                      ("threshold", float), ("threads", int)):  # fmt: skip
        if key in cfg:
            kw[key] = cast(cfg[key])
    return ScanSpec(**kw)


def parse_sizes(value) -> tuple[int, ...]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    return tuple(int(v) for v in value)


def parse_times(value) -> tuple[float, ...]:
    """'a:b:n' range, comma list, or a sequence."""
    if isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    text = str(value)
    if ":" in text:
        return tuple(float(v) for v in Axis.parse(text).values)
    return tuple(float(v) for v in text.split(",") if v.strip())
