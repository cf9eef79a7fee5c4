"""
Command-line entry point.

    qgtlab scan   [--config file] [--lx a:b:n --ly a:b:n --hq v --sizes 64,128 --times 0:5:51
                   --engine ff|dense|both --out dir --seed s --threads w]
    qgtlab verify {bounds,theorem1,equilibration,oracle} [--seed s --draws k --n N --hq v ...]
    qgtlab quench [--config file] [--n N --lx v --ly v --hq v --times 0:5:51 --engine ff|dense]

Settings come from the TOML config (top-level keys, or a table named after
the command) and are overridden by flags. Exit codes: 0 success,
1 invariant violation, 2 invalid input.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import freefermion as ff
from . import oracle, scan, verify
from .families import DenseFamily, FreeFermionFamily, family_qgt
from .model import DENSE_LIMIT, ChainParams, load_config

log = logging.getLogger("qgtlab")

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2

QUENCH_COLUMNS = (
    "n", "t", "loschmidt", "log_purity", "energy", "q_xx", "q_yy", "re_q_xy", "im_q_xy", "q1_x", "q1_y",
)  # fmt: skip


SCAN_KEYS = {"lx", "ly", "h", "hq", "sizes", "times", "engine", "seed", "delta", "threshold", "threads"}
OTHER_KEYS = {"n", "n_sites", "lambda_x", "lambda_y", "draws", "model", "out", "sector"}


class InputError(ValueError):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML file with default settings")
    p.add_argument("--hq", type=float, help="quench field")
    p.add_argument("--sizes", help="comma-separated ring sizes, e.g. 64,128")
    p.add_argument("--times", help="a:b:n range or comma list")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qgtlab", description="Quantum geometry of quenched spin chains.")
    parser.add_argument("--version", action="version", version=f"qgtlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("scan", help="phase-diagram scan over (lambda_x, lambda_y, N, t)")
    _common(ps)
    ps.add_argument("--lx", help="a:b:n grid for lambda_x (one value for a line)")
    ps.add_argument("--ly", help="a:b:n grid for lambda_y")
    ps.add_argument("--h", type=float, help="initial field (default 0)")
    ps.add_argument("--engine", choices=sorted(scan.ENGINE_ALIASES))
    ps.add_argument("--threshold", type=float, help="divergence threshold on the exponent")
    ps.add_argument("--delta", type=float, help="finite-difference step")
    ps.add_argument("--name", default="scan", help="basename of the output files")

    pv = sub.add_parser("verify", help="run a verification suite")
    pv.add_argument("suite", choices=verify.SUITES)
    _common(pv)
    pv.add_argument("--draws", type=int)
    pv.add_argument("--n", type=int, help="ring size")
    pv.add_argument("--model", choices=verify.MODELS)
    pv.add_argument("--lx", type=float)
    pv.add_argument("--ly", type=float)

    pq = sub.add_parser("quench", help="time series of one orthogonal quench")
    _common(pq)
    pq.add_argument("--n", type=int, help="ring size")
    pq.add_argument("--lx", type=float)
    pq.add_argument("--ly", type=float)
    pq.add_argument("--h", type=float)
    pq.add_argument("--engine", choices=sorted(scan.ENGINE_ALIASES))
    return parser


def _settings(args, command: str) -> dict:
    """Config values for ``command`` overridden by flags that were given."""
    cfg: dict = {}
    if args.config is not None:
        if not args.config.exists():
            raise InputError(f"config file {args.config} not found")
        raw = load_config(args.config)
        cfg = {k: v for k, v in raw.items() if not isinstance(v, dict)}
        cfg.update(raw.get(command, {}))
        unknown = set(cfg) - SCAN_KEYS - OTHER_KEYS
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
    for key, value in vars(args).items():
        if key in ("config", "command", "verbose", "suite", "name") or value is None:
            continue
        cfg[key] = value
    return cfg


# ---------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------


def cmd_scan(args) -> int:
    cfg = _settings(args, "scan")
    out = cfg.get("out")
    spec = scan.spec_from_config({k: v for k, v in cfg.items() if k in SCAN_KEYS})
    grid = scan.scan(spec, out=out, basename=args.name)
    if out is None:
        sys.stdout.write(grid.to_csv())
    else:
        print(f"wrote {Path(out) / (args.name + '.csv')} and {Path(out) / (args.name + '.gp')}")
    if spec.engine == "both":
        ok, worst = scan.engine_agreement(grid)
        print(f"engine agreement: max |q_ff - q_dense|/N = {worst:.3e} ({'ok' if ok else 'VIOLATED'})")
        if not ok:
            return EXIT_VIOLATION
    return EXIT_OK


def _lam(cfg: dict) -> tuple[float, float]:
    return float(cfg.get("lx", cfg.get("lambda_x", 0.3))), float(cfg.get("ly", cfg.get("lambda_y", 0.1)))


def cmd_verify(args) -> int:
    cfg = _settings(args, "verify")
    suite = args.suite
    kw: dict = {"seed": int(cfg.get("seed", 0))}
    times = scan.parse_times(cfg["times"]) if "times" in cfg else None
    sizes = scan.parse_sizes(cfg["sizes"]) if "sizes" in cfg else None
    n = cfg.get("n", cfg.get("n_sites"))
    if suite == "oracle":
        if "draws" in cfg:
            kw["draws"] = int(cfg["draws"])
        if sizes:
            kw["sizes"] = sizes
        if "hq" in cfg:
            kw["hq"] = float(cfg["hq"])
    elif suite == "bounds":
        kw.update(n=int(n or 8), hq=float(cfg.get("hq", 0.5)), model=str(cfg.get("model", "cluster-xy")))
        if times:
            kw["times"] = times
        if kw["n"] > DENSE_LIMIT:
            raise InputError(f"the bounds suite is dense; need n <= {DENSE_LIMIT}")
    elif suite == "theorem1":
        kw.update(draws=int(cfg.get("draws", 20)), n=int(n or 4))
        if kw["n"] > 7:
            raise InputError("theorem1 draws are limited to n <= 7")
    elif suite == "equilibration":
        kw.update(hq=float(cfg.get("hq", 0.5)), lam=_lam(cfg))
        if sizes:
            kw["sizes"] = sizes
    rep = verify.run(suite, **kw)
    print(rep.summary())
    out = cfg.get("out", Path("."))
    path = rep.write(out)
    print(f"report: {path}")
    return rep.exit_code


def quench_table(params: ChainParams, hq: float, times, engine: str = "freefermion") -> list[tuple]:
    """Rows of QUENCH_COLUMNS for one orthogonal quench."""
    times = np.asarray(times, dtype=float)
    n = params.n_sites
    if engine == "dense":
        fam = DenseFamily(n, hq, times, h=params.h)
        states = oracle.quenched_states(params, hq, times)
        psi0 = oracle.ground_state(params).amplitudes
        losch = np.abs(states @ np.conj(psi0)) ** 2
        eigq, idx = oracle.sector_eigensystem(params.with_(h=hq), require_nondegenerate=False)
        log_pur = np.log(oracle.dephased_purity(psi0[idx], eigq))
        c = eigq.states.conj().T @ psi0[idx]
        energy = np.full(len(times), float(np.sum(np.abs(c) ** 2 * eigq.energies)))
    else:
        fam = FreeFermionFamily(n, hq, times, h=params.h)
        s = ff.quench_evolve(params, hq, 0.0)
        losch = np.array([ff.fidelity(s, s.at(t)) for t in times])
        log_pur = ff.log_dephased_purity(s)
        energy = np.full(len(times), ff.energy_expectation(s))
    q = family_qgt(fam, params.couplings)
    q1x = ff.quench_q1(params, hq, times, (1.0, 0.0)) if engine != "dense" else _dense_q1(params, hq, times, 0)
    q1y = ff.quench_q1(params, hq, times, (0.0, 1.0)) if engine != "dense" else _dense_q1(params, hq, times, 1)
    rows = []
    for k, t in enumerate(times):
        rows.append((n, t, losch[k], log_pur, energy[k], q[k, 0, 0].real, q[k, 1, 1].real,
                     q[k, 0, 1].real, q[k, 0, 1].imag, q1x[k], q1y[k]))  # fmt: skip
    return rows


def _dense_q1(params: ChainParams, hq: float, times, axis: int) -> np.ndarray:
    coord = ("lambda_x", "lambda_y")[axis]
    eig0, idx = oracle.sector_eigensystem(params)
    eigq, _ = oracle.sector_eigensystem(params.with_(h=hq), require_nondegenerate=False)
    dH = oracle.derivative_matrix(params.n_sites, coord)[np.ix_(idx, idx)]
    return np.array([oracle.q1_variance(eig0.ground_state, oracle.d_operator(eigq, dH, t)) for t in times])


def cmd_quench(args) -> int:
    cfg = _settings(args, "quench")
    n = cfg.get("n", cfg.get("n_sites"))
    if n is None:
        raise InputError("quench needs a ring size (--n or n_sites in the config)")
    lx, ly = _lam(cfg)
    params = ChainParams(n_sites=int(n), h=float(cfg.get("h", 0.0)), lambda_x=lx, lambda_y=ly)
    engine = scan.ENGINE_ALIASES.get(str(cfg.get("engine", "freefermion")))
    if engine not in ("freefermion", "dense"):
        raise InputError("quench supports engine ff or dense")
    if engine == "dense" and params.n_sites > DENSE_LIMIT:
        raise InputError(f"the dense engine is limited to N <= {DENSE_LIMIT}")
    times = scan.parse_times(cfg.get("times", "0:5:51"))
    rows = quench_table(params, float(cfg.get("hq", 0.5)), times, engine)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(QUENCH_COLUMNS)
    for r in rows:
        w.writerow([scan._fmt(v) for v in r])
    out = cfg.get("out")
    if out is None:
        sys.stdout.write(buf.getvalue())
    else:
        Path(out).mkdir(parents=True, exist_ok=True)
        path = Path(out) / "quench.csv"
        path.write_text(buf.getvalue())
        print(f"wrote {path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = {"scan": cmd_scan, "verify": cmd_verify, "quench": cmd_quench}[args.command]
    try:
        return handler(args)
    except ValueError as exc:
        print(f"qgtlab: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RuntimeError as exc:  # e.g. no non-resonant draw found
        print(f"qgtlab: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
