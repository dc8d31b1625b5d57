"""Batch runner: ``kolmoqi <subcommand> --config PATH [--seed N] [--workers N] [--out DIR]``.

Every run writes ``<name>.csv`` (first line ``# schema=1``) and a JSON
manifest ``<name>.json``.  Exit status: 0 all checks hold, 2 some check
violated, 3 some inconclusive (none violated), 1 input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, harness, kolmogorov, testfunctions
from .config import ConfigError, ExperimentConfig, load_document, parse
from .drift import simulate_y
from .kolmogorov import KolmogorovState, ShiftVector
from .wiener import WienerSpaceModel, sample_brownian_path, uniform_grid

SCHEMA_LINE = "# schema=1"
OVERFLOW_LOG = 700.0
EXIT_OK, EXIT_INPUT, EXIT_VIOLATED, EXIT_INCONCLUSIVE = 0, 1, 2, 3


def fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (list, tuple, np.ndarray)):
        return ";".join(fmt(a) for a in v)
    return str(v)


def linear_from_log(v: float) -> str:
    """Linear value of a log quantity, or OVERFLOW when it is too large to print."""
    if math.isfinite(v) and abs(v) > OVERFLOW_LOG:
        return "OVERFLOW"
    return fmt(math.exp(v) if math.isfinite(v) else (0.0 if v < 0 else math.inf))


def write_csv(path: Path, header: list[str], rows: list[dict]):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(SCHEMA_LINE + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(row.get(col, "")) for col in header])


def read_csv(path: Path) -> tuple[list[str], list[dict]]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != SCHEMA_LINE:
            raise ConfigError(f"{path}: missing '{SCHEMA_LINE}' header")
        reader = csv.DictReader(fh)
        rows = list(reader)
        return list(reader.fieldnames or []), rows


# --------------------------------------------------------------------------
# report rows

REPORT_COLUMNS = [
    "check", "verdict", "scale", "tol",
    "lhs", "lhs_log", "lhs_lo", "lhs_lo_log", "lhs_hi", "lhs_hi_log",
    "rhs", "rhs_log", "rhs_lo", "rhs_lo_log", "rhs_hi", "rhs_hi_log",
    "log_margin", "margin", "samples", "seed",
    "f", "alpha", "t", "q", "style", "x", "y", "h", "k", "bound_status",
    "oracle_log", "oracle_lo_log", "oracle_hi_log", "notes",
]


def report_row(rep: harness.InequalityReport, **extra) -> dict:
    row = {"check": rep.name, "verdict": rep.verdict, "scale": rep.scale, "tol": rep.tol}
    for side in ("lhs", "rhs"):
        for suffix in ("", "_lo", "_hi"):
            v = getattr(rep, side + suffix)
            if rep.scale == "log":
                row[side + suffix + "_log"] = v
                row[side + suffix] = linear_from_log(v)
            else:
                row[side + suffix] = v
                row[side + suffix + "_log"] = harness._log(v)
    row["log_margin"] = rep.log_margin
    row["margin"] = rep.margin if rep.scale == "linear" else ""
    row["samples"] = rep.sample_count
    row["seed"] = "" if rep.seed is None else rep.seed
    row["notes"] = "|".join(rep.notes)
    row.update(extra)
    return row


def verdict_from_row(row: dict) -> str:
    """Recompute a verdict from the stored interval columns."""
    suffix = "_log" if row["scale"] == "log" else ""
    vals = [float(row[c + suffix]) for c in ("lhs_lo", "lhs_hi", "rhs_lo", "rhs_hi")]
    return harness.decide(*vals, float(row["tol"]))


def status_from_verdicts(verdicts) -> int:
    verdicts = list(verdicts)
    if harness.VIOLATED in verdicts:
        return EXIT_VIOLATED
    if harness.INCONCLUSIVE in verdicts:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def _split(cfg: ExperimentConfig, v) -> KolmogorovState:
    v = np.asarray(v, dtype=float)
    return KolmogorovState(v[: cfg.dims], v[cfg.dims :])


def _g(cfg, key, default=None):
    cur = cfg.doc
    for part in key.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return default
        cur = cur[part]
    return cur


# --------------------------------------------------------------------------
# experiment kinds


def run_kernel(cfg: ExperimentConfig):
    start = _split(cfg, _g(cfg, "grid.start", [0.0] * (2 * cfg.dims)))
    rows = []
    for t in _g(cfg, "grid.t"):
        for pt in _g(cfg, "grid.points"):
            end = _split(cfg, pt)
            lg = kolmogorov.log_heat_kernel(t, start, end)
            rows.append({"t": float(t), "p0": start.p, "xi0": start.xi, "p": end.p, "xi": end.xi,
                         "density": linear_from_log(lg), "density_log": lg})
    return ["t", "p0", "xi0", "p", "xi", "density", "density_log"], rows, []


def run_simulate(cfg: ExperimentConfig):
    sampler = _g(cfg, "simulate.sampler", "exact")
    if sampler == "exact":
        t = float(_g(cfg, "simulate.t", 1.0))
        n = int(_g(cfg, "simulate.n", 1000))
        start = _split(cfg, _g(cfg, "simulate.start", [0.0] * (2 * cfg.dims)))
        s = kolmogorov.sample_exact(t, start, n, cfg.seed, cfg.workers)
        mean = kolmogorov.mean_state(t, start)
        cov = kolmogorov.cov_matrix(t)
        rows = []
        for i in range(cfg.dims):
            z = np.stack([s.p[:, i], s.xi[:, i]], axis=-1)
            mu = z.mean(axis=0)
            c = z - mu
            expected_mean = (mean.p[i], mean.xi[i])
            for a, label in ((0, "mean_p"), (1, "mean_xi")):
                se = z[:, a].std(ddof=1) / math.sqrt(n)
                rows.append(_stat_row(i + 1, label, mu[a], se, expected_mean[a]))
            for (a, b), label in (((0, 0), "var_p"), ((0, 1), "cov_p_xi"), ((1, 1), "var_xi")):
                prod = c[:, a] * c[:, b]
                val = prod.sum() / (n - 1)
                se = prod.std(ddof=1) / math.sqrt(n)
                rows.append(_stat_row(i + 1, label, val, se, cov[a, b]))
        return ["coord", "stat", "value", "se", "expected", "z", "within_3se"], rows, []
    # full paths
    T = float(_g(cfg, "simulate.T", 1.0))
    steps = int(_g(cfg, "simulate.steps", 100))
    reps = int(_g(cfg, "simulate.replicates", 1))
    n_coords = int(_g(cfg, "simulate.n_coords", cfg.dims))
    grid = uniform_grid(T, steps)
    rows = []
    if cfg.diffusion is None:
        path = sample_brownian_path(WienerSpaceModel(), n_coords, grid, cfg.seed, reps, cfg.workers)
        series = [("B", path.values)]
    else:
        gp = simulate_y(cfg.diffusion, None, grid, n_coords, cfg.seed, reps, workers=cfg.workers,
                        noise_scale=cfg.noise_scale)
        series = [("B", gp.base.values), ("xi", gp.xi)]
    for label, vals in series:
        for r in range(vals.shape[0]):
            for i in range(vals.shape[1]):
                for kk, tt in enumerate(grid):
                    rows.append({"series": label, "replicate": r, "coord": i + 1, "time": float(tt),
                                 "value": float(vals[r, i, kk])})
    return ["series", "replicate", "coord", "time", "value"], rows, []


def _stat_row(coord, label, value, se, expected):
    z = (value - expected) / se if se > 0 else (0.0 if value == expected else math.inf)
    return {"coord": coord, "stat": label, "value": float(value), "se": float(se), "expected": float(expected),
            "z": float(z), "within_3se": abs(z) <= 3}


def _method(cfg):
    return (_g(cfg, "method.name", "quadrature"), int(_g(cfg, "method.n", 100_000)),
            int(_g(cfg, "method.steps", 64)))


def run_wang(cfg: ExperimentConfig):
    method, n, steps = _method(cfg)
    rows, verdicts = [], []
    for fname in _g(cfg, "grid.functions"):
        f = testfunctions.get(fname)
        for alpha in _g(cfg, "grid.alpha"):
            for t in _g(cfg, "grid.t"):
                for x, y in _g(cfg, "grid.pairs"):
                    rep = harness.check_wang(
                        f, float(alpha), float(t), _split(cfg, x), _split(cfg, y), cfg.diffusion, method,
                        n=n, seed=cfg.seed, steps=steps, workers=cfg.workers, noise_scale=cfg.noise_scale,
                    )
                    rows.append(report_row(rep, f=fname, alpha=float(alpha), t=float(t), x=x, y=y))
                    verdicts.append(rep.verdict)
    return REPORT_COLUMNS, rows, verdicts


def run_rlsi(cfg: ExperimentConfig):
    method, n, steps = _method(cfg)
    rows, verdicts = [], []
    for fname in _g(cfg, "grid.functions"):
        f = testfunctions.get(fname)
        for t in _g(cfg, "grid.t"):
            for x in _g(cfg, "grid.points"):
                rep = harness.check_rlsi(
                    f, float(t), _split(cfg, x), cfg.diffusion, method, n=n, seed=cfg.seed, steps=steps,
                    workers=cfg.workers, noise_scale=cfg.noise_scale,
                )
                rows.append(report_row(rep, f=fname, t=float(t), x=x))
                verdicts.append(rep.verdict)
    return REPORT_COLUMNS, rows, verdicts


def run_rn(cfg: ExperimentConfig):
    oracle_n = int(_g(cfg, "oracle.n", 0))
    oracle_seed = int(_g(cfg, "oracle.seed", cfg.seed))
    styles = list(_g(cfg, "grid.styles"))
    shifts = [ShiftVector(s.get("h", [0.0]), s.get("k", [0.0])) for s in _g(cfg, "grid.shifts")]
    qs, ts = _g(cfg, "grid.q"), _g(cfg, "grid.t")
    family = len(qs) * len(ts) * len(shifts) if oracle_n else 1
    rows, verdicts = [], []
    for q in qs:
        for t in ts:
            for sh in shifts:
                reps = harness.check_rn_bounds(
                    float(q), float(t), sh, styles, cfg.diffusion, oracle_n if cfg.diffusion is None else 0,
                    oracle_seed, cfg.workers, family,
                )
                for rep in reps:
                    order = styles.index(rep.params["style"])
                    rows.append((order, report_row(rep, q=float(q), t=float(t), style=rep.params["style"], h=sh.h,
                                                   k=sh.k, bound_status=rep.params["status"],
                                                   oracle_log=rep.params.get("oracle_log", ""),
                                                   oracle_lo_log=rep.params.get("oracle_lo", ""),
                                                   oracle_hi_log=rep.params.get("oracle_hi", ""))))
                    verdicts.append(rep.verdict)
    # group rows by style, keep sweep order within a style
    rows = [r for _, r in sorted(rows, key=lambda item: item[0])]
    return REPORT_COLUMNS, rows, verdicts


CONV_COLUMNS = ["n", "mean_error", "max_error", "se", "mean_sq_error", "se_sq", "envelope", "envelope_ratio",
                "trend_pass", "trend_worst_z"]


def run_convergence(cfg: ExperimentConfig):
    target = _g(cfg, "convergence.target", "standard")
    recs = harness.convergence_study(
        target, _g(cfg, "grid.ranks"), float(_g(cfg, "convergence.T", 1.0)), int(_g(cfg, "convergence.steps", 100)),
        int(_g(cfg, "convergence.replicates", 100)), cfg.seed, spec=cfg.diffusion, workers=cfg.workers,
    )
    trend = harness.monotone_trend_test(recs)
    ratios = harness.envelope_ratios(recs)
    rows = []
    for rec, ratio in zip(recs, ratios):
        rows.append({"n": rec.n, "mean_error": rec.mean_error, "max_error": rec.max_error, "se": rec.se,
                     "mean_sq_error": rec.mean_sq_error, "se_sq": rec.se_sq, "envelope": rec.envelope,
                     "envelope_ratio": ratio, "trend_pass": trend.passed, "trend_worst_z": trend.worst_z})
    verdict = harness.HOLDS if trend.passed else harness.VIOLATED
    return CONV_COLUMNS, rows, [verdict]


RUNNERS = {
    "kernel": run_kernel,
    "simulate": run_simulate,
    "verify-wang": run_wang,
    "verify-rlsi": run_rlsi,
    "verify-rn": run_rn,
    "convergence": run_convergence,
}


def execute(cfg: ExperimentConfig, out_dir: Path) -> int:
    """Run one experiment (or a sweep), write CSV + manifest, return the exit status."""
    t0 = time.perf_counter()
    outputs = []
    if cfg.kind == "sweep":
        statuses = [execute(child, out_dir) for child in cfg.children]
        status = EXIT_VIOLATED if EXIT_VIOLATED in statuses else EXIT_INCONCLUSIVE if EXIT_INCONCLUSIVE in statuses else EXIT_OK
        outputs = [f"{c.name}.csv" for c in cfg.children]
        counts = {"children": statuses}
    else:
        header, rows, verdicts = RUNNERS[cfg.kind](cfg)
        csv_path = out_dir / f"{cfg.name}.csv"
        write_csv(csv_path, header, rows)
        outputs.append(csv_path.name)
        status = status_from_verdicts(verdicts)
        counts = {v: verdicts.count(v) for v in (harness.HOLDS, harness.VIOLATED, harness.INCONCLUSIVE)}
    echo = dict(cfg.doc)
    echo["kind"] = cfg.kind
    echo["seed"] = cfg.seed
    manifest = {
        "tool": "kolmoqi",
        "version": __version__,
        "kind": cfg.kind,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "config": echo,
        "outputs": outputs,
        "verdicts": counts,
        "exit_status": status,
        "wall_time_s": time.perf_counter() - t0,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{cfg.name}.json").write_text(json.dumps(manifest, indent=2, default=_jsonable), encoding="utf-8")
    return status


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


# --------------------------------------------------------------------------
# plot data


def emit_plotdata(paths, out_dir: Path, kind: str | None = None) -> list[Path]:
    written = []
    for path in map(Path, paths):
        if not path.exists():
            raise ConfigError(f"{path}: no such report")
        header, rows = read_csv(path)
        k = kind or ("convergence" if {"n", "mean_error", "se"} <= set(header) else
                     "rn" if {"style", "q", "lhs_log", "rhs_log", "log_margin"} <= set(header) else None)
        if k == "convergence":
            if not {"n", "mean_error", "se"} <= set(header):
                raise ConfigError(f"{path}: not a convergence report")
            target = out_dir / f"{path.stem}_convergence.dat"
            lines = ["# n mean_error se"] + [f"{r['n']} {r['mean_error']} {r['se']}" for r in rows]
            _write_lines(target, lines)
            written.append(target)
        elif k == "rn":
            if not {"style", "q", "lhs_log", "rhs_log", "log_margin"} <= set(header):
                raise ConfigError(f"{path}: not a verify-rn report")
            styles: dict[str, list[str]] = {}
            for r in rows:
                styles.setdefault(r["style"], []).append(f"{r['q']} {r['lhs_log']} {r['rhs_log']} {r['log_margin']}")
            for style, lines in styles.items():
                target = out_dir / f"{path.stem}_{style}.dat"
                _write_lines(target, ["# q lhs_log rhs_log margin"] + lines)
                written.append(target)
        else:
            raise ConfigError(f"{path}: schema does not match a plottable report")
    return written


def _write_lines(path: Path, lines):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kolmoqi", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("simulate", "kernel", "verify-wang", "verify-rlsi", "verify-rn", "convergence", "run"):
        p = sub.add_parser(name, help=f"run a {name} experiment" if name != "run" else "run any config (incl. sweeps)")
        p.add_argument("--config", required=True, help="TOML config or JSON run manifest")
        p.add_argument("--seed", type=int, default=None, help="overrides the config and environment seed")
        p.add_argument("--workers", type=int, default=None, help="worker threads (results do not depend on it)")
        p.add_argument("--out", default=None, help="output directory")
    p = sub.add_parser("plotdata", help="turn reports into whitespace-separated columns")
    p.add_argument("reports", nargs="+")
    p.add_argument("--kind", choices=("convergence", "rn"), default=None)
    p.add_argument("--out", default=None)
    return ap


def main(argv=None, env=None) -> int:
    env = os.environ if env is None else env
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        if args.command == "plotdata":
            out = Path(args.out) if args.out else Path(args.reports[0]).parent
            for p in emit_plotdata(args.reports, out, args.kind):
                print(p)
            return EXIT_OK
        doc = load_document(args.config)
        cfg = parse(doc, args.command, args.seed, env)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be positive")
            cfg.workers = args.workers
            for c in cfg.children:
                c.workers = args.workers
        out_dir = Path(args.out) if args.out else Path(cfg.out_dir)
        status = execute(cfg, out_dir)
        print(f"{cfg.kind}: exit status {status}, outputs in {out_dir}")
        return status
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
