"""Command-line interface: ``civqr {fit,bootstrap,simulate,diagnose}``.

Reports are JSON objects ``{command, version, seed, config, result, wall_time}``
written to stdout or ``--out``. Tabular plot data goes to CSV.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .data import Dataset, validate
from .diagnostics import rank_condition_check, relevance_check, support_check
from .inference import FitConfig, bootstrap, fit
from .optim import OptimConfig
from .simlab import SimDesign, run_monte_carlo

log = logging.getLogger("civqr")

INTERCEPT = "(intercept)"


@dataclass(frozen=True)
class ColumnSpec:
    y_col: str
    delta_col: str
    z_cols: tuple
    w_cols: tuple
    add_intercept_z: bool = False
    add_intercept_w: bool = False

    @property
    def z_names(self) -> list:
        return ([INTERCEPT] if self.add_intercept_z else []) + list(self.z_cols)

    @property
    def w_names(self) -> list:
        return ([INTERCEPT] if self.add_intercept_w else []) + list(self.w_cols)


@dataclass
class RunReport:
    command: list
    seed: int | None
    config: dict
    result: dict
    wall_time: float = 0.0
    version: str = __version__
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "version": self.version,
            "seed": self.seed,
            "config": self.config,
            "result": self.result,
            "wall_time": self.wall_time,
        }


class DataError(ValueError):
    pass


def load_csv(path, spec: ColumnSpec) -> Dataset:
    """Read a comma-separated file with a header row into a validated Dataset.

    Row numbers in error messages count data rows from 1 (the header is not
    counted).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        needed = [spec.y_col, spec.delta_col, *spec.z_cols, *spec.w_cols]
        missing = [c for c in dict.fromkeys(needed) if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        pos = {c: header.index(c) for c in needed}
        cols = {c: [] for c in pos}
        for rownum, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            for c, j in pos.items():
                cell = row[j].strip() if j < len(row) else ""
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"row {rownum}, column {c}: non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"row {rownum}, column {c}: non-finite value {cell!r}")
                if c == spec.y_col and v <= 0:
                    raise DataError(f"row {rownum}, column {c}: nonpositive duration {cell}")
                if c == spec.delta_col and v not in (0.0, 1.0):
                    raise DataError(f"row {rownum}, column {c}: event indicator {cell!r} is not 0/1")
                cols[c].append(v)
    n = len(cols[spec.y_col])
    if n == 0:
        raise DataError(f"{path}: no data rows")
    ones = [np.ones(n)]
    z = np.column_stack((ones if spec.add_intercept_z else []) + [cols[c] for c in spec.z_cols])
    w = np.column_stack((ones if spec.add_intercept_w else []) + [cols[c] for c in spec.w_cols])
    ds = Dataset(cols[spec.y_col], cols[spec.delta_col], z, w)
    report = validate(ds)
    if report:
        raise DataError("; ".join(report))
    log.info("loaded %d rows from %s, censoring fraction %.3f", n, path, ds.censoring_fraction)
    return ds


def write_csv(path, dataset: Dataset, y_col="y", delta_col="delta", z_cols=None, w_cols=None) -> None:
    """Write ``dataset`` so that ``load_csv`` reads it back unchanged (floats via repr)."""
    z_cols = list(z_cols or [f"z{j + 1}" for j in range(dataset.k)])
    w_cols = list(w_cols or [f"w{j + 1}" for j in range(dataset.l)])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow([y_col, delta_col, *z_cols, *w_cols])
        for i in range(dataset.n):
            row = [dataset.y[i], dataset.delta[i], *dataset.z[i], *dataset.w[i]]
            wr.writerow([repr(float(v)) for v in row])


def write_columns_csv(path, columns: dict) -> None:
    names = list(columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(names)
        for row in zip(*(columns[c] for c in names)):
            wr.writerow([repr(float(v)) for v in row])


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _names(text: str | None) -> tuple:
    return tuple(v.strip() for v in text.split(",") if v.strip()) if text else ()


def parse_quantiles(text: str) -> list:
    """``"0.1,0.2,0.3"`` or ``"start:stop:step"`` (stop included)."""
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        m = int(round((stop - start) / step))
        return [round(start + i * step, 10) for i in range(m + 1)]
    return _floats(text)


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get("CIVQR_THREADS", "1")))


def _optim_config(args, k: int) -> OptimConfig:
    if args.box_lower is None or args.box_upper is None:
        raise DataError("--box-lower and --box-upper are required")
    lo, hi = _floats(args.box_lower), _floats(args.box_upper)
    if len(lo) != k or len(hi) != k:
        raise DataError(f"box bounds need {k} values (one per regressor), got {len(lo)} and {len(hi)}")
    return OptimConfig(
        lo, hi, n_starts=args.starts, max_iters=args.max_iters,
        f_tol=args.f_tol, x_tol=args.x_tol, seed=args.seed if args.seed is not None else 0,
        box_mode=args.box_mode, simplex_step=args.simplex_step,
    )


def _column_spec(args) -> ColumnSpec:
    return ColumnSpec(
        args.y, args.delta, _names(args.z), _names(args.w), args.intercept_z, args.intercept_w
    )


def _optim_echo(cfg: OptimConfig) -> dict:
    return {
        "box_lower": list(cfg.box_lower),
        "box_upper": list(cfg.box_upper),
        "starts": cfg.n_starts,
        "max_iters": cfg.max_iters,
        "f_tol": cfg.f_tol,
        "x_tol": cfg.x_tol,
        "box_mode": cfg.box_mode,
        "simplex_step": cfg.simplex_step,
    }


def _data_echo(args, spec: ColumnSpec) -> dict:
    return {
        "data": args.data,
        "y": spec.y_col,
        "delta": spec.delta_col,
        "z": spec.z_names,
        "w": spec.w_names,
    }


def cmd_fit(args) -> RunReport:
    spec = _column_spec(args)
    ds = load_csv(args.data, spec)
    optim = _optim_config(args, ds.k)
    us = parse_quantiles(args.quantiles) if args.quantiles else [args.u]
    workers = _threads(args)
    rows = []
    for u in us:
        cfg = FitConfig(u, optim)
        res = fit(ds, cfg)
        row = {"u": u, **res.to_dict()}
        if args.boot_b:
            boot = bootstrap(ds, cfg, args.boot_b, args.level, optim.seed, workers, res.beta_hat)
            row.update(ci_lower=boot.ci_lower.tolist(), ci_upper=boot.ci_upper.tolist(),
                       n_redraws=boot.n_redraws)
        rows.append(row)
    if args.plot_data:
        cols = {"u": [], "coefficient": [], "estimate": [], "lower": [], "upper": []}
        for row in rows:
            for j, _ in enumerate(spec.z_names):
                cols["u"].append(row["u"])
                cols["coefficient"].append(j)
                cols["estimate"].append(row["beta_hat"][j])
                cols["lower"].append(row.get("ci_lower", [math.nan] * ds.k)[j])
                cols["upper"].append(row.get("ci_upper", [math.nan] * ds.k)[j])
        write_columns_csv(args.plot_data, cols)
    config = {**_data_echo(args, spec), **_optim_echo(optim), "quantiles": us,
              "boot_b": args.boot_b, "level": args.level}
    result = {"coefficients": spec.z_names, "n": ds.n,
              "censoring_fraction": ds.censoring_fraction, "fits": rows}
    return RunReport([], optim.seed, config, result)


def cmd_bootstrap(args) -> RunReport:
    spec = _column_spec(args)
    ds = load_csv(args.data, spec)
    optim = _optim_config(args, ds.k)
    cfg = FitConfig(args.u, optim)
    boot = bootstrap(ds, cfg, args.boot_b, args.level, args.seed, _threads(args))
    config = {**_data_echo(args, spec), **_optim_echo(optim), "u": args.u,
              "boot_b": args.boot_b, "level": args.level}
    result = {"coefficients": spec.z_names, "n": ds.n, **boot.to_dict()}
    return RunReport([], args.seed, config, result)


def cmd_simulate(args) -> RunReport:
    design = SimDesign(args.design, args.lam, args.n, args.u, args.seed)
    lo = _floats(args.box_lower) if args.box_lower else [0.0] * 3
    hi = _floats(args.box_upper) if args.box_upper else [1.0] * 3
    optim = OptimConfig(lo, hi, n_starts=args.starts, max_iters=args.max_iters,
                        f_tol=args.f_tol, x_tol=args.x_tol, seed=args.seed,
                        box_mode=args.box_mode, simplex_step=args.simplex_step)
    metrics = run_monte_carlo(design, args.reps, FitConfig(args.u, optim), _threads(args))
    config = {"design": args.design, "lambda": args.lam, "n": args.n, "u": args.u,
              "reps": args.reps, **_optim_echo(optim)}
    result = {**metrics.record(design), "n_reps": metrics.n_reps, "n_failed": metrics.n_failed}
    return RunReport([], args.seed, config, result)


def cmd_diagnose(args) -> RunReport:
    spec = _column_spec(args)
    ds = load_csv(args.data, spec)
    optim = _optim_config(args, ds.k)
    res = fit(ds, FitConfig(args.u, optim))
    result = {"coefficients": spec.z_names, "fit": res.to_dict(),
              "support_check": support_check(res, ds).to_dict()}
    if args.treat and args.instr:
        t_col = spec.z_names.index(args.treat)
        i_col = spec.w_names.index(args.instr)
        result["relevance"] = relevance_check(ds, t_col, i_col)
        rank = rank_condition_check(
            ds, args.u, args.grid_radius, args.grid_steps, treat_col=t_col, instr_col=i_col,
            intercept_col=0 if spec.add_intercept_z else None, beta_hat=res.beta_hat,
        )
        result["rank_condition"] = rank.to_dict()
    config = {**_data_echo(args, spec), **_optim_echo(optim), "u": args.u,
              "treat": args.treat, "instr": args.instr}
    return RunReport([], optim.seed, config, result)


def _add_data_args(p, need_u=True):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--y", required=True, help="duration column")
    p.add_argument("--delta", required=True, help="event indicator column (1 = observed)")
    p.add_argument("--z", required=True, help="comma-separated regressor columns")
    p.add_argument("--w", required=True, help="comma-separated instrument columns")
    p.add_argument("--intercept-z", action="store_true", help="prepend a constant to Z")
    p.add_argument("--intercept-w", action="store_true", help="prepend a constant to W")
    if need_u:
        p.add_argument("--u", type=float, default=0.5, help="quantile level")


def _add_optim_args(p, seed_required=False):
    p.add_argument("--box-lower", help="comma-separated lower bounds, one per regressor")
    p.add_argument("--box-upper", help="comma-separated upper bounds, one per regressor")
    p.add_argument("--starts", type=int, default=100)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--f-tol", type=float, default=1e-8)
    p.add_argument("--x-tol", type=float, default=1e-6)
    p.add_argument("--box-mode", choices=("clip", "reject"), default="clip",
                   help="project trial points onto the box (clip) or score them +inf (reject)")
    p.add_argument("--simplex-step", type=float, default=0.2,
                   help="initial simplex edge as a fraction of each box width")
    p.add_argument("--seed", type=int, required=seed_required, default=None if seed_required else 0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: $CIVQR_THREADS or 1)")
    p.add_argument("--out", help="write the JSON report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="civqr",
        description="IV quantile regression for randomly right-censored durations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="estimate beta(u) at one or more quantiles")
    _add_data_args(p)
    p.add_argument("--quantiles", help='quantile sweep, "0.1,0.2" or "0.1:0.9:0.1"')
    _add_optim_args(p)
    p.add_argument("--boot-b", type=int, default=0, help="bootstrap replicates for CIs (0: none)")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--plot-data", help="CSV of (u, coefficient, estimate, lower, upper)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bootstrap", help="percentile bootstrap confidence intervals")
    _add_data_args(p)
    _add_optim_args(p, seed_required=True)
    p.add_argument("--boot-b", type=int, default=500)
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("simulate", help="Monte Carlo study on a simulation design")
    p.add_argument("--design", type=int, required=True, choices=(1, 2, 3))
    p.add_argument("--lambda", dest="lam", type=float, required=True, help="censoring rate")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--u", type=float, required=True)
    p.add_argument("--reps", type=int, default=500)
    _add_optim_args(p, seed_required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose", help="feasibility, relevance and rank checks")
    _add_data_args(p)
    _add_optim_args(p)
    p.add_argument("--treat", help="binary treatment column (must be in --z)")
    p.add_argument("--instr", help="binary instrument column (must be in --w)")
    p.add_argument("--grid-radius", type=float, default=0.25)
    p.add_argument("--grid-steps", type=int, default=11)
    p.set_defaults(func=cmd_diagnose)
    return parser


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        report = args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"civqr {args.command}: error: {exc}", file=sys.stderr)
        return 2
    report.command = ["civqr", *argv]
    report.wall_time = time.perf_counter() - start
    text = json.dumps(_jsonable(report.to_dict()), indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
