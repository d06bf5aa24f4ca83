"""Command-line front end.

Every subcommand reads one config file and writes CSV files plus a
``manifest.json`` into the output directory::

    remoments solve --config nonlinear_ou.cfg --out results/
    remoments table1 --config table1.cfg --seed 1 --threads 4
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .causal_solver import solve_diagonal
from .config import SWEEP_AXES, ExperimentConfig, load_config, uniform_times
from .errors import ConfigError, MomentError
from .excitation import Family, kernel_for_correlation_time
from .ito_reference import localization_residual, solve_ou_local
from .monte_carlo import McConfig, Snapshot, moment_ratios, re_pdf_histogram, run_ensemble
from .oscillator import OscillatorParams
from .two_time import Method, two_time_field

log = logging.getLogger("remoments")

THREADS_ENV = "REMOMENTS_THREADS"
SUBCOMMANDS = ("solve", "field", "ito-check", "mc", "sweep", "table1", "fig12")

DIAGONAL_COLUMNS = ["t", "m_x", "c_xx", "c_xy", "a_x", "cycles"]
FIELD_COLUMNS = ["t", "s", "c_xy", "c_xx"]
MC_COLUMNS = ["t", "m_x", "se_m_x", "c_xx", "se_c_xx", "c_xy", "se_c_xy"]
RATIO_COLUMNS = ["kappa3", "r13", "r31", "se_r13", "se_r31"]


class StageError(Exception):
    def __init__(self, stage, error):
        self.stage = stage
        self.error = error
        super().__init__(f"{stage}: {error}")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    """UTF-8, comma-separated, LF line endings, shortest round-trip floats."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return Path(path).name


# -- row builders -----------------------------------------------------------

def diagonal_rows(traj):
    n_fine = (len(traj.times) - 1) // max(1, len(traj.cycles_per_step))
    cycles = np.concatenate([[0], np.repeat(traj.cycles_per_step, n_fine)])
    if cycles.size != traj.times.size:
        cycles = np.zeros(traj.times.size, dtype=int)
    return zip(traj.times, traj.m_x, traj.c_xx_diag, traj.c_xy_diag, traj.a_x, cycles)


def field_rows(field):
    t = field.times
    for i in range(t.size):
        for j in range(t.size):
            yield t[i], t[j], field.c_xy[i, j], field.c_xx[i, j] if i >= j else None


def mc_rows(ens):
    return zip(ens.times, ens.m_x, ens.se_m_x, ens.c_xx_diag, ens.se_c_xx,
               ens.c_xy_diag, ens.se_c_xy)


# -- helpers ----------------------------------------------------------------

def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except MomentError as exc:
        raise StageError(name, exc) from exc


def _mc_config(cfg: ExperimentConfig, seed, threads, t_end=None):
    mc = cfg.mc
    t_end = cfg.grid.t_end if t_end is None else t_end
    return McConfig(n_samples=mc["n_samples"], n_components=mc["n_components"], seed=seed,
                    times=uniform_times(cfg.grid.t0, t_end, mc["dt_out"]),
                    initial=cfg.initial, x0_law=mc["x0_law"],
                    mass_fraction=mc["mass_fraction"], max_step=mc["max_step"],
                    chunk_size=mc["chunk_size"], threads=threads)


def _pool_map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# -- subcommands ------------------------------------------------------------

def cmd_solve(cfg, out, seed, threads):
    traj = _stage("solve", solve_diagonal, cfg.params, cfg.kernel, cfg.initial, cfg.grid, cfg.solver)
    log.info("cycles per coarse step: %s", traj.cycles_per_step.tolist())
    return [write_csv(out / "diagonal.csv", DIAGONAL_COLUMNS, diagonal_rows(traj))]


def cmd_field(cfg, out, seed, threads):
    kernel = cfg.kernel
    traj = _stage("solve", solve_diagonal, cfg.params, kernel, cfg.initial, cfg.grid, cfg.solver)
    choice = cfg.output["field_method"].lower()
    methods = [Method.INTEGRAL, Method.ODE] if choice == "both" else [Method.parse(choice)]
    files = [write_csv(out / "diagonal.csv", DIAGONAL_COLUMNS, diagonal_rows(traj))]
    fields = {}
    for m in methods:
        f = _stage(f"field[{m.value}]", two_time_field, traj, kernel, cfg.params, cfg.initial,
                   m, cfg.solver)
        fields[m] = f
        name = "field.csv" if len(methods) == 1 else f"field_{m.value.lower()}.csv"
        files.append(write_csv(out / name, FIELD_COLUMNS, field_rows(f)))
    if len(fields) == 2:
        a, b = fields[Method.INTEGRAL], fields[Method.ODE]
        log.info("route difference: c_xy %.3g, c_xx %.3g",
                 np.max(np.abs(a.c_xy - b.c_xy)), np.max(np.abs(a.c_xx - b.c_xx)))
    return files


def cmd_ito_check(cfg, out, seed, threads):
    kernel = cfg.kernel
    traj = _stage("solve", solve_diagonal, cfg.params, kernel, cfg.initial, cfg.grid, cfg.solver)
    local = _stage("ito-check", solve_ou_local, cfg.params, kernel, cfg.initial,
                   cfg.grid.t_end, cfg.solver, traj.times, cfg.grid.t0)
    report = _stage("ito-check", localization_residual, traj, local)
    for name, value in report.as_dict().items():
        print(f"{name}: max |difference| = {value:.3e}")
    files = [write_csv(out / "ito_residual.csv", ["moment", "max_abs"], report.as_dict().items())]
    rows = zip(local.times, local.m_x, local.c_xx_diag, local.c_xy_diag)
    files.append(write_csv(out / "local.csv", ["t", "m_x", "c_xx", "c_xy"], rows))
    return files


def _histogram_rows(mass, xe, ye):
    for i in range(mass.shape[0]):
        for j in range(mass.shape[1]):
            yield xe[i], xe[i + 1], ye[j], ye[j + 1], mass[i, j]


def cmd_mc(cfg, out, seed, threads):
    ens = _stage("mc", run_ensemble, cfg.params, cfg.kernel, _mc_config(cfg, seed, threads))
    files = [write_csv(out / "mc.csv", MC_COLUMNS, mc_rows(ens))]
    for s in cfg.output["slices"]:
        sl = _stage("mc.slice", ens.two_time_slice, s)
        rows = zip(ens.times, [ens.times[ens.index(s)]] * ens.times.size,
                   sl["c_xy"], sl["se_c_xy"], sl["c_xx"], sl["se_c_xx"])
        files.append(write_csv(out / f"mc_slice_s{_fmt(float(s))}.csv",
                               ["t", "s", "c_xy", "se_c_xy", "c_xx", "se_c_xx"], rows))
    t_ratio = cfg.output["ratio_time"]
    if t_ratio is not None:
        r = _stage("mc.ratios", moment_ratios, ens.snapshot(t_ratio))
        files.append(write_csv(out / "ratios.csv", RATIO_COLUMNS,
                               [(cfg.params.kappa3, r.r13, r.r31, r.se_r13, r.se_r31)]))
    t_hist = cfg.output["histogram_time"]
    if t_hist is not None:
        rng = cfg.output["histogram_range"]
        bins = cfg.output["histogram_bins"]
        snap = ens.snapshot(t_hist)
        if rng is not None:
            bins = [np.linspace(rng[0], rng[1], bins + 1), np.linspace(rng[2], rng[3], bins + 1)]
        mass, xe, ye = _stage("mc.histogram", re_pdf_histogram, snap, bins)
        files.append(write_csv(out / "histogram.csv", ["x_lo", "x_hi", "y_lo", "y_hi", "mass"],
                               _histogram_rows(mass, xe, ye)))
    return files


def _parse_axis_value(axis, text):
    return Family.parse(text).value if axis == "family" else float(text)


def _monotone(values):
    d = np.diff(values)
    if np.all(d > 0):
        return "increasing"
    if np.all(d < 0):
        return "decreasing"
    return "none"


def cmd_sweep(cfg, out, seed, threads):
    axis = cfg.sweep["axis"]
    if axis is None or not cfg.sweep["values"]:
        raise ConfigError("sweep.axis", "sweep needs sweep.axis and sweep.values")
    values = [_parse_axis_value(axis, v) for v in cfg.sweep["values"]]

    def point(value):
        try:
            c = cfg.with_axis(axis, value)
            return value, solve_diagonal(c.params, c.kernel, c.initial, c.grid, c.solver), None
        except MomentError as exc:
            return value, None, exc

    results = _pool_map(point, values, threads)
    rows, finals, failed = [], [], []
    for value, traj, exc in results:
        if traj is None:
            print(f"sweep point {axis}={value}: {exc}", file=sys.stderr)
            failed.append(value)
            rows.append([value] + ["nan"] * len(DIAGONAL_COLUMNS))
            continue
        rows.extend([value, *r] for r in diagonal_rows(traj))
        finals.append((value, traj.m_x[-1], traj.c_xx_diag[-1], traj.c_xy_diag[-1]))
    files = [write_csv(out / "sweep.csv", [axis] + DIAGONAL_COLUMNS, rows)]
    files.append(write_csv(out / "sweep_summary.csv", [axis, "m_x", "c_xx", "c_xy"], finals))
    if axis != "family" and len(finals) > 1:
        order = sorted(finals, key=lambda r: abs(r[0]) if axis == "mu3" else r[0])
        key = "|mu3|" if axis == "mu3" else axis
        for col, name in ((2, "c_xx"), (3, "c_xy")):
            print(f"long-time {name} vs {key}: {_monotone([r[col] for r in order])}")
    if cfg.sweep["mc"]:
        mc_rows_all = []
        for value, traj, _ in results:
            if traj is None:
                continue
            c = cfg.with_axis(axis, value)
            ens = _stage("sweep.mc", run_ensemble, c.params, c.kernel, _mc_config(c, seed, threads))
            mc_rows_all.extend([value, *r] for r in mc_rows(ens))
        files.append(write_csv(out / "sweep_mc.csv", [axis] + MC_COLUMNS, mc_rows_all))
    if failed:
        log.warning("%d sweep point(s) failed: %s", len(failed), failed)
    return files


def table1_ratios(cfg: ExperimentConfig, kappa3, seeds, threads):
    """Long-time ratios pooled over ``seeds`` and the window ``[t_end - window, t_end]``."""
    t1 = cfg.table1
    p = cfg.params
    params = OscillatorParams(p.mu1, p.mu3, p.kappa1, kappa3)
    xs, ys = [], []
    for s in seeds:
        ens = run_ensemble(params, cfg.kernel, _mc_config(cfg, s, threads, t_end=t1["t_end"]))
        keep = ens.times >= t1["t_end"] - t1["window"] - 1e-9
        xs.append(ens.x[:, keep])
        ys.append(ens.y[:, keep])
    snap = Snapshot(float(t1["t_end"]), np.concatenate(xs), np.concatenate(ys))
    return moment_ratios(snap)


def cmd_table1(cfg, out, seed, threads):
    seeds = [seed + i for i in range(cfg.table1["seeds"])]
    rows = []
    for k3 in cfg.table1["kappa3"]:
        r = _stage(f"table1[kappa3={k3}]", table1_ratios, cfg, k3, seeds, threads)
        print(f"kappa3 = {k3:+.2f}: r13 = {r.r13:.3f} +- {r.se_r13:.3f}, "
              f"r31 = {r.r31:.3f} +- {r.se_r31:.3f}")
        rows.append((k3, r.r13, r.r31, r.se_r13, r.se_r31))
    return [write_csv(out / "ratios.csv", RATIO_COLUMNS, rows)]


def cmd_fig12(cfg, out, seed, threads):
    f = cfg.fig12
    k = cfg.kernel_spec
    p = cfg.params
    points = [(fam, mu3, tau) for mu3 in f["mu3_values"] for fam in ("OU", "GaussianFilter")
              for tau in f["tau_values"]]

    def point(item):
        fam, mu3, tau = item
        kernel = kernel_for_correlation_time(fam, tau, k["sigma2"], 0.0, k["mean"])
        params = OscillatorParams(p.mu1, mu3, p.kappa1, f["kappa3"])
        grid = type(cfg.grid)(cfg.grid.t0, f["t_end"], None, cfg.grid.fine_per_coarse)
        traj = solve_diagonal(params, kernel, cfg.initial, grid, cfg.solver)
        row = [fam, mu3, tau, traj.c_xx_diag[-1]]
        if f["mc"]:
            ens = run_ensemble(params, kernel, _mc_config(cfg, seed, 1, t_end=min(f["t_end"], 5.0)))
            row += [ens.c_xx_diag[-1], ens.se_c_xx[-1]]
        return row

    rows = _stage("fig12", _pool_map, point, points, threads)
    header = ["family", "mu3", "tau_corr", "c_xx"] + (["mc_c_xx", "se_mc_c_xx"] if f["mc"] else [])
    by = {(r[0], r[1], r[2]): r[3] for r in rows}
    for mu3 in f["mu3_values"]:
        for tau in f["tau_values"]:
            ou, gf = by[("OU", mu3, tau)], by[("GaussianFilter", mu3, tau)]
            log.info("mu3=%g tau=%g: Gf/OU - 1 = %.4f", mu3, tau, gf / ou - 1)
    return [write_csv(out / "fig12.csv", header, rows)]


COMMANDS = {
    "solve": cmd_solve,
    "field": cmd_field,
    "ito-check": cmd_ito_check,
    "mc": cmd_mc,
    "sweep": cmd_sweep,
    "table1": cmd_table1,
    "fig12": cmd_fig12,
}


def _default_threads():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(THREADS_ENV, f"expected an integer, got {raw!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(
        prog="remoments",
        description="Causal response-excitation moments of a cubic half-oscillator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="experiment config file")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="overrides mc.seed")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker threads, 0 = all cores (default ${THREADS_ENV} or 1)")
        p.add_argument("--verbose", "-v", action="store_true")
    return parser


def _manifest(out, command, cfg, seed, threads, files, started):
    info = {
        "command": command,
        "config": {k: cfg.raw[k] for k in sorted(cfg.raw)},
        "seed": seed,
        "threads": threads,
        "outputs": files,
        "versions": {"remoments": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
        "elapsed_s": round(time.time() - started, 3),
    }
    with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(info, fh, indent=2, sort_keys=True)
        fh.write("\n")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    started = time.time()
    try:
        threads = args.threads if args.threads is not None else _default_threads()
        if threads < 0:
            raise ConfigError("--threads", "must be >= 0")
        threads = threads or os.cpu_count() or 1
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else int(cfg.mc["seed"])
        if not 0 <= seed < 2 ** 64:
            raise ConfigError("--seed", "must fit in 64 unsigned bits")
        args.out.mkdir(parents=True, exist_ok=True)
        files = COMMANDS[args.command](cfg, args.out, seed, threads)
        _manifest(args.out, args.command, cfg, seed, threads, files, started)
    except ConfigError as exc:
        print(f"error [config] {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error [{exc.stage}] {type(exc.error).__name__}: {exc.error}", file=sys.stderr)
        return 1
    except MomentError as exc:
        print(f"error [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    log.info("wrote %s", ", ".join(files))
    return 0


if __name__ == "__main__":
    sys.exit(main())
