"""Command-line front end.

    nashadapt --scenario example1 --out runs/ex1 --report
    nashadapt --config my.yaml --override alpha=10 --seeds 0..7

Exit status: 0 converged, 2 not converged, 1 validation or runtime error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import format_report, run_report
from .config import PRESET_NAMES, RunConfig, dump_config, load_scenarios, raw_config
from .errors import NashAdaptError, UnknownFigure
from .sim import find_convergence_time, integrate

log = logging.getLogger("nashadapt")

FIGURES = ("outputs", "controls", "generator", "parameters", "plane")
EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


def _write_columns(path, header, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in np.column_stack(columns):
            w.writerow([repr(float(v)) for v in row])


def emit_plot_data(trajs, which, out_dir) -> Path:
    """Write the columnar data behind one figure; returns the file path.

    ``trajs`` is the list of per-coordinate trajectories of one run.
    """
    if which not in FIGURES:
        raise UnknownFigure(f"unknown figure {which!r}; choose from {FIGURES}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"plot_{which}.csv"
    multi = len(trajs) > 1

    def tag(c):
        return f"_c{c + 1}" if multi else ""

    t = trajs[0].times
    header, cols = ["t"], [t]
    if which == "plane":
        if len(trajs) != 2:
            raise UnknownFigure("plane data needs a two-coordinate scenario")
        n = trajs[0].n_players
        for i in range(n):
            header += [f"y_{i + 1}_x", f"y_{i + 1}_y"]
            cols += [trajs[0].y[:, i], trajs[1].y[:, i]]
        for i in range(n):
            header += [f"ystar_{i + 1}_x", f"ystar_{i + 1}_y"]
            cols += [np.full_like(t, trajs[0].y_star[i]), np.full_like(t, trajs[1].y_star[i])]
    else:
        for c, tr in enumerate(trajs):
            if which == "outputs":
                data, names = tr.y, [f"y_{i + 1}" for i in range(tr.n_players)]
            elif which == "controls":
                data, names = tr.u, [f"u_{i + 1}" for i in range(tr.n_players)]
            elif which == "generator":
                data, names = tr.z_own, [f"z_{i + 1}" for i in range(tr.n_players)]
            else:
                data = tr.theta_hat
                names = [f"theta_hat_{i + 1}_{j + 1}" for i, a in enumerate(tr.scenario.agents)
                         for j in range(a.n_params)]
            header += [name + tag(c) for name in names]
            cols += list(data.T)
    _write_columns(path, header, cols)
    return path


def run(cfg: RunConfig, tol=None, report=False, figures=(), dt=None, t_end=None) -> int:
    """Load, integrate and write outputs for one run; returns the exit status."""
    out = Path(cfg.output_dir)
    try:
        overrides = dict(cfg.overrides)
        if dt is not None:
            overrides["dt"] = dt
        if t_end is not None:
            overrides["t_end"] = t_end
        cfg = RunConfig(cfg.scenario, overrides, cfg.seed, cfg.output_dir, cfg.decimation)
        raw = raw_config(cfg)
        scenarios = load_scenarios(cfg)
        trajs = [integrate(s) for s in scenarios]
    except NashAdaptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: [nashadapt] {exc}", file=sys.stderr)
        return EXIT_ERROR

    out.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    report_lines = []
    for c, (s, tr) in enumerate(zip(scenarios, trajs)):
        name = "trajectory.csv" if len(trajs) == 1 else f"trajectory_c{c + 1}.csv"
        tr.to_csv(out / name)
        run_tol = s.meta.get("tol", 1e-2) if tol is None else tol
        if find_convergence_time(tr, run_tol) is None:
            status = EXIT_NOT_CONVERGED
        report_lines.append(format_report(run_report(tr, run_tol)))
    text = "\n".join(report_lines)
    (out / "report.txt").write_text(text)
    s0 = scenarios[0]
    meta = {
        "version": __version__,
        "scenario": cfg.scenario,
        "seed": s0.seed,
        "dt": s0.dt,
        "t_end": s0.t_end,
        "decimation": s0.decimation,
        "config_hash": ",".join(s.fingerprint() for s in scenarios),
        "overrides": ";".join(f"{k}={v}" for k, v in cfg.overrides.items()),
    }
    (out / "meta.txt").write_text("".join(f"{k} = {v}\n" for k, v in meta.items()))
    (out / "config.yaml").write_text(dump_config(raw))
    try:
        for which in figures:
            emit_plot_data(trajs, which, out)
    except UnknownFigure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if report:
        print(text, end="")
    return status


def _parse_seeds(text):
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(s) for s in text.split(",")]


def _run_seed(args):
    cfg, seed, kwargs = args
    sub = RunConfig(cfg.scenario, cfg.overrides, seed, str(Path(cfg.output_dir) / f"seed_{seed}"),
                    cfg.decimation)
    return seed, run(sub, **kwargs)


def build_parser():
    p = argparse.ArgumentParser(prog="nashadapt", description=__doc__.split("\n")[0] or None)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scenario", default=None, help=f"preset: {', '.join(PRESET_NAMES)}")
    src.add_argument("--config", default=None, help="path to a YAML scenario file")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry (repeatable)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--seeds", default=None, help="batch of seeds, 'a..b' or 'a,b,c'")
    p.add_argument("--out", default="out")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--decimation", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--report", action="store_true", help="print the analysis report")
    p.add_argument("--emit-plots", nargs="*", default=None, metavar="FIGURE",
                   help=f"write plot data ({', '.join(FIGURES)}); no value writes all that apply")
    p.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {}
    for item in args.override:
        if "=" not in item:
            print(f"error: [cli] --override expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return EXIT_ERROR
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    cfg = RunConfig(scenario=args.config or args.scenario or "example1", overrides=overrides,
                    seed=args.seed, output_dir=args.out, decimation=args.decimation)
    if args.dump_config:
        try:
            print(dump_config(raw_config(cfg)), end="")
        except NashAdaptError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR
        return EXIT_OK

    figures = ()
    if args.emit_plots is not None:
        figures = args.emit_plots or _default_figures(cfg)
    kwargs = dict(tol=args.tol, report=args.report, figures=tuple(figures), dt=args.dt,
                  t_end=args.t_end)
    if args.seeds is None:
        return run(cfg, **kwargs)

    seeds = _parse_seeds(args.seeds)
    jobs = [(cfg, seed, kwargs) for seed in seeds]
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        results = dict(pool.map(_run_seed, jobs))
    for seed in seeds:
        print(f"seed {seed}: exit {results[seed]}")
    return max(results.values())


def _default_figures(cfg):
    try:
        coords = int(raw_config(cfg).get("coordinates", 1))
    except NashAdaptError:
        coords = 1
    figs = ["outputs", "controls", "generator", "parameters"]
    return figs + ["plane"] if coords == 2 else figs


if __name__ == "__main__":
    sys.exit(main())
