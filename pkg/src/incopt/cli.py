"""Command-line entry point: ``incopt <subcommand> --config cfg.json``.

Subcommands: generate, run, grid, moreau, plot, calibrate.  Outputs go to
``--out``, else $INCOPT_OUT, else ./results.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from incopt import __version__
from incopt.artifacts import (
    emit_map, emit_trace_csv, parse_map_csv, parse_trace_csv, plot_convergence, write_meta,
)
from incopt.config import ConfigError, ExperimentConfig
from incopt.harness import calibrate_alpha, grid_search
from incopt.instances import generate, load_instance, save_instance
from incopt.problem import estimate_tau
from incopt.solvers import Constant, Geometric, OrderKind, OrderPolicy, constant_schedule, \
    geometric_schedule, initial_point, run
from incopt.stationarity import MoreauTracker

log = logging.getLogger("incopt")

OUT_ENV = "INCOPT_OUT"


def _out_dir(args):
    out = Path(args.out or os.environ.get(OUT_ENV) or "results")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required for this subcommand")
    if not Path(args.config).exists():
        raise FileNotFoundError(f"config file {args.config} not found")
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.instance = dict(cfg.instance, seed=args.seed)
    return cfg


def build_instance(cfg: ExperimentConfig):
    spec = cfg.instance
    if "path" in spec:
        return load_instance(spec["path"])
    return generate(spec["kind"], seed=spec.get("seed", 0), **spec.get("args", {}))


def build_schedule(cfg: ExperimentConfig, instance):
    s = cfg.schedule
    m = instance.problem.m
    if s["type"] == "constant":
        return constant_schedule(m, s.get("N", cfg.epochs))
    if s["type"] == "geometric":
        return Geometric(s["mu0_times_m"] / m, s["rho"])
    tau = s.get("tau") or estimate_tau(instance)
    alpha, L = s.get("alpha", "calibrated"), s.get("lipschitz")
    if alpha == "calibrated" or L is None:
        cal = calibrate_alpha(instance, seed=cfg.instance.get("seed", 0))
        alpha = cal.alpha if alpha == "calibrated" else alpha
        L = L or max(cal.lipschitz, alpha)
    mu0 = s["mu0_times_m"] / m if s.get("mu0_times_m") else None
    return geometric_schedule(alpha, tau, L, m, mu0=mu0, rho=s.get("rho"))


def _schedule_snapshot(schedule):
    if isinstance(schedule, Constant):
        return {"type": "constant", "mu": schedule.mu}
    return {"type": "geometric", "mu0": schedule.mu0, "rho": schedule.rho}


def _run(cfg, instance, with_moreau=False):
    problem = instance.problem
    schedule = build_schedule(cfg, instance)
    order = OrderPolicy(OrderKind(cfg.order.get("kind", "cyclic")), cfg.order.get("seed", 0))
    moreau = None
    if with_moreau or "moreau" in cfg.metrics:
        moreau = MoreauTracker(problem, tau_hat=cfg.tau_hat, tau=estimate_tau(instance))
    snapshot = dict(cfg.to_dict(), resolved_schedule=_schedule_snapshot(schedule))
    return run(cfg.solver, problem, schedule, order=order, x0=initial_point(problem.dim, cfg.x0_seed),
               epochs=cfg.epochs, distance=instance.distance if "dist" in cfg.metrics else None,
               track_fval="fval" in cfg.metrics, moreau=moreau, threshold=cfg.threshold,
               window=cfg.window, config=snapshot)


def cmd_generate(args):
    cfg = _config(args)
    inst = build_instance(cfg)
    path = _out_dir(args) / cfg.outputs.get("instance", "instance.npz")
    save_instance(inst, path)
    write_meta(path, cfg.to_dict())
    print(path)


def cmd_run(args):
    cfg = _config(args)
    trace = _run(cfg, build_instance(cfg))
    path = _out_dir(args) / cfg.outputs.get("trace", "trace.csv")
    emit_trace_csv(trace, path)
    print(f"{path}: {trace.status.value} after {len(trace)} epochs")


def cmd_moreau(args):
    cfg = _config(args)
    trace = _run(cfg, build_instance(cfg), with_moreau=True)
    path = _out_dir(args) / cfg.outputs.get("moreau", "moreau.csv")
    emit_trace_csv(trace, path)
    g = trace.moreau_grad_norm
    best = float(np.nanmin(g)) if np.any(np.isfinite(g)) else float("nan")
    print(f"{path}: min Moreau grad norm {best:.6g}")


def cmd_grid(args):
    cfg = _config(args)
    inst = build_instance(cfg)
    workers = args.threads or cfg.grid.workers
    smap = grid_search(cfg.solver, inst, cfg.grid.rho, cfg.grid.mu0_times_m, epochs=cfg.epochs,
                       x0_seed=cfg.x0_seed, workers=workers, threshold=cfg.threshold,
                       window=cfg.window, seeds=cfg.grid.seeds, config=cfg.to_dict())
    path = _out_dir(args) / cfg.outputs.get("map", "map.csv")
    emit_map(smap, path, "csv")
    print(f"{path}: {int(smap.cells.sum())}/{smap.cells.size} cells succeed")


def cmd_calibrate(args):
    cfg = _config(args)
    inst = build_instance(cfg)
    cal = calibrate_alpha(inst, seed=cfg.instance.get("seed", 0))
    doc = dict(dataclasses.asdict(cal), tau=estimate_tau(inst), version=__version__, config=cfg.to_dict())
    path = _out_dir(args) / cfg.outputs.get("calibration", "calibration.json")
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"{path}: alpha_hat = {cal.alpha:.6g}, L_hat = {cal.lipschitz:.6g}, sharp = {cal.sharp}")


def cmd_plot(args):
    out = _out_dir(args)
    if not args.inputs:
        raise ConfigError("plot needs at least one input CSV")
    for p in args.inputs:
        if not Path(p).exists():
            raise FileNotFoundError(f"{p} not found")
    # maps each get a heatmap; all traces share one convergence plot
    traces = []
    for p in args.inputs:
        with open(p) as fh:
            header = fh.readline().strip()
        if header.startswith("rho,"):
            target = out / (Path(p).stem + ".svg")
            emit_map(parse_map_csv(p), target, "svg")
            print(target)
        else:
            traces.append(p)
    if traces:
        target = out / (args.name or "convergence.svg")
        plot_convergence([parse_trace_csv(p) for p in traces], target,
                         labels=[Path(p).stem for p in traces], metric=args.metric)
        print(target)


COMMANDS = {
    "generate": cmd_generate, "run": cmd_run, "grid": cmd_grid,
    "moreau": cmd_moreau, "plot": cmd_plot, "calibrate": cmd_calibrate,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="override the instance seed")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
    common.add_argument("--threads", type=int, help="worker threads for grid searches")
    common.add_argument("--verbose", "-v", action="store_true")
    p = argparse.ArgumentParser(prog="incopt", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "plot":
            sp.add_argument("inputs", nargs="*", help="map or trace CSV files")
            sp.add_argument("--metric", default="dist", choices=["dist", "fval", "moreau_grad_norm"])
            sp.add_argument("--name", help="file name of the convergence plot")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        COMMANDS[args.command](args)
    except (ConfigError, ValueError, TypeError, FileNotFoundError, OSError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
