"""Distance-vs-epoch curves at rho = 0.8 for IGD / IPL / IPP (plus the rate fit).

    python scripts/convergence.py --problem rpr --out results/convergence
"""

import argparse
import math
from pathlib import Path

from incopt.artifacts import emit_trace_csv, plot_convergence
from incopt.harness import cell_schedule, fit_linear_rate, success_metric
from incopt.instances import generate_rms, generate_rpr
from incopt.solvers import initial_point, run

MU0 = {"igd": 2.0, "ipl": 3.0, "ipp": 2.0}  # mu0 * m, inside the success region for both problems


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--problem", choices=["rpr", "rms"], default="rpr")
    ap.add_argument("--rho", type=float, default=0.8)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--out", default="results/convergence")
    args = ap.parse_args()

    inst = generate_rpr(seed=1) if args.problem == "rpr" else generate_rms(seed=7)
    x0 = initial_point(inst.dim, 0)
    out = Path(args.out)
    traces = []
    for kind, c in MU0.items():
        tr = run(kind, inst.problem, cell_schedule(kind, c, args.rho, inst.m), x0=x0,
                 epochs=args.epochs, distance=inst.distance,
                 config={"problem": args.problem, "solver": kind, "mu0_times_m": c, "rho": args.rho})
        emit_trace_csv(tr, out / f"{args.problem}_{kind}.csv")
        fit = fit_linear_rate(tr)
        print(f"{kind}: success {success_metric(tr)}, slope {fit.slope_log10:.4f} "
              f"(log10 rho = {math.log10(args.rho):.4f}), R^2 {fit.r_squared:.4f}")
        traces.append(tr)
    plot_convergence(traces, out / f"{args.problem}.svg", labels=list(MU0))


if __name__ == "__main__":
    main()
