"""Running-min Moreau stationarity under the constant stepsize 1/(m sqrt(N+1)).

    python scripts/constant_step.py --budgets 100 400 1600

Prints, per solver and budget N, the running minimum of the Moreau gradient
norm, the epoch where it was attained and the final distance.
"""

import argparse

import numpy as np

from incopt.instances import generate_rpr
from incopt.solvers import constant_schedule, initial_point, run
from incopt.stationarity import MoreauTracker


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--budgets", type=int, nargs="+", default=[100, 400])
    ap.add_argument("--solvers", nargs="+", default=["igd", "ipl", "ipp"])
    ap.add_argument("--n", type=int, default=30)
    ap.add_argument("--m", type=int, default=300)
    args = ap.parse_args()

    inst = generate_rpr(n=args.n, m=args.m, seed=1)
    P = inst.problem
    x0 = initial_point(P.dim, 0)
    for kind in args.solvers:
        for N in args.budgets:
            tr = run(kind, P, constant_schedule(P.m, N), x0=x0, epochs=N, distance=inst.distance,
                     track_fval=False, moreau=MoreauTracker(P))
            g = tr.moreau_grad_norm
            k = int(np.nanargmin(g))
            print(f"{kind} N={N}: min grad {g[k]:.4g} at epoch {k + 1}, final dist {tr.dist[-1]:.3g}", flush=True)


if __name__ == "__main__":
    main()
