"""Success maps of IGD / IPL / IPP over (rho, mu0) for RMS and RPR.

    python scripts/success_maps.py --out results/maps --threads 8

Writes one CSV and one SVG heatmap per (problem, solver).  The full default
grid at paper scale takes a while; ``--quick`` uses a 5 x 5 grid.
"""

import argparse
import time
from pathlib import Path

import numpy as np

from incopt.artifacts import emit_map
from incopt.harness import DEFAULT_MU0_GRID, DEFAULT_RHO_GRID, grid_search
from incopt.instances import generate_rms, generate_rpr


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results/maps")
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--epochs", type=int, default=500)
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--solvers", nargs="+", default=["igd", "ipl", "ipp"])
    args = ap.parse_args()

    rho, mu0 = DEFAULT_RHO_GRID, DEFAULT_MU0_GRID
    if args.quick:
        rho, mu0 = np.linspace(0.65, 0.95, 5), np.array([1.0, 2.0, 5.0, 20.0, 100.0])
    out = Path(args.out)
    problems = {"rpr": generate_rpr(seed=1), "rms": generate_rms(seed=7)}
    for name, inst in problems.items():
        for kind in args.solvers:
            t = time.time()
            smap = grid_search(kind, inst, rho, mu0, epochs=args.epochs, workers=args.threads,
                               config={"problem": name})
            emit_map(smap, out / f"{name}_{kind}.csv")
            emit_map(smap, out / f"{name}_{kind}.svg")
            print(f"{name} {kind}: smallest rho {smap.smallest_successful_rho()}, "
                  f"{int(smap.cells.sum())}/{smap.cells.size} cells, {time.time() - t:.0f}s")


if __name__ == "__main__":
    main()
