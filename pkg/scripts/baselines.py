"""Smallest successful rho of IGD against full GD and SGD on a shared grid.

    python scripts/baselines.py --problem rms
"""

import argparse
import json

from incopt.harness import compare_baselines
from incopt.instances import generate_rms, generate_rpr


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--problem", choices=["rpr", "rms"], default="rms")
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    inst = generate_rpr(seed=1) if args.problem == "rpr" else generate_rms(seed=7)
    rep = compare_baselines(inst, kinds=("igd", "gd", "sgd"), seeds=args.seeds)
    print(json.dumps({"smallest_rho": rep.smallest_rho, "winning_mu0_times_m": rep.winning_mu0}, indent=2))
    print("IGD < GD:", rep.ordered("igd", "gd"), " IGD < SGD:", rep.ordered("igd", "sgd"))


if __name__ == "__main__":
    main()
