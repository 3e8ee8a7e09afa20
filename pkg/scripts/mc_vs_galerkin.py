#!/usr/bin/env python3
"""Monte Carlo forward solution against the Galerkin run at several truncations."""
import argparse

import numpy as np

from stochrep.adjoint import assemble_adjoint
from stochrep.distributions import CompactDistribution
from stochrep.hermite import BasisSpec
from stochrep.models import brownian, ornstein_uhlenbeck
from stochrep.solver import solve_forward_galerkin, solve_forward_mc, stable_step


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", choices=["brownian", "ou"], default="ou")
    ap.add_argument("--t", type=float, default=1.0)
    ap.add_argument("--M", type=int, default=20_000)
    ap.add_argument("--dt", type=float, default=1 / 200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-max", type=int, nargs="+", default=[64, 128, 256, 512])
    args = ap.parse_args()

    model = brownian(1) if args.model == "brownian" else ornstein_uhlenbeck(1)
    psi = CompactDistribution.delta([0.0])
    basis = BasisSpec(1, 16)
    mc = solve_forward_mc(psi, model, args.t, args.M, args.dt, basis, args.seed)
    print("n_max,galerkin_dt,max_z_vs_mc,max_abs_diff")
    for n in args.n_max:
        big = BasisSpec(1, n)
        G = assemble_adjoint(model, big)
        h = 2.0 ** np.floor(np.log2(min(stable_step(G.L), args.t / 4)))
        c = solve_forward_galerkin(psi, model, args.t, big, dt=h, galerkin=G).at(args.t).coeffs[: basis.size]
        diff = np.abs(c - mc.mean[0])
        print(f"{n},{h:.3g},{np.max(diff / mc.se[0]):.2f},{diff.max():.3e}")


if __name__ == "__main__":
    main()
