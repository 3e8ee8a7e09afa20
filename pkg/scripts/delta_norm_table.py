#!/usr/bin/env python3
"""Series and Mehler-integral values of the squared -p norm of delta_x, with the series tail trend."""
import argparse

import numpy as np

from stochrep.hermite import delta_norm_mehler, delta_norm_series


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", type=int, default=1)
    ap.add_argument("--p", type=float, nargs="+", default=[0.75, 1.0, 2.0])
    ap.add_argument("--x", type=float, nargs="+", default=[0.0, 1.0, 2.0])
    ap.add_argument("--n-max", type=int, nargs="+", default=[128, 512, 2048])
    args = ap.parse_args()

    print("p,x," + ",".join(f"rel_diff_n{n}" for n in args.n_max) + ",mehler")
    for p in args.p:
        for x in args.x:
            xv = np.zeros(args.d)
            xv[0] = x
            if p <= args.d / 4:
                print(f"{p},{x}," + ",".join("divergent" for _ in args.n_max) + ",inf")
                continue
            ref = delta_norm_mehler(xv, p)
            rel = [abs(delta_norm_series(xv, p, n) - ref) / ref for n in args.n_max]
            print(f"{p},{x}," + ",".join(f"{r:.3e}" for r in rel) + f",{ref:.12g}")


if __name__ == "__main__":
    main()
