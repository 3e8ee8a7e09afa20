#!/usr/bin/env python3
"""Monotonicity constant C* for several models and truncations."""
import argparse

from stochrep.checks import monotonicity_constant
from stochrep.hermite import BasisSpec
from stochrep.models import brownian, constant_model, model_from_lists, ornstein_uhlenbeck, zero_model

MODELS = {
    "zero": zero_model(1),
    "brownian": brownian(1),
    "constant_b1": constant_model([[1.0]], [1.0]),
    "ou": ornstein_uhlenbeck(1),
    "unstable_b+x": model_from_lists(1, [[1.0]], [[[1.0, [1]]]]),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--q", type=float, default=3.0)
    ap.add_argument("--n-max", type=int, nargs="+", default=[16, 32, 64])
    args = ap.parse_args()
    print("model," + ",".join(f"c_star_n{n}" for n in args.n_max))
    for name, model in MODELS.items():
        vals = [monotonicity_constant(model, args.q, BasisSpec(1, n)) for n in args.n_max]
        print(name + "," + ",".join(f"{v:.6g}" for v in vals))


if __name__ == "__main__":
    main()
