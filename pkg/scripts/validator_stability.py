#!/usr/bin/env python3
"""C0 and C1 at several truncation levels and seeds.

    python3 scripts/validator_stability.py --gamma -1 --D 4 6 8 --seeds 0 1 2
"""

import argparse

from landau_lab.coefficients import CoefficientField, PotentialConfig
from landau_lab.estimates import validate_coercivity, validate_prop31


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--gamma", type=float, default=-1.0)
    p.add_argument("--D", type=int, nargs="+", default=[4, 6, 8])
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--n-samples", type=int, default=100)
    p.add_argument("--m-max", type=int, default=2)
    p.add_argument("--cache-dir", default=".landau_cache")
    args = p.parse_args()

    field = CoefficientField.cached(PotentialConfig(args.gamma), args.cache_dir)
    print("seed,D,C0,C0_beta_ge_2,C1,C1_space_min")
    for seed in args.seeds:
        for D in args.D:
            p31 = validate_prop31(field, D, args.n_samples, args.m_max, seed=seed)
            coer = validate_coercivity(field, D, args.n_samples, seed=seed)
            space = min(coer.constants["space_min"].values())
            print(f"{seed},{D},{p31.constants['C0']:.6g},{p31.constants['C0_beta_ge_2']:.6g},{coer.constants['C1']:.6g},{space:.6g}", flush=True)


if __name__ == "__main__":
    main()
