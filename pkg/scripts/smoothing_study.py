#!/usr/bin/env python3
"""Short-time behaviour of the weighted derivative norms for one rough datum.

Prints the resolved map (orders x times), local log-slopes between
neighbouring snapshots, and least-squares slopes over several windows.

    python3 scripts/smoothing_study.py --gamma -1 --D 10 --m-max 3
"""

import argparse

import numpy as np

from landau_lab.cli import snapshot_times
from landau_lab.coefficients import CoefficientField, PotentialConfig
from landau_lab.config import RunConfig
from landau_lab.errors import InsufficientDataError
from landau_lab.evolution import evolve_exact
from landau_lab.galerkin import assemble
from landau_lab.smoothing import fit_analytic_constant, rough_datum


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--gamma", type=float, default=-1.0)
    p.add_argument("--D", type=int, default=10)
    p.add_argument("--m-max", type=int, default=3)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--cache-dir", default=".landau_cache")
    args = p.parse_args()

    cfg = RunConfig(gamma=args.gamma, D=args.D, m_max=args.m_max, seed=args.seed)
    field = CoefficientField.cached(PotentialConfig(cfg.gamma), args.cache_dir)
    times = snapshot_times(cfg)
    f0 = rough_datum(cfg.D, cfg.seed)
    tr = evolve_exact(assemble(cfg.D, field), f0, times)
    ref = evolve_exact(assemble(2 * cfg.D, field), f0.pad(2 * cfg.D), times)
    rep = fit_analytic_constant(tr, cfg.m_max, reference=ref)

    print("resolved cells (rows m = 0..m_max, '#' resolved):")
    for m, row in enumerate(rep.resolved):
        print(f"  m={m} " + "".join("#" if r else "." for r in row))
    print(f"  t from {rep.times[0]:.1e} to {rep.times[-1]:.2f}")

    print("\nlocal log-slopes along the first axis:")
    for m in range(1, cfg.m_max + 1):
        i = rep.index((m, 0, 0))
        s = np.diff(np.log(rep.raw[i])) / np.diff(np.log(rep.times))
        mids = np.sqrt(rep.times[1:] * rep.times[:-1])
        picks = np.searchsorted(mids, [1e-3, 1e-2, 0.1, 0.3, 1.0]).clip(0, len(s) - 1)
        print(f"  m={m}: " + "  ".join(f"t~{mids[k]:.0e}: {s[k]:+.2f}" for k in picks))

    print("\nleast-squares slopes on resolved points:")
    for window in [(0.0, 1.0), (0.01, 1.0), (0.1, 1.0), (0.1, 0.5)]:
        parts = []
        for a in [(1, 0, 0), (2, 0, 0), (1, 1, 0)]:
            try:
                parts.append(f"{a}: {rep.slope(a, window):+.3f}")
            except InsufficientDataError:
                parts.append(f"{a}: n/a")
        print(f"  window {window}: " + ", ".join(parts))


if __name__ == "__main__":
    main()
