#!/usr/bin/env python3
"""Run the pipeline over several gammas and collect the headline numbers in one CSV.

    python3 scripts/gamma_sweep.py --gammas -0.5 -1 -1.5 -2 -2.5 --out sweep
"""

import argparse
import csv
import json
from pathlib import Path

from landau_lab.cli import run
from landau_lab.io import fmt


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--gammas", type=float, nargs="+", default=[-0.5, -1.0, -1.5, -2.0, -2.5])
    p.add_argument("--out", default="sweep")
    p.add_argument("--config", default=None)
    args = p.parse_args()

    out = Path(args.out)
    argv = ["pipeline", f"--gamma-sweep={','.join(map(str, args.gammas))}", "--output-dir", str(out)]
    if args.config:
        argv += ["--config", args.config]
    code = run(argv)
    if code:
        raise SystemExit(code)

    rows = []
    for g in args.gammas:
        d = out / f"gamma_{fmt(float(g))}"
        sm = json.loads((d / "smoothing" / "smoothing.json").read_text())
        est = json.loads((d / "estimates" / "summary.json").read_text())
        rows.append(
            {
                "gamma": g,
                "C_hat": sm["C_hat"],
                "aggregate_worst_ratio": sm["aggregate_worst_ratio"],
                "slope_100": sm["slopes"].get("1-0-0"),
                "slope_200": sm["slopes"].get("2-0-0"),
                "C0": est["C0"],
                "C1": est["C1"],
                "lemma22_max_ratio": est["lemma22_max_ratio"],
                "energy_margin": est["energy_margin"],
            }
        )
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print((out / "sweep.csv").read_text())


if __name__ == "__main__":
    main()
