"""Command-line driver: ``landau-lab <command> [--config FILE] [overrides]``.

Commands: coeffs, assemble, evolve, verify-smoothing, validate-estimates,
pipeline. ``--gamma-sweep`` repeats the command once per gamma, each into its
own subdirectory. Exit codes: 0 success, 2 configuration error, 3 numerical
tolerance failure, 4 capacity/headroom error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .coefficients import (
    CoefficientField,
    lemma21_probe,
    moment_ratio_bounds,
    potential_probe,
    probe_points,
)
from .config import RunConfig, load_config
from .errors import ConfigError, InsufficientDataError, LandauLabError
from .estimates import validate_coercivity, validate_energy, validate_lemma22, validate_prop31
from .evolution import EvolutionTrace, default_times, evolve_exact
from .galerkin import GalerkinSystem, anorm_matrix, assemble
from .io import config_hash, fmt, write_csv, write_json
from .smoothing import first_derivative_bound, fit_analytic_constant, rough_datum

log = logging.getLogger("landau_lab")

COMMANDS = ("coeffs", "assemble", "evolve", "verify-smoothing", "validate-estimates", "pipeline")


def snapshot_times(cfg: RunConfig) -> np.ndarray:
    """0, geometric snapshots in [t_min, T], and t = 0.5 when inside the horizon."""
    t = default_times(cfg.T, cfg.n_snapshots, cfg.t_min)
    if cfg.T >= 0.5:
        t = np.union1d(t, [0.5])
    return t


class Run:
    """Lazily built artifacts for one configuration; every writer goes through here."""

    def __init__(self, cfg: RunConfig, out: Path, command: str):
        self.cfg = cfg
        self.out = out
        self.command = command

    def prov(self, **extra) -> dict:
        return {
            "config_hash": config_hash(self.cfg.physics()),
            "package_version": __version__,
            "numpy_version": np.__version__,
            "scipy_version": scipy.__version__,
            "gamma": self.cfg.gamma,
            **extra,
        }

    @cached_property
    def field(self) -> CoefficientField:
        return CoefficientField.cached(self.cfg.potential, self.cfg.cache_dir, r_max=self.cfg.r_max, tol=self.cfg.quad_tol)

    def system(self, D: int) -> GalerkinSystem:
        cache = self.__dict__.setdefault("_systems", {})
        if D not in cache:
            key = config_hash({"field": self.field.cache_key(), "D": D})
            path = Path(self.cfg.cache_dir) / f"galerkin_D{D}_{key}.bin"
            if path.exists():
                cache[D] = GalerkinSystem.load(path)
            else:
                cache[D] = assemble(D, self.field)
                cache[D].save(path)
        return cache[D]

    @cached_property
    def datum(self):
        return rough_datum(self.cfg.D, self.cfg.seed)

    def trace(self, D: int) -> EvolutionTrace:
        cache = self.__dict__.setdefault("_traces", {})
        if D not in cache:
            cache[D] = evolve_exact(self.system(D), self.datum.pad(D), snapshot_times(self.cfg))
        return cache[D]

    # commands ---------------------------------------------------------------
    def coeffs(self) -> dict:
        cfg = self.cfg
        field = self.field
        reloaded = CoefficientField.cached(cfg.potential, cfg.cache_dir, r_max=cfg.r_max, tol=cfg.quad_tol)
        exact = bool(np.array_equal(reloaded.table, field.table) and np.array_equal(reloaded.radii, field.radii))
        d = self.out / "coeffs"
        rows = zip(field.radii, *field.table.T)
        write_csv(d / "profiles.csv", ["r", "l1", "l2", "dl1", "dl2"], rows, self.prov(command="coeffs"))
        pts = probe_points(cfg.probe_points, cfg.probe_radius, cfg.seed)
        probe = lemma21_probe(pts, cfg.potential, 6, tol=1e-10)
        refined = lemma21_probe(pts, cfg.potential, 6, tol=1e-12, h0=0.025)
        lo, hi = moment_ratio_bounds(cfg.potential, np.linspace(0.0, cfg.probe_radius, 7), cfg.quad_tol)
        summary = {
            "provenance": self.prov(command="coeffs"),
            "field": field.cache_key(),
            "profile_residual": field.residual,
            "endpoint_rule_engaged": cfg.potential.strong_endpoint,
            "cache_roundtrip_exact": exact,
            "lemma21": {
                "per_order_max_ratio": {str(k): v for k, v in probe.items()},
                "growth_over_first_order": max(probe.values()) / probe[1],
                "refinement_change": max(abs(refined[k] / probe[k] - 1) for k in probe),
                "probe_points": cfg.probe_points,
                "probe_radius": cfg.probe_radius,
            },
            "potential_over_weight_max": potential_probe(pts, field),
            "moment_ratio_bounds": [lo, hi],
        }
        write_json(d / "probes.json", summary)
        return summary

    def assemble(self) -> dict:
        S = self.system(self.cfg.D)
        d = self.out / "assemble"
        S.save(d / f"system_D{S.D}.bin")
        summary = {
            "provenance": self.prov(command="assemble"),
            "D": S.D,
            "size": S.size,
            "invariants": S.invariant_residuals(),
            "spectral_gap": S.spectral_gap(),
        }
        write_json(d / f"system_D{S.D}.json", summary)
        return summary

    def evolve(self) -> dict:
        tr = self.trace(self.cfg.D)
        tr.write(self.out / "evolve", self.prov(command="evolve", D=tr.D, seed=self.cfg.seed), stem=f"trace_D{tr.D}")
        return {"D": tr.D, "energy_identity_residual": tr.energy_residual(), "monotone": tr.is_monotone()}

    def verify_smoothing(self) -> dict:
        cfg = self.cfg
        tr = self.trace(cfg.D)
        ref = self.trace(2 * cfg.D)
        rep = fit_analytic_constant(tr, cfg.m_max, reference=ref, resolve_tol=cfg.resolve_tol, window=cfg.window)
        bound = first_derivative_bound(tr, anorm_matrix(cfg.D + 1, self.field))
        rep.meta["first_derivative_energy"] = bound.summary()
        rep.meta["seed"] = cfg.seed
        rep.write(self.out / "smoothing", self.prov(command="verify-smoothing", D=cfg.D, seed=cfg.seed))
        if not np.any(rep.resolved[1:]):
            raise InsufficientDataError("no resolved (m, t) cell with m >= 1; raise D or change the snapshot schedule")
        return rep.summary()

    def validate_estimates(self) -> dict:
        cfg = self.cfg
        d = self.out / "estimates"
        De = cfg.estimate_D
        p = self.prov(command="validate-estimates", seed=cfg.seed)
        l22 = validate_lemma22(self.field, De, cfg.n_samples, cfg.beta_max, seed=cfg.seed)
        l22.write(d, p)
        p31 = validate_prop31(self.field, De, cfg.n_samples, cfg.estimate_m_max, seed=cfg.seed)
        p31.write(d, p)
        coer = validate_coercivity(self.field, De, cfg.n_samples, seed=cfg.seed)
        coer.write(d, p)
        energy = validate_energy(self.trace(cfg.D), p31.constants["C0"], self.field)
        energy.write(d, p)
        summary = {
            "lemma22_max_ratio": l22.constants["max_ratio"],
            "C0": p31.constants["C0"],
            "C0_beta_ge_2": p31.constants["C0_beta_ge_2"],
            "C0_remark1": p31.constants["C0_remark1"],
            "remark2_c": p31.constants["remark2_c"],
            "C1": coer.constants["C1"],
            "energy_margin": energy.constants["margin"],
            "energy_holds": energy.constants["holds"],
            "energy_identity_residual": energy.constants["identity_residual"],
        }
        write_json(d / "summary.json", {"provenance": p, **summary})
        return summary

    def execute(self) -> dict:
        steps = {
            "coeffs": [self.coeffs],
            "assemble": [self.assemble],
            "evolve": [self.evolve],
            "verify-smoothing": [self.verify_smoothing],
            "validate-estimates": [self.validate_estimates],
            "pipeline": [self.coeffs, self.assemble, self.evolve, self.verify_smoothing, self.validate_estimates],
        }[self.command]
        results = {}
        for step in steps:
            log.info("%s (gamma=%g)", step.__name__, self.cfg.gamma)
            results[step.__name__] = step()
        write_json(
            self.out / "manifest.json",
            {"provenance": self.prov(command=self.command), "config": self.cfg.physics(), "steps": list(results)},
        )
        return results


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="landau-lab", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--gamma", type=float)
    p.add_argument("--D", type=int, dest="D")
    p.add_argument("--m-max", type=int, dest="m_max")
    p.add_argument("--T", type=float, dest="T")
    p.add_argument("--n-snapshots", type=int, dest="n_snapshots")
    p.add_argument("--seed", type=int)
    p.add_argument("--estimate-D", type=int, dest="estimate_D")
    p.add_argument("--estimate-m-max", type=int, dest="estimate_m_max")
    p.add_argument("--n-samples", type=int, dest="n_samples")
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--gamma-sweep", type=str, help="comma-separated gammas, e.g. -0.5,-1,-1.5,-2,-2.5")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _parse_sweep(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"bad --gamma-sweep list {text!r}") from e
    if not vals:
        raise ConfigError("--gamma-sweep is empty")
    return vals


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    keys = ("gamma", "D", "m_max", "T", "n_snapshots", "seed", "estimate_D", "estimate_m_max", "n_samples", "cache_dir", "output_dir")
    overrides = {k: getattr(args, k) for k in keys}
    try:
        cfg = load_config(args.config, overrides)
        if args.gamma_sweep:
            jobs = [(cfg.with_overrides(gamma=g), Path(cfg.output_dir) / f"gamma_{fmt(float(g))}") for g in _parse_sweep(args.gamma_sweep)]
        else:
            jobs = [(cfg, Path(cfg.output_dir))]
        report = {}
        for c, out in jobs:
            report[repr(c.gamma)] = Run(c, out, args.command).execute()
        print(json.dumps(report, sort_keys=True, indent=2, default=_default))
        return 0
    except LandauLabError as e:
        print(json.dumps({**e.to_json(), "exit_code": e.exit_code}, sort_keys=True), file=sys.stderr)
        return e.exit_code


def _default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
