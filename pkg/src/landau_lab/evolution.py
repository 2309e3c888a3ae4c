"""Propagation of d_t f = -B f.

The exact propagator comes from one symmetric eigendecomposition
B = V diag(lam) V^T; the dissipated energy and time integrals of quadratic
forms then have closed forms. Implicit one-step schemes exist to cross-check
the exact propagator.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import CapacityError, InvariantError
from .galerkin import GalerkinSystem
from .hermite import SpectralFunction
from .io import fmt, write_csv, write_json


def default_times(T: float, n: int = 40, t_min: float = 1e-4) -> np.ndarray:
    """0 followed by n geometrically spaced times in [t_min, T]."""
    if T <= 0:
        raise ValueError("T must be > 0")
    return np.concatenate([[0.0], np.geomspace(min(t_min, T), T, n)])


@dataclass(frozen=True, eq=False)
class Propagator:
    system: GalerkinSystem

    @cached_property
    def _eig(self) -> tuple[np.ndarray, np.ndarray]:
        B = self.system.matrix
        scale = max(float(np.max(np.abs(B))), 1e-300)
        asym = float(np.max(np.abs(B - B.T))) / scale
        if asym > 1e-10:
            raise InvariantError("cannot propagate a non-symmetric generator", residual=asym)
        lam, V = np.linalg.eigh(B)
        if lam[0] < -1e-10 * scale:
            raise InvariantError("generator has a negative eigenvalue", residual=float(lam[0]) / scale)
        return np.maximum(lam, 0.0), V

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._eig[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        return self._eig[1]

    def modal(self, c0: np.ndarray) -> np.ndarray:
        return self.eigenvectors.T @ c0

    def coefficients(self, c0: np.ndarray, times: np.ndarray) -> np.ndarray:
        """c(t) for every t, shape (len(times), n)."""
        y = self.modal(c0)
        decay = np.exp(-np.outer(times, self.eigenvalues))
        return (decay * y) @ self.eigenvectors.T

    def dissipated(self, c0: np.ndarray, times: np.ndarray) -> np.ndarray:
        """2 int_0^t c^T B c ds = sum_m y_m^2 (1 - exp(-2 lam_m t))."""
        y = self.modal(c0)
        return -np.expm1(-2.0 * np.outer(times, self.eigenvalues)) @ (y * y)

    def form_integral(self, c0: np.ndarray, times: np.ndarray, A: np.ndarray, tau_power: int = 0) -> np.ndarray:
        """int_0^t s^p c(s)^T A c(s) ds in closed form, p = tau_power in {0, 1}."""
        if tau_power not in (0, 1):
            raise ValueError("tau_power must be 0 or 1")
        y = self.modal(c0)
        lam = self.eigenvalues
        At = self.eigenvectors.T @ A @ self.eigenvectors
        S = lam[:, None] + lam[None, :]
        out = np.empty(len(times))
        for i, t in enumerate(times):
            out[i] = y @ (At * _decay_moment(S, t, tau_power)) @ y
        return out


def _decay_moment(S: np.ndarray, t: float, p: int) -> np.ndarray:
    """int_0^t s^p exp(-S s) ds elementwise, stable as S t -> 0."""
    x = S * t
    small = x < 0.5
    xs = np.where(small, 1.0, x)
    # Taylor series where the closed form cancels
    k = np.arange(20)
    if p == 0:
        exact = -np.expm1(-xs) / xs
        coef = (-1.0) ** k / np.cumprod(k + 1.0)
    else:
        exact = (-np.expm1(-xs) - xs * np.exp(-xs)) / (xs * xs)
        coef = (-1.0) ** k * (k + 1) / np.cumprod(k + 1.0) / (k + 2)
    series = np.polynomial.polynomial.polyval(np.where(small, x, 0.0), coef)
    return t ** (p + 1) * np.where(small, series, exact)


@dataclass(frozen=True, eq=False)
class EvolutionTrace:
    system: GalerkinSystem
    f0: SpectralFunction
    times: np.ndarray
    coeffs: np.ndarray  # (n_t, n)
    norm2: np.ndarray  # ||f(t)||^2 from the snapshot coefficients
    form: np.ndarray  # c(t)^T B c(t)
    dissipated: np.ndarray  # 2 int_0^t c^T B c ds, closed form

    @property
    def D(self) -> int:
        return self.system.D

    def snapshot(self, i: int) -> SpectralFunction:
        return SpectralFunction.from_vector(self.coeffs[i], self.D)

    def energy_residual(self) -> float:
        """max_t | ||f(t)||^2 + 2 int_0^t (f, Bf) ds - ||f0||^2 |."""
        e0 = self.f0.norm() ** 2
        return float(np.max(np.abs(self.norm2 + self.dissipated - e0)))

    def is_monotone(self, rtol: float = 1e-13) -> bool:
        d = np.diff(self.norm2)
        return bool(np.all(d <= rtol * max(self.norm2[0], 1e-300)))

    def form_integral(self, A: np.ndarray, tau_power: int = 0) -> np.ndarray:
        return Propagator(self.system).form_integral(self.coeffs[0], self.times, A, tau_power)

    def rows(self):
        for t, n2, q, d in zip(self.times, self.norm2, self.form, self.dissipated):
            yield (t, n2, q, d)

    def write(self, directory: str | Path, prov: dict, stem: str = "trace") -> None:
        directory = Path(directory)
        write_csv(directory / f"{stem}.csv", ["t", "norm2", "form", "dissipated"], self.rows(), prov)
        manifest = {
            "provenance": prov,
            "D": self.D,
            "gamma": self.system.gamma,
            "n_snapshots": len(self.times),
            "initial_norm2": self.f0.norm() ** 2,
            "final_norm2": float(self.norm2[-1]),
            "energy_identity_residual": self.energy_residual(),
            "monotone": self.is_monotone(),
            "spectral_gap": fmt(self.system.spectral_gap()),
        }
        write_json(directory / f"{stem}.json", manifest)


def _initial_vector(system: GalerkinSystem, f0: SpectralFunction) -> np.ndarray:
    if f0.degree_cap > system.D:
        if f0.truncate(system.D).norm() != f0.norm():
            raise CapacityError(f"initial datum of degree {f0.degree_cap} exceeds the basis cap D={system.D}")
        f0 = f0.truncate(system.D)
    return f0.pad(system.D).to_vector()


def evolve_exact(system: GalerkinSystem, f0: SpectralFunction, times) -> EvolutionTrace:
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be nonnegative and strictly increasing")
    c0 = _initial_vector(system, f0)
    prop = Propagator(system)
    C = prop.coefficients(c0, times)
    norm2 = np.sum(C * C, axis=1)
    form = np.einsum("ti,ij,tj->t", C, system.matrix, C)
    diss = prop.dissipated(c0, times)
    return EvolutionTrace(system, f0.pad(system.D) if f0.degree_cap <= system.D else f0.truncate(system.D), times, C, norm2, form, diss)


SCHEMES = ("backward-euler", "trapezoidal")


@dataclass(frozen=True, eq=False)
class Stepper:
    """Fixed-step implicit integrator with a reusable LU factorization."""

    system: GalerkinSystem
    dt: float
    scheme: str = "trapezoidal"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        B = self.system.matrix
        eye = np.eye(B.shape[0])
        theta = 1.0 if self.scheme == "backward-euler" else 0.5
        object.__setattr__(self, "_lu", lu_factor(eye + theta * self.dt * B))
        object.__setattr__(self, "_rhs", eye - (1.0 - theta) * self.dt * B)

    def step(self, c: np.ndarray) -> np.ndarray:
        return lu_solve(self._lu, self._rhs @ c)

    def advance(self, c: np.ndarray, n_steps: int) -> np.ndarray:
        for _ in range(n_steps):
            c = self.step(c)
        return c


def evolve_step(system: GalerkinSystem, f: SpectralFunction, dt: float, scheme: str = "trapezoidal") -> SpectralFunction:
    c = Stepper(system, dt, scheme).step(_initial_vector(system, f))
    return SpectralFunction.from_vector(c, system.D)


def evolve_stepped(system: GalerkinSystem, f0: SpectralFunction, t: float, dt: float, scheme: str = "trapezoidal") -> SpectralFunction:
    n = int(round(t / dt))
    if abs(n * dt - t) > 1e-12 * max(t, 1.0):
        raise ValueError(f"t={t} is not a multiple of dt={dt}")
    c = Stepper(system, dt, scheme).advance(_initial_vector(system, f0), n)
    return SpectralFunction.from_vector(c, system.D)
