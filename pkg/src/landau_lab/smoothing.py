"""Weighted derivative norms along a trajectory and factorial-growth fits.

For a solution f(t) the measured quantity is

    N_alpha(t) = tt^{|alpha|/2} ||<v>^{gamma |alpha| / 2} d^alpha f(t)||,   tt = min(t, 1).

Derivatives are exact in the Hermite basis (degree grows by |alpha|); the
weighted L2 norm is a quadratic form with the Gram matrix of <v>^{gamma|alpha|}.

A truncated run cannot show the continuum blow-up as t -> 0, so every rate
statement is restricted to resolved cells: a reference run at twice the degree
cap, started from the same datum, must agree with the run under test to within
a relative tolerance (5% by default).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CapacityError, InsufficientDataError
from .evolution import EvolutionTrace, Propagator, _initial_vector
from .hermite import (
    SpectralFunction,
    basis_size,
    check_multi_index,
    mi_abs,
    mi_factorial,
    multi_indices,
    partial,
    partial_matrix,
)
from .io import fmt, write_csv, write_json
from .norms import weighted_l2
from .quadrature import SphericalRule, laplace_gram

DEFAULT_RESOLVE_TOL = 0.05
# short times are those where tt = t, i.e. the t^{|alpha|/2} factor is active
DEFAULT_WINDOW = (0.0, 1.0)


def time_factor(t):
    """tt = min(t, 1)."""
    return np.minimum(t, 1.0)


def rough_datum(D: int, seed: int) -> SpectralFunction:
    """All coefficients of basis(D) equal to +-1, signs drawn from ``seed``."""
    return SpectralFunction.random(D, np.random.default_rng(seed), kind="sign")


def weighted_derivative_norm(
    f: SpectralFunction,
    alpha: Sequence[int],
    t: float,
    gamma: float,
    max_degree: int | None = None,
    rule: SphericalRule | None = None,
) -> float:
    """tt^{|alpha|/2} ||<v>^{gamma|alpha|/2} d^alpha f|| for a single function.

    ``max_degree`` is the largest Hermite degree the caller can represent; a
    derivative that would need more raises CapacityError instead of being
    truncated.
    """
    alpha = check_multi_index(alpha)
    m = mi_abs(alpha)
    if max_degree is not None and f.degree_cap + m > max_degree:
        raise CapacityError(
            f"d^{alpha} of a degree-{f.degree_cap} function needs degree {f.degree_cap + m} > {max_degree}"
        )
    if t < 0:
        raise ValueError("t must be >= 0")
    g = partial(f, alpha)
    return float(time_factor(t) ** (m / 2) * weighted_l2(g, gamma * m / 2, rule))


@lru_cache(maxsize=32)
def _gram(K: int, theta: float) -> np.ndarray:
    G = laplace_gram(K, theta)
    G.setflags(write=False)
    return G


def derivative_norm_table(coeffs: np.ndarray, D: int, gamma: float, alphas: Sequence[tuple[int, int, int]]) -> np.ndarray:
    """||<v>^{gamma|alpha|/2} d^alpha f|| for each alpha (rows) and coefficient vector (columns)."""
    coeffs = np.atleast_2d(coeffs)
    if coeffs.shape[1] != basis_size(D):
        raise ValueError("coefficient vectors do not match the degree cap")
    out = np.empty((len(alphas), coeffs.shape[0]))
    for i, a in enumerate(alphas):
        m = mi_abs(a)
        G = _gram(D + m, gamma * m / 2)
        X = coeffs @ partial_matrix(D, a).T
        out[i] = np.sqrt(np.maximum(np.sum((X @ G) * X, axis=1), 0.0))
    return out


def _solution_at(trace: EvolutionTrace, times: np.ndarray) -> np.ndarray:
    system = trace.system
    c0 = _initial_vector(system, trace.f0)
    return Propagator(system).coefficients(c0, times)


def default_t_grid(trace: EvolutionTrace) -> np.ndarray:
    """Snapshot times of the trace (t > 0), plus t = 0.5 when inside the horizon."""
    t = trace.times[trace.times > 0]
    if t.size and t[-1] >= 0.5:
        t = np.union1d(t, [0.5])
    return t


@dataclass(frozen=True, eq=False)
class SmoothingReport:
    gamma: float
    T: float
    D: int
    D_ref: int | None
    m_max: int
    times: np.ndarray
    alphas: tuple[tuple[int, int, int], ...]
    raw: np.ndarray  # ||<v>^{gamma|a|/2} d^a f(t)||, shape (n_alpha, n_t)
    raw_ref: np.ndarray | None
    resolve_tol: float = DEFAULT_RESOLVE_TOL
    window: tuple[float, float] = DEFAULT_WINDOW
    meta: dict = dc_field(default_factory=dict)

    # per alpha -------------------------------------------------------------
    @property
    def orders(self) -> np.ndarray:
        return np.array([mi_abs(a) for a in self.alphas])

    @property
    def N(self) -> np.ndarray:
        return time_factor(self.times)[None, :] ** (self.orders[:, None] / 2) * self.raw

    @property
    def relative_change(self) -> np.ndarray:
        """|N^{D} / N^{2D} - 1| per (alpha, t); NaN without a reference run."""
        if self.raw_ref is None:
            return np.full(self.raw.shape, np.nan)
        ref = self.raw_ref
        diff = np.abs(self.raw - ref)
        return np.where(ref > 0, diff / np.where(ref > 0, ref, 1.0), np.where(diff > 0, np.inf, 0.0))

    @property
    def resolved_alpha(self) -> np.ndarray:
        rel = self.relative_change
        return np.where(np.isnan(rel), False, rel < self.resolve_tol)

    def index(self, alpha: Sequence[int]) -> int:
        return self.alphas.index(check_multi_index(alpha))

    # per (m, t) ------------------------------------------------------------
    def _by_order(self, m: int) -> np.ndarray:
        return self.orders == m

    @property
    def resolved(self) -> np.ndarray:
        """(m, t) cell resolved when every alpha with |alpha| = m is."""
        return np.array([np.all(self.resolved_alpha[self._by_order(m)], axis=0) for m in range(self.m_max + 1)])

    @property
    def C_fit(self) -> np.ndarray:
        """max_{|alpha|=m} (N_alpha / alpha!)^{1/(m+1)}; NaN where all N_alpha vanish."""
        out = np.full((self.m_max + 1, len(self.times)), np.nan)
        fact = np.array([mi_factorial(a) for a in self.alphas], dtype=float)
        scaled = self.N / fact[:, None]
        for m in range(self.m_max + 1):
            s = scaled[self._by_order(m)].max(axis=0)
            out[m] = np.where(s > 0, np.power(s, 1.0 / (m + 1)), np.nan)
        return out

    @property
    def aggregate(self) -> np.ndarray:
        """A_m(t) = (sum_{|alpha|=m} (m!/alpha!)^2 N_alpha^2)^{1/2}."""
        out = np.empty((self.m_max + 1, len(self.times)))
        for m in range(self.m_max + 1):
            sel = self._by_order(m)
            w = np.array([math.factorial(m) / mi_factorial(a) for a, s in zip(self.alphas, sel) if s])
            out[m] = np.sqrt(np.sum((w[:, None] * self.N[sel]) ** 2, axis=0))
        return out

    @property
    def aggregate_constant(self) -> np.ndarray:
        """Smallest C with A_m(t) <= (3C)^{m+1} m!, per (m, t)."""
        m = np.arange(self.m_max + 1)[:, None]
        fact = np.array([math.factorial(k) for k in range(self.m_max + 1)], dtype=float)[:, None]
        return np.power(self.aggregate / fact, 1.0 / (m + 1)) / 3.0

    @property
    def C_hat(self) -> float:
        """Fitted constant: max of C_fit over resolved cells."""
        vals = self.C_fit[self.resolved]
        vals = vals[np.isfinite(vals)]
        return float(vals.max()) if vals.size else float("nan")

    def aggregate_check(self) -> tuple[bool, float]:
        """(A_m <= (3 C_hat)^{m+1} m! on every resolved cell, worst ratio)."""
        C = self.C_hat
        if not np.isfinite(C):
            return False, float("nan")
        m = np.arange(self.m_max + 1)[:, None]
        fact = np.array([math.factorial(k) for k in range(self.m_max + 1)], dtype=float)[:, None]
        ratio = self.aggregate / ((3 * C) ** (m + 1) * fact)
        worst = float(np.max(ratio[self.resolved]))
        return worst <= 1.0, worst

    def time_index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-12 * max(t, 1.0):
            raise ValueError(f"t={t} is not on the report grid")
        return i

    def cfit_spread(self, t: float = 0.5, orders: Sequence[int] = (1, 2, 3, 4, 5), pivot: int = 2) -> dict:
        """max_m C_fit(m, t) / C_fit(pivot, t) and whether all cells used are resolved."""
        i = self.time_index(t)
        orders = [m for m in orders if m <= self.m_max]
        vals = {m: float(self.C_fit[m, i]) for m in orders}
        return {
            "t": float(self.times[i]),
            "C_fit": vals,
            "ratio_to_pivot": max(vals.values()) / vals[pivot],
            "all_resolved": bool(all(self.resolved[m, i] for m in orders)),
        }

    def reference_report(self) -> "SmoothingReport":
        """The same tables evaluated on the reference run (no resolution info)."""
        if self.raw_ref is None:
            raise ValueError("no reference run attached")
        return replace(self, D=self.D_ref, D_ref=None, raw=self.raw_ref, raw_ref=None, meta={})

    def resolved_fraction(self, t_min: float = 0.0) -> float:
        sel = self.times >= t_min
        cells = self.resolved[:, sel]
        return float(cells.mean()) if cells.size else float("nan")

    # rates -----------------------------------------------------------------
    def slope(self, alpha: Sequence[int], t_window: tuple[float, float] | None = None, min_points: int = 4) -> float:
        return shorttime_slope(self, alpha, t_window, min_points)

    def slopes(self, t_window: tuple[float, float] | None = None) -> dict[tuple[int, int, int], float]:
        out = {}
        for a in self.alphas:
            try:
                out[a] = self.slope(a, t_window)
            except InsufficientDataError:
                out[a] = float("nan")
        return out

    # export ----------------------------------------------------------------
    def rows(self):
        N, C, A, res = self.N, self.C_fit, self.aggregate, self.resolved_alpha
        slopes = self.slopes()
        for i, a in enumerate(self.alphas):
            m = mi_abs(a)
            for k, t in enumerate(self.times):
                yield (m, a, t, N[i, k], C[m, k], A[m, k], slopes[a], res[i, k], self.gamma, self.T, self.D)

    COLUMNS = ("m", "alpha", "t", "N", "C_fit", "A_m", "slope", "resolved", "gamma", "T", "D")

    def summary(self) -> dict:
        ok, worst = self.aggregate_check()
        out = {
            "gamma": self.gamma,
            "T": self.T,
            "D": self.D,
            "D_ref": self.D_ref,
            "m_max": self.m_max,
            "resolve_tol": self.resolve_tol,
            "window": list(self.window),
            "C_hat": _finite(self.C_hat),
            "aggregate_bound_holds": ok,
            "aggregate_worst_ratio": _finite(worst),
            "resolved_fraction": _finite(self.resolved_fraction()),
            "resolved_fraction_t_ge_0.05": _finite(self.resolved_fraction(0.05)),
            "slopes": {fmt(a): _finite(s) for a, s in self.slopes().items()},
            "max_C_fit_per_order": [_finite(np.nanmax(c)) if np.any(np.isfinite(c)) else None for c in self.C_fit],
        }
        if self.m_max >= 2 and np.any(np.isclose(self.times, 0.5)):
            spread = self.cfit_spread(0.5)
            spread["C_fit"] = {str(k): _finite(v) for k, v in spread["C_fit"].items()}
            spread["ratio_to_pivot"] = _finite(spread["ratio_to_pivot"])
            if self.raw_ref is not None:
                spread["ratio_to_pivot_reference"] = _finite(self.reference_report().cfit_spread(0.5)["ratio_to_pivot"])
            out["C_fit_at_0.5"] = spread
        out.update(self.meta)
        return out

    def write(self, directory: str | Path, prov: dict, stem: str = "smoothing") -> None:
        directory = Path(directory)
        write_csv(directory / f"{stem}.csv", self.COLUMNS, self.rows(), prov)
        write_json(directory / f"{stem}.json", {"provenance": prov, **self.summary()})


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else None


def fit_analytic_constant(
    trace: EvolutionTrace,
    m_max: int,
    t_grid: Sequence[float] | None = None,
    reference: EvolutionTrace | None = None,
    resolve_tol: float = DEFAULT_RESOLVE_TOL,
    window: tuple[float, float] = DEFAULT_WINDOW,
) -> SmoothingReport:
    """Tabulate N_alpha, C_fit and A_m for |alpha| <= m_max on ``t_grid``.

    ``reference`` is the same datum evolved at a larger degree cap (normally
    2D); without it no cell counts as resolved. Norms are evaluated from the
    exact propagator at every grid time, not interpolated between snapshots.
    """
    if m_max < 0:
        raise ValueError("m_max must be >= 0")
    t = np.asarray(default_t_grid(trace) if t_grid is None else t_grid, dtype=float)
    if np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be positive and strictly increasing")
    alphas = tuple(multi_indices(m_max))
    raw = derivative_norm_table(_solution_at(trace, t), trace.D, trace.system.gamma, alphas)
    raw_ref = None
    D_ref = None
    if reference is not None:
        if reference.D <= trace.D:
            raise ValueError("the reference run needs a larger degree cap")
        if reference.system.gamma != trace.system.gamma:
            raise ValueError("reference run has a different gamma")
        if not np.array_equal(reference.f0.truncate(trace.D).to_vector(), trace.f0.to_vector()):
            raise ValueError("the reference datum must agree with the run under test on basis(D)")
        raw_ref = derivative_norm_table(_solution_at(reference, t), reference.D, reference.system.gamma, alphas)
        D_ref = reference.D
    T = float(trace.times[-1])
    return SmoothingReport(trace.system.gamma, T, trace.D, D_ref, m_max, t, alphas, raw, raw_ref, resolve_tol, tuple(window))


def shorttime_slope(
    report: SmoothingReport,
    alpha: Sequence[int],
    t_window: tuple[float, float] | None = None,
    min_points: int = 4,
) -> float:
    """Least-squares slope of log ||<v>^{gamma|alpha|/2} d^alpha f(t)|| against log t.

    Only resolved grid points inside ``t_window`` (closed interval) are used.
    """
    lo, hi = report.window if t_window is None else t_window
    i = report.index(alpha)
    t = report.times
    sel = (t >= lo) & (t <= hi) & report.resolved_alpha[i] & (report.raw[i] > 0)
    if np.count_nonzero(sel) < min_points:
        raise InsufficientDataError(
            f"only {np.count_nonzero(sel)} resolved points for alpha={tuple(alpha)} in [{lo}, {hi}]; need {min_points}"
        )
    x = np.log(t[sel])
    y = np.log(report.raw[i, sel])
    return float(np.polyfit(x, y, 1)[0])


# ----------------------------------------------------------------------------
# first-derivative energy bound


@dataclass(frozen=True)
class FirstDerivativeBound:
    """t ||d^a f(t)||^2_{2,gamma/2} + int_0^t s ||d^a f(s)||_A^2 ds, relative to ||f0||^2."""

    times: np.ndarray
    lhs: dict  # alpha -> array over times
    initial_norm2: float

    @property
    def constant(self) -> float:
        """Reported c with LHS <= c ||f0||^2 on the grid."""
        return float(max(np.max(v) for v in self.lhs.values()) / self.initial_norm2)

    def summary(self) -> dict:
        return {
            "t_max": float(self.times[-1]),
            "constant": _finite(self.constant),
            "per_alpha": {fmt(a): _finite(np.max(v) / self.initial_norm2) for a, v in self.lhs.items()},
        }


def first_derivative_bound(trace: EvolutionTrace, anorm_gram: np.ndarray, times: Sequence[float] | None = None) -> FirstDerivativeBound:
    """Evaluate the first-derivative energy quantity for each |alpha| = 1.

    ``anorm_gram`` is the unweighted ||.||_A^2 matrix over basis(D+1).
    """
    D = trace.D
    if anorm_gram.shape != (basis_size(D + 1),) * 2:
        raise CapacityError(f"anorm Gram must cover basis({D + 1})")
    t = np.asarray(trace.times[trace.times <= 1.0] if times is None else times, dtype=float)
    gamma = trace.system.gamma
    prop = Propagator(trace.system)
    c0 = _initial_vector(trace.system, trace.f0)
    C = prop.coefficients(c0, t)
    G = _gram(D + 1, gamma / 2)
    out = {}
    for a in ((1, 0, 0), (0, 1, 0), (0, 0, 1)):
        P = partial_matrix(D, a)
        X = C @ P.T
        pointwise = t * np.sum((X @ G) * X, axis=1)
        integral = prop.form_integral(c0, t, P.T @ anorm_gram @ P, tau_power=1)
        out[a] = pointwise + integral
    return FirstDerivativeBound(t, out, float(c0 @ c0))
