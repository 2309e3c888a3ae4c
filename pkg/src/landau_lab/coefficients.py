"""Collision coefficients a_jk(v) = (delta_jk |v|^2 - v_j v_k) |v|^gamma and their
Maxwellian convolutions abar = a * mu.

Rotational equivariance reduces abar to two radial profiles,

    abar(v) = l1(|v|) vhat vhat^T + l2(|v|) (I - vhat vhat^T),

computed by a 1-d radial quadrature after integrating the angles in closed
form. A fully numerical 3-d quadrature, centred on the kernel singularity and
with every derivative moved onto the Gaussian factor, serves both for
derivatives d^beta abar and as an independent check of the profiles.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from math import factorial, sqrt
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.polynomial import chebyshev as cheb
from numpy.polynomial.legendre import leggauss
from scipy.special import gamma as gamma_fn
from scipy.special import gammainc, roots_jacobi

from .errors import ConfigError, InvariantError, NumericalToleranceError, OutOfTableError, SingularityError
from .hermite import (
    SpectralFunction,
    basis_size,
    check_multi_index,
    hermite_table,
    indices_of_degree,
    index_of,
    ladder,
    mi_abs,
    mi_factorial,
    multi_indices,
    multiply_v,
)
from .io import read_arrays, write_arrays

log = logging.getLogger(__name__)

_C1 = (2.0 * np.pi) ** -0.5  # (2 pi)^{-3/2} * 2 pi
_C2 = 0.5 * _C1  # (2 pi)^{-3/2} * pi
_RADIAL_CUTOFF = 14.0


@dataclass(frozen=True)
class PotentialConfig:
    gamma: float

    def __post_init__(self):
        g = float(self.gamma)
        if not (-3.0 < g < 0.0):
            raise ConfigError(f"gamma={g} outside the soft-potential range -3 < gamma < 0")
        object.__setattr__(self, "gamma", g)

    @property
    def strong_endpoint(self) -> bool:
        """rho^{gamma+4} has exponent < 1.5: the Jacobi-weighted endpoint rule matters most."""
        return self.gamma < -2.5


def japanese(v) -> np.ndarray:
    """<v> = (1 + |v|^2)^{1/2}."""
    v = np.asarray(v, dtype=float)
    return np.sqrt(1.0 + np.sum(v * v, axis=-1))


def maxwellian_moment(p: float) -> float:
    """int |w|^p mu(w) dw = 2^{p/2+1} Gamma((p+3)/2) / sqrt(pi)."""
    return 2.0 ** (p / 2 + 1) * gamma_fn((p + 3) / 2) / np.sqrt(np.pi)


def origin_value(gamma: float) -> float:
    """l1(0) = l2(0) = (2/3) int |w|^{gamma+2} mu dw."""
    return 2.0 / 3.0 * maxwellian_moment(gamma + 2.0)


# ----------------------------------------------------------------------------
# the kernel


def a_kernel(v, gamma: float) -> np.ndarray:
    """a(v) for a point or (..., 3) array; zero matrix at v = 0 when gamma > -2."""
    v = np.asarray(v, dtype=float)
    r2 = np.sum(v * v, axis=-1)
    zero = r2 == 0.0
    if np.any(zero) and gamma <= -2.0:
        raise SingularityError(f"a(0) is unbounded for gamma={gamma} <= -2")
    safe = np.where(zero, 1.0, r2)
    scale = np.where(zero, 0.0, safe ** (gamma / 2))
    eye = np.eye(3)
    out = (r2[..., None, None] * eye - v[..., :, None] * v[..., None, :]) * scale[..., None, None]
    return out


# ----------------------------------------------------------------------------
# radial profiles


def _t_moments(k: int, s: np.ndarray) -> np.ndarray:
    """int_0^2 t^k exp(-s t) dt for s >= 0."""
    out = np.empty_like(s)
    small = s < 1.0
    ss = s[small]
    acc = np.zeros_like(ss)
    term = np.ones_like(ss)
    for n in range(40):
        acc += term * 2.0 ** (k + n + 1) / (k + n + 1)
        term = term * (-ss) / (n + 1)
    out[small] = acc
    sl = s[~small]
    out[~small] = factorial(k) / sl ** (k + 1) * gammainc(k + 1, 2.0 * sl)
    return out


def _radial_rule(gamma: float, rho_max: float, n_jac: int, h: float, n_leg: int):
    """Nodes/weights for int_0^rho_max rho^{gamma+4} g(rho) d rho."""
    p = gamma + 4.0
    x, w = roots_jacobi(n_jac, 0.0, p)
    rho0 = 0.5 * (x + 1.0)
    w0 = w / 2.0 ** (p + 1.0)
    npan = max(1, int(np.ceil((rho_max - 1.0) / h)))
    e = np.linspace(1.0, rho_max, npan + 1)
    t, tw = leggauss(n_leg)
    mid = 0.5 * (e[:-1] + e[1:])
    half = 0.5 * (e[1:] - e[:-1])
    rho1 = (mid[:, None] + half[:, None] * t).ravel()
    w1 = (half[:, None] * tw).ravel() * rho1**p
    return np.concatenate([rho0, rho1]), np.concatenate([w0, w1])


_PROFILE_LEVELS = ((24, 0.5, 16), (48, 0.25, 16), (96, 0.125, 16), (128, 0.0625, 20))


def _profiles_at_level(r: np.ndarray, gamma: float, level: int) -> np.ndarray:
    n_jac, h, n_leg = _PROFILE_LEVELS[level]
    rho, w = _radial_rule(gamma, float(r.max(initial=0.0)) + _RADIAL_CUTOFF, n_jac, h, n_leg)
    out = np.empty((r.size, 4))
    # chunk over radii to bound memory
    for lo in range(0, r.size, 64):
        R = r[lo : lo + 64, None]
        P = rho[None, :]
        J0, J1, J2, J3 = (_t_moments(k, R * P) for k in range(4))
        E = np.exp(-0.5 * (P - R) ** 2) * w[None, :]
        p1 = 2 * J1 - J2
        p2 = 2 * J0 - 2 * J1 + J2
        d1 = (P - R) * p1 - P * (2 * J2 - J3)
        d2 = (P - R) * p2 - P * (2 * J1 - 2 * J2 + J3)
        out[lo : lo + 64, 0] = _C1 * np.sum(E * p1, axis=1)
        out[lo : lo + 64, 1] = _C2 * np.sum(E * p2, axis=1)
        out[lo : lo + 64, 2] = _C1 * np.sum(E * d1, axis=1)
        out[lo : lo + 64, 3] = _C2 * np.sum(E * d2, axis=1)
    return out


def profiles_with_derivatives(r, config: PotentialConfig, tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """(l1, l2, l1', l2') at radii r, shape (n, 4), and the achieved refinement residual.

    Angular integrals are done in closed form (incomplete gamma functions); the
    radial integral uses a Gauss-Jacobi rule absorbing rho^{gamma+4} on [0, 1]
    and composite Gauss-Legendre beyond, refined by halving until the change
    drops below ``tol`` relative to max(l1, l2).
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r < 0):
        raise ValueError("radii must be >= 0")
    prev = _profiles_at_level(r, config.gamma, 0)
    resid = np.inf
    for level in range(1, len(_PROFILE_LEVELS)):
        cur = _profiles_at_level(r, config.gamma, level)
        scale = np.maximum(np.abs(cur[:, 0]), np.abs(cur[:, 1]))
        resid = float(np.max(np.abs(cur - prev) / scale[:, None]))
        if resid < tol:
            return cur, resid
        prev = cur
    raise NumericalToleranceError(
        f"radial profile quadrature did not reach tol={tol:g} (gamma={config.gamma})", residual=resid
    )


def abar_profiles(r, config: PotentialConfig, tol: float = 1e-9):
    """(l1(r), l2(r)): eigenvalues of abar along and across v. Scalars in, scalars out."""
    vals, _ = profiles_with_derivatives(r, config, tol)
    if np.ndim(r) == 0:
        return float(vals[0, 0]), float(vals[0, 1])
    return vals[:, 0], vals[:, 1]


# ----------------------------------------------------------------------------
# tabulated field


def panel_edges(r_max: float, n_panels: int) -> np.ndarray:
    """Log-spaced panel breakpoints 0 < r_max 2^{-6} < ... < r_max."""
    return np.concatenate([[0.0], r_max * np.geomspace(2.0**-6, 1.0, n_panels)])


def _cheb_points(n: int) -> np.ndarray:
    return np.cos(np.pi * (np.arange(n) + 0.5) / n)[::-1]


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Chebyshev-panel tables of l1, l2 and their radial derivatives on [0, r_max].

    The derivative columns are separate quadratures (derivative taken on the
    Gaussian side), not derivatives of the interpolant.
    """

    config: PotentialConfig
    r_max: float
    edges: np.ndarray
    radii: np.ndarray
    table: np.ndarray  # (n_panels * n_cheb, 4): l1, l2, l1', l2'
    tol: float
    residual: float

    CACHE_VERSION = 1

    @classmethod
    def build(
        cls,
        config: PotentialConfig,
        r_max: float = 40.0,
        n_panels: int = 16,
        n_cheb: int = 32,
        tol: float = 1e-9,
    ) -> "CoefficientField":
        if config.strong_endpoint:
            log.info(
                "gamma=%g < -2.5: strong endpoint singularity rho^%g, Jacobi-weighted endpoint rule engaged",
                config.gamma,
                config.gamma + 4,
            )
        edges = panel_edges(r_max, n_panels)
        x = _cheb_points(n_cheb)
        radii = np.concatenate([0.5 * (a + b) + 0.5 * (b - a) * x for a, b in zip(edges[:-1], edges[1:])])
        table, resid = profiles_with_derivatives(radii, config, tol)
        return cls(config, float(r_max), edges, radii, table, float(tol), resid)

    def __post_init__(self):
        if np.min(self.table[:, :2]) <= 0.0:
            raise InvariantError("profile table not positive definite", residual=float(np.min(self.table[:, :2])))
        n_panels = len(self.edges) - 1
        n_cheb = len(self.radii) // n_panels
        x = _cheb_points(n_cheb)
        coef = np.empty((n_panels, n_cheb, 4))
        for k in range(n_panels):
            coef[k] = cheb.chebfit(x, self.table[k * n_cheb : (k + 1) * n_cheb], n_cheb - 1)
        object.__setattr__(self, "_coef", coef)

    @property
    def gamma(self) -> float:
        return self.config.gamma

    @property
    def n_cheb(self) -> int:
        return len(self.radii) // (len(self.edges) - 1)

    def cache_key(self) -> dict:
        return {
            "gamma": self.gamma,
            "r_max": self.r_max,
            "n_panels": len(self.edges) - 1,
            "n_cheb": self.n_cheb,
            "tol": self.tol,
        }

    # evaluation
    def _interp(self, r: np.ndarray, cols: slice) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if np.any(r > self.r_max * (1 + 1e-12)):
            raise OutOfTableError(f"|v|={float(np.max(r)):.6g} beyond table range r_max={self.r_max}")
        flat = r.ravel()
        k = np.clip(np.searchsorted(self.edges, flat, side="right") - 1, 0, len(self.edges) - 2)
        coef = self._coef[:, :, cols]
        out = np.empty((flat.size, coef.shape[-1]))
        for p in np.unique(k):
            m = k == p
            a, b = self.edges[p], self.edges[p + 1]
            out[m] = cheb.chebval((2 * flat[m] - a - b) / (b - a), coef[p]).T
        return out.reshape(r.shape + (coef.shape[-1],))

    def profiles(self, r) -> tuple[np.ndarray, np.ndarray]:
        vals = self._interp(r, slice(0, 2))
        return vals[..., 0], vals[..., 1]

    def profile_derivatives(self, r) -> tuple[np.ndarray, np.ndarray]:
        vals = self._interp(r, slice(2, 4))
        return vals[..., 0], vals[..., 1]

    def abar(self, v) -> np.ndarray:
        """abar(v) for a point or (..., 3) array, shape (..., 3, 3)."""
        v = np.asarray(v, dtype=float)
        r = np.sqrt(np.sum(v * v, axis=-1))
        l1, l2 = self.profiles(r)
        safe = np.where(r > 0, r, 1.0)
        vh = v / safe[..., None]
        P = vh[..., :, None] * vh[..., None, :]
        return l2[..., None, None] * np.eye(3) + (l1 - l2)[..., None, None] * P

    def potential(self, v) -> np.ndarray:
        """q(v) = sum_ij abar_ij v_i v_j = l1(|v|) |v|^2."""
        v = np.asarray(v, dtype=float)
        r2 = np.sum(v * v, axis=-1)
        l1, _ = self.profiles(np.sqrt(r2))
        return l1 * r2

    def drift_divergence(self, v) -> np.ndarray:
        """sum_ij d_i (abar_ij v_j) = 3 l1 + r l1'."""
        v = np.asarray(v, dtype=float)
        r = np.sqrt(np.sum(v * v, axis=-1))
        l1, _ = self.profiles(r)
        d1, _ = self.profile_derivatives(r)
        return 3.0 * l1 + r * d1

    # persistence
    def save(self, path: str | Path) -> None:
        header = {"kind": "coefficient-field", "cache_version": self.CACHE_VERSION, **self.cache_key()}
        header["residual"] = self.residual
        write_arrays(path, header, {"edges": self.edges, "radii": self.radii, "table": self.table})

    @classmethod
    def load(cls, path: str | Path) -> "CoefficientField":
        header, arrays = read_arrays(path)
        if header.get("kind") != "coefficient-field" or header.get("cache_version") != cls.CACHE_VERSION:
            raise ValueError(f"{path}: not a coefficient-field cache of version {cls.CACHE_VERSION}")
        return cls(
            PotentialConfig(header["gamma"]),
            header["r_max"],
            arrays["edges"],
            arrays["radii"],
            arrays["table"],
            header["tol"],
            header["residual"],
        )

    @classmethod
    def cached(
        cls,
        config: PotentialConfig,
        cache_dir: str | Path | None,
        r_max: float = 40.0,
        n_panels: int = 16,
        n_cheb: int = 32,
        tol: float = 1e-9,
    ) -> "CoefficientField":
        """Load from ``cache_dir`` when a matching table exists, else build and store."""
        if cache_dir is None:
            return cls.build(config, r_max, n_panels, n_cheb, tol)
        name = f"field_g{config.gamma:+.6f}_R{r_max:g}_P{n_panels}x{n_cheb}_tol{tol:.0e}.bin"
        path = Path(cache_dir) / name
        if path.exists():
            log.info("coefficient cache hit: %s", path)
            return cls.load(path)
        field = cls.build(config, r_max, n_panels, n_cheb, tol)
        field.save(path)
        log.info("coefficient cache written: %s", path)
        return field


# ----------------------------------------------------------------------------
# 3-d convolution with the derivative on the Gaussian side


def _frame(v: np.ndarray) -> np.ndarray:
    """Rotation R with R e3 = vhat."""
    r = np.linalg.norm(v)
    if r == 0:
        return np.eye(3)
    e3 = v / r
    helper = np.array([1.0, 0.0, 0.0]) if abs(e3[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = helper - helper @ e3 * e3
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e3, e1)
    return np.stack([e1, e2, e3], axis=1)


_GAUSS_CUTOFF = 15.0


def _sphere_rule(v: np.ndarray, radial_power: float, degree: int, level: int):
    """Spherical product rule for z about the singularity, polar axis along v.

    Integrates |z|^{radial_power} g(z) dz; returns directions-scaled nodes z
    and weights. The Gaussian side lives within |v - z| < cutoff.
    """
    r = float(np.linalg.norm(v))
    L = _GAUSS_CUTOFF
    scale = 2**level
    t, tw = leggauss(12)
    h = 2.5 / scale
    p = radial_power + 2.0
    if r < L:
        x, w = roots_jacobi(16 * scale, 0.0, p)
        rho0 = 0.5 * (x + 1.0)
        w0 = w / 2.0 ** (p + 1.0)
        lo, hi = 1.0, r + L
    else:
        rho0 = np.empty(0)
        w0 = np.empty(0)
        lo, hi = r - L, r + L
    npan = max(1, int(np.ceil((hi - lo) / h)))
    e = np.linspace(lo, hi, npan + 1)
    mid = 0.5 * (e[:-1] + e[1:])
    half = 0.5 * (e[1:] - e[:-1])
    rho1 = (mid[:, None] + half[:, None] * t).ravel()
    w1 = (half[:, None] * tw).ravel() * rho1**p
    rho = np.concatenate([rho0, rho1])
    wr = np.concatenate([w0, w1])

    theta_max = np.pi if r <= L else float(np.arcsin(L / r))
    nt = 32 * scale
    # two panels in theta, the first one narrow around the axis where the
    # Gaussian side concentrates for large |v|
    split = min(theta_max, 4.0 / np.sqrt(max(r, 1.0)))
    tt, ttw = leggauss(nt // 2)
    th = np.concatenate([0.5 * split * (tt + 1), split + 0.5 * (theta_max - split) * (tt + 1)])
    thw = np.concatenate([0.5 * split * ttw, 0.5 * (theta_max - split) * ttw]) * np.sin(th)

    nphi = max(8, degree + 4)
    phi = 2 * np.pi * np.arange(nphi) / nphi
    st = np.sin(th)
    dirs = np.stack(
        [
            (st[:, None] * np.cos(phi)).ravel(),
            (st[:, None] * np.sin(phi)).ravel(),
            np.repeat(np.cos(th), nphi),
        ],
        axis=-1,
    )
    dirs = dirs @ _frame(v).T
    dw = np.repeat(thw, nphi) * (2 * np.pi / nphi)
    return rho, wr, dirs, dw


def _moments_at_level(v, gamma, degree, kernel, level):
    power = gamma + 2.0 if kernel == "tensor" else gamma
    rho, wr, dirs, dw = _sphere_rule(v, power, degree, level)
    idx = np.array(multi_indices(degree)).reshape(-1, 3)
    nb = len(idx)
    if kernel == "tensor":
        K = np.eye(3)[None] - dirs[:, :, None] * dirs[:, None, :]  # (ndir, 3, 3)
        K = K.reshape(-1, 9)
        out = np.zeros((nb, 9))
    else:
        out = np.zeros(nb)
    chunk = max(1, 40000 // len(dirs))
    for lo in range(0, len(rho), chunk):
        rr = rho[lo : lo + chunk]
        w = v[None, None, :] - rr[:, None, None] * dirs[None, :, :]  # (nr, ndir, 3)
        X = hermite_table(degree, w[..., 0])
        Y = hermite_table(degree, w[..., 1])
        Z = hermite_table(degree, w[..., 2])
        g0 = X[0] * Y[0] * Z[0]  # sqrt(mu)
        vals = X[idx[:, 0]] * Y[idx[:, 1]] * Z[idx[:, 2]] * g0[None]  # (nb, nr, ndir)
        W = wr[lo : lo + chunk, None] * dw[None, :]
        vals = vals * W[None]
        if kernel == "tensor":
            out += np.einsum("brd,dk->bk", vals, K, optimize=True)
        else:
            out += vals.sum(axis=(1, 2))
    if kernel == "tensor":
        return out.reshape(nb, 3, 3)
    return out


def convolution_moments(
    v,
    gamma: float,
    degree: int,
    kernel: str = "tensor",
    tol: float = 1e-9,
    max_level: int = 3,
) -> tuple[np.ndarray, float]:
    """M_alpha = int K(v - w) sqrt(mu)(w) Psi_alpha(w) dw for |alpha| <= degree.

    ``kernel="tensor"`` uses K = a (result shape (n, 3, 3)); ``"scalar"`` uses
    K(z) = |z|^gamma (shape (n,)). Order follows ``multi_indices(degree)``.
    Refined by doubling until the max change is below ``tol`` times the
    largest entry.
    """
    if kernel not in ("tensor", "scalar"):
        raise ValueError(f"unknown kernel {kernel!r}")
    v = np.asarray(v, dtype=float)
    prev = _moments_at_level(v, gamma, degree, kernel, 0)
    resid = np.inf
    for level in range(1, max_level + 1):
        cur = _moments_at_level(v, gamma, degree, kernel, level)
        resid = float(np.max(np.abs(cur - prev)) / max(np.max(np.abs(cur)), 1e-300))
        if resid < tol:
            return cur, resid
        prev = cur
    raise NumericalToleranceError(
        f"3-d convolution quadrature at v={v.tolist()} did not reach tol={tol:g}", residual=resid
    )


def convolve_gaussian_side(moments: np.ndarray, h: SpectralFunction) -> np.ndarray:
    """int K(v-w) sqrt(mu)(w) h(w) dw from precomputed moments."""
    degree = int(round((6 * len(moments)) ** (1 / 3)))  # rough, fixed below
    while basis_size(degree) < len(moments):
        degree += 1
    while basis_size(degree) > len(moments):
        degree -= 1
    if h.degree_cap > degree:
        raise ValueError(f"moments up to degree {degree} cannot resolve a degree-{h.degree_cap} function")
    c = h.pad(degree).to_vector()
    return np.tensordot(c, moments, axes=(0, 0))


def abar_direct(v, config: PotentialConfig, tol: float = 1e-9) -> np.ndarray:
    """abar(v) by full 3-d quadrature (independent of the profile tables)."""
    M, _ = convolution_moments(v, config.gamma, 0, "tensor", tol)
    return M[0]


def abar_derivatives(v, config: PotentialConfig, beta_max: int = 6, tol: float = 1e-9) -> dict:
    """{beta: d^beta abar(v)} for all |beta| <= beta_max.

    d^beta mu = (-1)^{|beta|} sqrt(beta!) sqrt(mu) Psi_beta, so every derivative
    falls on the Gaussian side of the convolution.
    """
    M, _ = convolution_moments(v, config.gamma, beta_max, "tensor", tol)
    out = {}
    for i, b in enumerate(multi_indices(beta_max)):
        out[b] = (-1) ** mi_abs(b) * sqrt(mi_factorial(b)) * M[i]
    return out


def abar_derivative(v, beta: Sequence[int], config: PotentialConfig, tol: float = 1e-9) -> np.ndarray:
    beta = check_multi_index(beta)
    M, _ = convolution_moments(v, config.gamma, mi_abs(beta), "tensor", tol)
    return (-1) ** mi_abs(beta) * sqrt(mi_factorial(beta)) * M[index_of(beta, mi_abs(beta))]


@lru_cache(maxsize=None)
def _psi0() -> SpectralFunction:
    return SpectralFunction.basis((0, 0, 0))


def _raise_multi(h: SpectralFunction, beta: Sequence[int]) -> SpectralFunction:
    for j, b in enumerate(beta):
        for _ in range(b):
            h = ladder(h, j, "raise")
    return h


def gaussian_side_derivative(h: SpectralFunction, beta: Sequence[int]) -> SpectralFunction:
    """g with d^beta (sqrt(mu) h) = sqrt(mu) g, i.e. g = (-1)^{|beta|} A_+^beta h."""
    return (-1) ** mi_abs(beta) * _raise_multi(h, beta)


def drift_density(i: int, j: int) -> SpectralFunction:
    """h_ij with d_i (v_j mu) = sqrt(mu) h_ij."""
    return gaussian_side_derivative(multiply_v(_psi0(), j), (1 if i == 0 else 0, 1 if i == 1 else 0, 1 if i == 2 else 0))


def potential_density(i: int, j: int) -> SpectralFunction:
    """h_ij with v_i v_j mu = sqrt(mu) h_ij."""
    return multiply_v(multiply_v(_psi0(), j), i)


@dataclass(frozen=True)
class DriftPotential:
    b: np.ndarray  # sum_j abar_ij v_j = sum_j a_ij * (v_j mu)
    drift: float  # sum_ij (d_i a_ij) * (v_j mu) = sum_ij d_i (abar_ij v_j)
    q: float  # sum_ij abar_ij v_i v_j


def drift_and_potential(v, field: CoefficientField, tol: float = 1e-9) -> DriftPotential:
    """Drift vector, drift divergence and potential at v.

    b and q come from the profile tables; the divergence is a 3-d quadrature
    with the derivative on the Gaussian side.
    """
    v = np.asarray(v, dtype=float)
    A = field.abar(v)
    b = A @ v
    q = float(v @ A @ v)
    derivs = abar_derivatives(v, field.config, 1, tol)
    e = [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    drift = float(np.trace(A) + sum(derivs[e[i]][i, j] * v[j] for i in range(3) for j in range(3)))
    return DriftPotential(b, drift, q)


def lemma21_quantities(v, config: PotentialConfig, beta_max: int = 6, tol: float = 1e-9) -> dict:
    """Per beta: max_ij |d^beta abar_ij|, |d^beta drift|, |d^beta q| at v (all 3-d quadrature)."""
    M, resid = convolution_moments(v, config.gamma, beta_max + 2, "tensor", tol)
    out = {}
    drift_h = {(i, j): drift_density(i, j) for i in range(3) for j in range(3)}
    pot_h = {(i, j): potential_density(i, j) for i in range(3) for j in range(3)}
    deg = beta_max + 2
    for k, b in enumerate(multi_indices(beta_max)):
        dab = (-1) ** mi_abs(b) * sqrt(mi_factorial(b)) * M[index_of(b, deg)]
        drift = 0.0
        q = 0.0
        for (i, j), h in drift_h.items():
            drift += convolve_gaussian_side(M, gaussian_side_derivative(h, b))[i, j]
        for (i, j), h in pot_h.items():
            q += convolve_gaussian_side(M, gaussian_side_derivative(h, b))[i, j]
        out[b] = {"abar": float(np.max(np.abs(dab))), "drift": abs(float(drift)), "q": abs(float(q))}
    out["_residual"] = resid
    return out


def weighted_moment_ratio(v, config: PotentialConfig, tol: float = 1e-9) -> float:
    """(int |v-w|^gamma mu(w) dw) / <v>^gamma."""
    M, _ = convolution_moments(v, config.gamma, 0, "scalar", tol)
    # sqrt(mu) Psi_0 = mu
    return float(M[0] / japanese(v) ** config.gamma)


# ----------------------------------------------------------------------------
# Gaussian-mixture representation
#
# |z|^gamma = Gamma(-gamma/2)^{-1} int_0^inf s^{-gamma/2-1} exp(-s |z|^2) ds turns
# a * mu into a one-parameter family of Gaussian convolutions done in closed
# form. With sigma = 1/(1+2s) and kappa = s sigma,
#
#   abar_jk(v) = Gamma(-gamma/2)^{-1} int s^{-gamma/2-1} sigma^{3/2} exp(-kappa |v|^2)
#                [delta_jk (sigma^2 |v|^2 + 2 sigma) - sigma^2 v_j v_k] ds,
#
# so every derivative d^beta abar is an s-integral of Hermite-type closed forms.


def _mixture_nodes(gamma: float, h: float, umax: float = 5.0):
    """exp-sinh rule in s; returns (sigma, kappa, weights incl. the s-density)."""
    u = np.arange(-umax, umax + 0.5 * h, h)
    s = np.exp(0.5 * np.pi * np.sinh(u))
    ds = s * 0.5 * np.pi * np.cosh(u) * h
    sig = 1.0 / (1.0 + 2.0 * s)
    w = s ** (-gamma / 2 - 1) * sig**1.5 / gamma_fn(-gamma / 2) * ds
    keep = w > 0
    return sig[keep], (s * sig)[keep], w[keep]


def _axis_jets(x: np.ndarray, kappa: np.ndarray, n: int) -> np.ndarray:
    """d^n (x^p exp(-kappa x^2)) for p = 0, 1, 2; shape (3, len(x), len(kappa))."""
    rk = np.sqrt(kappa)[None, :]
    y = x[:, None] * rk
    g = np.exp(-(y * y))
    # E_m = d^m exp(-kappa x^2) = (-sqrt kappa)^m H_m(y) exp(-y^2), physicists' H
    H = [np.ones_like(y), 2 * y]
    for m in range(1, n):
        H.append(2 * y * H[m] - 2 * m * H[m - 1])
    E = [(-rk) ** m * H[m] * g for m in range(n + 1)]
    X = x[:, None]
    out = np.empty((3,) + y.shape)
    out[0] = E[n]
    out[1] = X * E[n] + (n * E[n - 1] if n >= 1 else 0.0)
    out[2] = X * X * E[n] + (2 * n * X * E[n - 1] if n >= 1 else 0.0) + (n * (n - 1) * E[n - 2] if n >= 2 else 0.0)
    return out


def _mixture_eval(v: np.ndarray, beta: tuple[int, int, int], gamma: float, h: float) -> np.ndarray:
    sig, kap, w = _mixture_nodes(gamma, h)
    pts = v.reshape(-1, 3)
    out = np.empty((len(pts), 3, 3))
    for lo in range(0, len(pts), 4000):
        p = pts[lo : lo + 4000]
        J = [_axis_jets(p[:, i], kap, beta[i]) for i in range(3)]

        def mono(e):
            return J[0][e[0]] * J[1][e[1]] * J[2][e[2]]

        base = mono((0, 0, 0))
        r2 = mono((2, 0, 0)) + mono((0, 2, 0)) + mono((0, 0, 2))
        iso = (sig**2 * r2 + 2 * sig * base) @ w
        blk = np.empty((len(p), 3, 3))
        for j in range(3):
            for k in range(j, 3):
                e = [0, 0, 0]
                e[j] += 1
                e[k] += 1
                blk[:, j, k] = blk[:, k, j] = -(sig**2 * mono(e)) @ w
        blk[:, [0, 1, 2], [0, 1, 2]] += iso[:, None]
        out[lo : lo + 4000] = blk
    return out.reshape(v.shape[:-1] + (3, 3))


def abar_mixture_derivative(
    v, beta: Sequence[int], config: PotentialConfig, tol: float = 1e-10, h0: float = 0.1
) -> np.ndarray:
    """d^beta abar at a point or (..., 3) array via the Gaussian mixture; shape (..., 3, 3).

    The exp-sinh step is halved until successive results agree to ``tol``
    relative to their largest entry.
    """
    beta = check_multi_index(beta)
    v = np.asarray(v, dtype=float)
    h = h0
    prev = _mixture_eval(v, beta, config.gamma, h)
    resid = np.inf
    for _ in range(4):
        h *= 0.5
        cur = _mixture_eval(v, beta, config.gamma, h)
        resid = float(np.max(np.abs(cur - prev)) / max(np.max(np.abs(cur)), 1e-300))
        if resid < tol:
            return cur
        prev = cur
    raise NumericalToleranceError(f"mixture quadrature for beta={beta} did not reach tol={tol:g}", residual=resid)


def _axis_jet_family(x: np.ndarray, kappa: np.ndarray, nmax: int) -> list[np.ndarray]:
    """[_axis_jets(x, kappa, n) for n <= nmax] sharing one Hermite recursion."""
    rk = np.sqrt(kappa)[None, :]
    y = x[:, None] * rk
    g = np.exp(-(y * y))
    H = [np.ones_like(y), 2 * y]
    for m in range(1, nmax):
        H.append(2 * y * H[m] - 2 * m * H[m - 1])
    E = [(-rk) ** m * H[m] * g for m in range(nmax + 1)]
    X = x[:, None]
    fam = []
    for n in range(nmax + 1):
        out = np.empty((3,) + y.shape)
        out[0] = E[n]
        out[1] = X * E[n] + (n * E[n - 1] if n >= 1 else 0.0)
        out[2] = X * X * E[n] + (2 * n * X * E[n - 1] if n >= 1 else 0.0) + (n * (n - 1) * E[n - 2] if n >= 2 else 0.0)
        fam.append(out)
    return fam


def _mixture_eval_many(v: np.ndarray, betas, gamma: float, h: float) -> dict:
    sig, kap, w = _mixture_nodes(gamma, h)
    pts = v.reshape(-1, 3)
    nmax = max(max(b) for b in betas)
    out = {b: np.empty((len(pts), 3, 3)) for b in betas}
    for lo in range(0, len(pts), 2000):
        p = pts[lo : lo + 2000]
        fams = [_axis_jet_family(p[:, i], kap, nmax) for i in range(3)]
        for b in betas:
            J = [fams[i][b[i]] for i in range(3)]

            def mono(e):
                return J[0][e[0]] * J[1][e[1]] * J[2][e[2]]

            r2 = mono((2, 0, 0)) + mono((0, 2, 0)) + mono((0, 0, 2))
            iso = (sig**2 * r2 + 2 * sig * mono((0, 0, 0))) @ w
            blk = out[b][lo : lo + 2000]
            for j in range(3):
                for k in range(j, 3):
                    e = [0, 0, 0]
                    e[j] += 1
                    e[k] += 1
                    blk[:, j, k] = blk[:, k, j] = -(sig**2 * mono(e)) @ w
            blk[:, [0, 1, 2], [0, 1, 2]] += iso[:, None]
    return {b: a.reshape(v.shape[:-1] + (3, 3)) for b, a in out.items()}


def abar_mixture_derivatives(v, betas, config: PotentialConfig, tol: float = 1e-10, h0: float = 0.1) -> dict:
    """{beta: d^beta abar} for several beta at once; same step control as
    ``abar_mixture_derivative`` applied to all of them jointly."""
    betas = [check_multi_index(b) for b in betas]
    v = np.asarray(v, dtype=float)
    h = h0
    prev = _mixture_eval_many(v, betas, config.gamma, h)
    resid = np.inf
    for _ in range(4):
        h *= 0.5
        cur = _mixture_eval_many(v, betas, config.gamma, h)
        resid = max(float(np.max(np.abs(cur[b] - prev[b])) / max(np.max(np.abs(cur[b])), 1e-300)) for b in betas)
        if resid < tol:
            return cur
        prev = cur
    raise NumericalToleranceError(f"mixture quadrature did not reach tol={tol:g}", residual=resid)


# ----------------------------------------------------------------------------
# bound probes


def probe_points(n: int, r_max: float, seed: int) -> np.ndarray:
    """n points with radii uniform in [0, r_max] and uniformly random directions."""
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    return d * rng.uniform(0.0, r_max, n)[:, None]


def lemma21_probe(points, config: PotentialConfig, beta_max: int = 6, tol: float = 1e-10, h0: float = 0.1) -> dict[int, float]:
    """Per order k = 1..beta_max: max over points, |beta| = k and (i, j) of
    |d^beta abar_ij(v)| / (<v>^{gamma+1} sqrt(beta!)).
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    scale = japanese(points) ** (config.gamma + 1)
    out = {}
    for k in range(1, beta_max + 1):
        best = 0.0
        for b in indices_of_degree(k):
            dab = abar_mixture_derivative(points, b, config, tol=tol, h0=h0)
            r = np.max(np.abs(dab), axis=(1, 2)) / (scale * sqrt(mi_factorial(b)))
            best = max(best, float(r.max()))
        out[k] = best
    return out


def potential_probe(points, field: CoefficientField) -> float:
    """max over points of |q(v)| / <v>^{gamma+1}, the beta = 0 case of the potential bound."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    return float(np.max(np.abs(field.potential(points)) / japanese(points) ** (field.gamma + 1)))


def moment_ratio_bounds(config: PotentialConfig, radii, tol: float = 1e-9) -> tuple[float, float]:
    """(min, max) of (int |v-w|^gamma mu(w) dw) / <v>^gamma over v = r e_3."""
    vals = [weighted_moment_ratio(np.array([0.0, 0.0, r]), config, tol) for r in radii]
    return float(min(vals)), float(max(vals))
