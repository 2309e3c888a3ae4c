"""Weighted L2 norms, the anisotropic norms ||.||_A and ||.||_{A,theta}, the
projection P_v, and the coercivity functional.

Norms of single functions are quadrature sums over evaluated values on a
spherical product rule (no node at the origin, so P_v is always defined
there). For sweeps over many functions the same integrals are assembled once
as Gram matrices over the Hermite basis, so that every norm becomes a
quadratic form in the coefficient vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .coefficients import CoefficientField
from .hermite import SpectralFunction, basis_size, check_multi_index, multi_indices
from .quadrature import NodeTables, SphericalRule, laplace_gram

_UNITS = ((1, 0, 0), (0, 1, 0), (0, 0, 1))


def japanese_weight(v, theta: float) -> np.ndarray:
    """<v>^{2 theta} = (1 + |v|^2)^theta."""
    v = np.asarray(v, dtype=float)
    return (1.0 + np.sum(v * v, axis=-1)) ** theta


def default_rule(degree: int) -> SphericalRule:
    """Rule for integrands (polynomial of total degree <= ``degree``) x Gaussian x smooth radial weight."""
    return SphericalRule.for_degree(degree + 2)


# ----------------------------------------------------------------------------
# derivatives of the weight <v>^{2 theta}


@lru_cache(maxsize=None)
def _weight_jet_polys(beta: tuple[int, int, int]) -> tuple[tuple[int, tuple[tuple[tuple[int, int, int], float], ...]], ...]:
    """d^beta phi(|v|^2) = sum_k phi^{(k)}(|v|^2) P_k(v); returns ((k, ((monomial, coef), ...)), ...)."""
    if beta == (0, 0, 0):
        return ((0, (((0, 0, 0), 1.0),)),)
    j = next(i for i in range(3) if beta[i] > 0)
    prev = list(beta)
    prev[j] -= 1
    acc: dict[int, dict[tuple[int, int, int], float]] = {}

    def add(k, mono, c):
        acc.setdefault(k, {})
        acc[k][mono] = acc[k].get(mono, 0.0) + c

    for k, poly in _weight_jet_polys(tuple(prev)):
        for mono, c in poly:
            up = list(mono)
            up[j] += 1
            add(k + 1, tuple(up), 2.0 * c)
            if mono[j] > 0:
                dn = list(mono)
                dn[j] -= 1
                add(k, tuple(dn), c * mono[j])
    return tuple((k, tuple(sorted(p.items()))) for k, p in sorted(acc.items()))


def weight_derivative(v, theta: float, beta: Sequence[int]) -> np.ndarray:
    """d^beta <v>^{2 theta} at an (..., 3) array of points."""
    beta = check_multi_index(beta)
    v = np.asarray(v, dtype=float)
    s1 = 1.0 + np.sum(v * v, axis=-1)
    out = np.zeros(s1.shape)
    for k, poly in _weight_jet_polys(beta):
        falling = np.prod([theta - i for i in range(k)]) if k else 1.0
        if falling == 0.0:
            continue
        P = sum(c * v[..., 0] ** m[0] * v[..., 1] ** m[1] * v[..., 2] ** m[2] for m, c in poly)
        out += falling * s1 ** (theta - k) * P
    return out


# ----------------------------------------------------------------------------
# pointwise norms


def _values(f: SpectralFunction, nodes: np.ndarray, kmax: int = 0):
    T = NodeTables(nodes, f.degree_cap, kmax)
    idx = multi_indices(f.degree_cap)
    c = f.to_vector()
    val = c @ T.values(idx)
    grad = [c @ T.values(idx, e) for e in _UNITS] if kmax else None
    return val, grad


def weighted_l2(f: SpectralFunction, theta: float, rule: SphericalRule | None = None) -> float:
    """||<v>^theta f||_{L2}."""
    rule = rule or default_rule(2 * f.degree_cap)
    acc = 0.0
    for nodes, w in rule.chunks():
        val, _ = _values(f, nodes)
        acc += float(np.sum(w * japanese_weight(nodes, theta) * val * val))
    return float(np.sqrt(acc))


def pv_project(G, v, at_origin: str = "zero") -> np.ndarray:
    """P_v G = (G . v) v / |v|^2 for (..., 3) arrays.

    ``at_origin`` chooses the value at v = 0: "zero" returns 0, "parallel"
    returns G itself (all of G counted as parallel). A measure-zero choice.
    """
    G = np.asarray(G, dtype=float)
    v = np.asarray(v, dtype=float)
    r2 = np.sum(v * v, axis=-1)
    zero = r2 == 0.0
    out = (np.sum(G * v, axis=-1) / np.where(zero, 1.0, r2))[..., None] * v
    if np.any(zero):
        if at_origin == "parallel":
            out = np.where(zero[..., None], G, out)
        elif at_origin != "zero":
            raise ValueError(f"unknown origin policy {at_origin!r}")
    return out


def anorm(f: SpectralFunction, theta: float, field: CoefficientField, rule: SphericalRule | None = None) -> float:
    """||f||_{A,theta}: sqrt of int <v>^{2theta} (abar grad f . grad f + 1/4 (abar v . v) f^2)."""
    rule = rule or default_rule(2 * f.degree_cap + 2)
    acc = 0.0
    for nodes, w in rule.chunks():
        val, grad = _values(f, nodes, 1)
        g = np.stack(grad, axis=-1)
        A = field.abar(nodes)
        dens = np.einsum("nj,njk,nk->n", g, A, g) + 0.25 * field.potential(nodes) * val * val
        acc += float(np.sum(w * japanese_weight(nodes, theta) * dens))
    return float(np.sqrt(max(acc, 0.0)))


@dataclass(frozen=True)
class CoercivityRecord:
    lhs: float  # ||f||^2_{A,theta}
    parallel: float  # ||P_v grad f||^2_{2, gamma/2 + theta}
    perpendicular: float  # ||(I - P_v) grad f||^2_{2, 1 + gamma/2 + theta}
    mass: float  # ||f||^2_{2, 1 + gamma/2 + theta}
    gradient: float  # ||grad f||^2_{2, gamma/2 + theta}

    @property
    def rhs(self) -> float:
        return self.parallel + self.perpendicular + self.mass

    @property
    def ratio(self) -> float:
        """Admissible C1 for this f in the split inequality."""
        return self.lhs / self.rhs

    @property
    def ratio_simplified(self) -> float:
        """||f||_{A,theta} / (||grad f||_{2,gamma/2+theta} + ||f||_{2,1+gamma/2+theta})."""
        return float(np.sqrt(self.lhs) / (np.sqrt(self.gradient) + np.sqrt(self.mass)))


def coercivity_probe(
    f: SpectralFunction, theta: float, field: CoefficientField, rule: SphericalRule | None = None
) -> CoercivityRecord:
    gamma = field.gamma
    rule = rule or default_rule(2 * f.degree_cap + 2)
    lhs = par = perp = mass = grad2 = 0.0
    for nodes, w in rule.chunks():
        val, grad = _values(f, nodes, 1)
        g = np.stack(grad, axis=-1)
        A = field.abar(nodes)
        w_t = w * japanese_weight(nodes, theta)
        lhs += float(np.sum(w_t * (np.einsum("nj,njk,nk->n", g, A, g) + 0.25 * field.potential(nodes) * val * val)))
        pg = pv_project(g, nodes)
        qg = g - pg
        w0 = w * japanese_weight(nodes, gamma / 2 + theta)
        w1 = w * japanese_weight(nodes, 1 + gamma / 2 + theta)
        par += float(np.sum(w0 * np.sum(pg * pg, axis=-1)))
        perp += float(np.sum(w1 * np.sum(qg * qg, axis=-1)))
        mass += float(np.sum(w1 * val * val))
        grad2 += float(np.sum(w0 * np.sum(g * g, axis=-1)))
    return CoercivityRecord(lhs, par, perp, mass, grad2)


# ----------------------------------------------------------------------------
# Gram matrices


Terms = Callable[[np.ndarray], Iterable[tuple[tuple[int, int, int], tuple[int, int, int], np.ndarray]]]


def node_gram(K: int, terms: Terms, rule: SphericalRule, kmax: int = 1) -> np.ndarray:
    """sum over terms of int W d^dl Psi_a d^dr Psi_b, symmetrized, over basis(K).

    ``terms(nodes)`` yields (dl, dr, W) with W evaluated at the nodes.
    """
    idx = multi_indices(K)
    G = np.zeros((basis_size(K), basis_size(K)))
    for nodes, w in rule.chunks():
        T = NodeTables(nodes, K, kmax)
        cache: dict = {}

        def val(d):
            if d not in cache:
                cache[d] = T.values(idx, d)
            return cache[d]

        for dl, dr, W in terms(nodes):
            G += (val(dl) * (w * W)) @ val(dr).T
    return 0.5 * (G + G.T)


def weighted_l2_gram(K: int, theta: float) -> np.ndarray:
    """int <v>^{2 theta} Psi_a Psi_b over basis(K) (separable Laplace route)."""
    return laplace_gram(K, theta)


def anorm_gram(K: int, theta: float, field: CoefficientField, rule: SphericalRule | None = None) -> np.ndarray:
    """Matrix of ||.||^2_{A,theta} over basis(K)."""
    rule = rule or default_rule(2 * K + 2)

    def terms(nodes):
        wt = japanese_weight(nodes, theta)
        A = field.abar(nodes)
        for j in range(3):
            for k in range(3):
                yield _UNITS[j], _UNITS[k], wt * A[:, j, k]
        yield (0, 0, 0), (0, 0, 0), 0.25 * wt * field.potential(nodes)

    return node_gram(K, terms, rule)


@dataclass(frozen=True)
class CoercivityGrams:
    lhs: np.ndarray
    parallel: np.ndarray
    perpendicular: np.ndarray
    mass: np.ndarray
    gradient: np.ndarray

    def record(self, c: np.ndarray) -> CoercivityRecord:
        q = lambda M: float(c @ M @ c)  # noqa: E731
        return CoercivityRecord(q(self.lhs), q(self.parallel), q(self.perpendicular), q(self.mass), q(self.gradient))

    def min_ratio(self) -> float:
        """Smallest lhs/rhs over the whole truncated space (generalized eigenvalue)."""
        from scipy.linalg import eigh

        rhs = self.parallel + self.perpendicular + self.mass
        return float(eigh(self.lhs, rhs, eigvals_only=True)[0])


def coercivity_grams(K: int, theta: float, field: CoefficientField, rule: SphericalRule | None = None) -> CoercivityGrams:
    gamma = field.gamma
    rule = rule or default_rule(2 * K + 2)
    lhs = anorm_gram(K, theta, field, rule)

    def par_terms(nodes):
        r2 = np.sum(nodes * nodes, axis=-1)
        w0 = japanese_weight(nodes, gamma / 2 + theta)
        for j in range(3):
            for k in range(3):
                yield _UNITS[j], _UNITS[k], w0 * nodes[:, j] * nodes[:, k] / r2

    def perp_terms(nodes):
        r2 = np.sum(nodes * nodes, axis=-1)
        w1 = japanese_weight(nodes, 1 + gamma / 2 + theta)
        for j in range(3):
            for k in range(3):
                yield _UNITS[j], _UNITS[k], w1 * ((j == k) - nodes[:, j] * nodes[:, k] / r2)

    def grad_terms(nodes):
        w0 = japanese_weight(nodes, gamma / 2 + theta)
        for j in range(3):
            yield _UNITS[j], _UNITS[j], w0

    par = node_gram(K, par_terms, rule)
    perp = node_gram(K, perp_terms, rule)
    grad = node_gram(K, grad_terms, rule)
    mass = laplace_gram(K, 1 + gamma / 2 + theta)
    return CoercivityGrams(lhs, par, perp, mass, grad)
