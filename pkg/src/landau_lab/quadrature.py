"""Quadrature rules on R^3 for Hermite-expanded integrands.

Two families:

* ``TensorRule`` -- tensor Gauss rule for the weight exp(-|v|^2/2) with Q nodes
  per axis, weights folded so that ``sum(w * g(nodes))`` approximates the
  plain integral of g. Exact for Psi_alpha Psi_beta when |alpha|,|beta| < Q per
  axis. Supports sum-factorized Gram assembly.
* ``SphericalRule`` -- composite Gauss-Legendre in |v| times a Gauss-Legendre
  by trapezoid rule on the sphere. Suited to radial weights such as
  <v>^{2 theta}, whose complex singularities at |v|^2 = -1 slow Gauss-Hermite
  down, and to direction-dependent weights like vhat vhat^T. Never places a
  node at the origin.

Pure <v>^{2 theta} Grams are computed without any 3-d rule: a Laplace
representation of (1 + r^2)^theta turns the weight into a mixture of
separable Gaussians, and each Gaussian needs only exact 1-d Gauss rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.special import gamma as gamma_fn
from scipy.special import roots_jacobi

from .errors import NumericalToleranceError
from .hermite import basis_size, hermite_table, multi_indices


@dataclass(frozen=True)
class TensorRule:
    Q: int

    def __post_init__(self):
        if self.Q < 1:
            raise ValueError("Q must be >= 1")
        if self.Q > 180:
            raise ValueError("Q > 180 overflows the folded weights")

    @cached_property
    def _1d(self) -> tuple[np.ndarray, np.ndarray]:
        x, w = hermegauss(self.Q)
        return x, w * np.exp(0.5 * x * x)

    @property
    def x(self) -> np.ndarray:
        return self._1d[0]

    @property
    def w(self) -> np.ndarray:
        return self._1d[1]

    @cached_property
    def nodes(self) -> np.ndarray:
        X, Y, Z = np.meshgrid(self.x, self.x, self.x, indexing="ij")
        return np.stack([X, Y, Z], axis=-1)  # (Q, Q, Q, 3)

    @cached_property
    def weights(self) -> np.ndarray:
        w = self.w
        return w[:, None, None] * w[None, :, None] * w[None, None, :]

    @property
    def radius_max(self) -> float:
        return float(np.sqrt(3.0) * np.max(np.abs(self.x)))

    def table(self, n: int) -> np.ndarray:
        return hermite_table(n, self.x)

    def evaluate(self, coeffs: np.ndarray) -> np.ndarray:
        """Values of sum c_abc psi_a psi_b psi_c on the (Q, Q, Q) grid."""
        n = coeffs.shape[0] - 1
        P = self.table(n)
        t = np.tensordot(coeffs, P, axes=([2], [0]))  # a b k
        t = np.tensordot(t, P, axes=([1], [0]))  # a k j
        t = np.tensordot(t, P, axes=([0], [0]))  # k j i
        return t.transpose(2, 1, 0)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * values))

    def gram(self, W: np.ndarray, K: int) -> np.ndarray:
        """Matrix int W Psi_a Psi_b dv over basis(K), sum-factorized.

        W holds weight-function values on the (Q, Q, Q) grid.
        """
        return weighted_gram(self, W, K)


def weighted_gram(rule: TensorRule, W: np.ndarray, K: int) -> np.ndarray:
    Q = rule.Q
    n = K + 1
    P = rule.table(K)  # (n, Q)
    F = W * rule.weights
    PP = (P[:, None, :] * P[None, :, :]).reshape(n * n, Q)  # (a,b) x i
    # contract x-axis: T1[a1, b1, j, k]
    T1 = (PP @ F.reshape(Q, Q * Q)).reshape(n, n, Q, Q)
    # contract y-axis, keeping only a1 + a2 <= K and b1 + b2 <= K
    pairs = [(a1, a2) for a1 in range(n) for a2 in range(n - a1)]
    npair = len(pairs)
    pair_pos = {p: i for i, p in enumerate(pairs)}
    T2 = np.empty((npair, npair, Q))
    pa = np.array(pairs)
    for a1 in range(n):
        # T1[a1] : (b1, j, k); contract j with P[a2] P[b2]
        t = np.einsum("bjk,cj,dj->cbdk", T1[a1], P[: n - a1], P, optimize=True)
        # t[a2, b1, b2, k]
        rows = [pair_pos[(a1, a2)] for a2 in range(n - a1)]
        T2[rows] = t[:, pa[:, 0], pa[:, 1], :]
    # contract z-axis
    P3 = (P[:, None, :] * P[None, :, :]).reshape(n * n, Q).T  # Q x (a3,b3)
    pos = {a: i for i, a in enumerate(multi_indices(K))}
    size = basis_size(K)
    M = np.zeros((size, size))
    col_a3 = []
    col_b = []
    for pB, (b1, b2) in enumerate(pairs):
        for b3 in range(n - b1 - b2):
            col_a3.append((pB, b3))
            col_b.append(pos[(b1, b2, b3)])
    col_pB = np.array([c[0] for c in col_a3])
    col_b3 = np.array([c[1] for c in col_a3])
    col_b = np.array(col_b)
    for pA, (a1, a2) in enumerate(pairs):
        R = (T2[pA] @ P3).reshape(npair, n, n)  # (pB, a3, b3)
        for a3 in range(n - a1 - a2):
            M[pos[(a1, a2, a3)], col_b] = R[col_pB, a3, col_b3]
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class SphericalRule:
    """Composite radial Gauss-Legendre x (Gauss-Legendre in cos theta) x trapezoid in phi."""

    r_max: float
    panel_width: float = 1.0
    n_radial: int = 16
    n_u: int = 24
    n_phi: int = 48
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def for_degree(cls, p: int, refine: int = 1, r_extra: float = 10.0) -> "SphericalRule":
        """Rule resolving angular polynomials of degree p times Gaussian-decaying radial parts."""
        r_max = float(np.sqrt(max(p, 1)) + r_extra)
        return cls(
            r_max=r_max,
            panel_width=1.0 / refine,
            n_radial=16,
            n_u=refine * (p // 2 + 4),
            n_phi=refine * (p + 6),
        )

    def _build(self):
        if "nodes" in self._cache:
            return self._cache["nodes"], self._cache["weights"]
        npan = int(np.ceil(self.r_max / self.panel_width))
        edges = np.linspace(0.0, self.r_max, npan + 1)
        t, tw = leggauss(self.n_radial)
        r = ((edges[:-1, None] + edges[1:, None]) / 2 + (edges[1:, None] - edges[:-1, None]) / 2 * t).ravel()
        rw = ((edges[1:, None] - edges[:-1, None]) / 2 * tw).ravel()
        u, uw = leggauss(self.n_u)
        phi = 2 * np.pi * np.arange(self.n_phi) / self.n_phi
        pw = np.full(self.n_phi, 2 * np.pi / self.n_phi)
        s = np.sqrt(1 - u * u)
        dirs = np.stack(
            [
                (s[:, None] * np.cos(phi)[None, :]).ravel(),
                (s[:, None] * np.sin(phi)[None, :]).ravel(),
                np.repeat(u, self.n_phi),
            ],
            axis=-1,
        )
        dw = (uw[:, None] * pw[None, :]).ravel()
        nodes = (r[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
        weights = (rw[:, None] * r[:, None] ** 2 * dw[None, :]).ravel()
        self._cache["nodes"] = nodes
        self._cache["weights"] = weights
        return nodes, weights

    @property
    def nodes(self) -> np.ndarray:
        return self._build()[0]

    @property
    def weights(self) -> np.ndarray:
        return self._build()[1]

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * values))

    def describe(self) -> dict:
        return {
            "kind": "spherical",
            "r_max": self.r_max,
            "panel_width": self.panel_width,
            "n_radial": self.n_radial,
            "n_u": self.n_u,
            "n_phi": self.n_phi,
        }

    def chunks(self, size: int = 20000):
        """Yield (nodes, weights) slices of at most ``size`` nodes."""
        nodes, weights = self._build()
        for lo in range(0, len(weights), size):
            yield nodes[lo : lo + size], weights[lo : lo + size]


# ----------------------------------------------------------------------------
# Hermite functions and their derivatives at scattered nodes


def derivative_tables(nmax: int, kmax: int, x) -> np.ndarray:
    """psi_n^{(k)}(x) for n <= nmax, k <= kmax; shape (kmax+1, nmax+1) + x.shape.

    Uses psi_n' = (sqrt(n) psi_{n-1} - sqrt(n+1) psi_{n+1}) / 2.
    """
    x = np.asarray(x, dtype=float)
    P = hermite_table(nmax + kmax, x)
    out = np.empty((kmax + 1, nmax + 1) + x.shape)
    out[0] = P[: nmax + 1]
    cur = P
    for k in range(1, kmax + 1):
        top = cur.shape[0] - 1
        nxt = np.empty((top,) + x.shape)
        nxt[0] = -0.5 * cur[1]
        for n in range(1, top):
            nxt[n] = 0.5 * (np.sqrt(n) * cur[n - 1] - np.sqrt(n + 1.0) * cur[n + 1])
        out[k] = nxt[: nmax + 1]
        cur = nxt
    return out


class NodeTables:
    """Values of d^delta Psi_alpha at a fixed set of points, |delta| per axis <= kmax."""

    def __init__(self, nodes: np.ndarray, nmax: int, kmax: int = 0):
        self.nodes = np.asarray(nodes, dtype=float)
        self.nmax = nmax
        self.kmax = kmax
        self._t = [derivative_tables(nmax, kmax, self.nodes[:, i]) for i in range(3)]

    def values(self, indices, delta=(0, 0, 0)) -> np.ndarray:
        """Array (len(indices), n_nodes)."""
        idx = np.asarray(indices, dtype=np.intp).reshape(-1, 3)
        if max(delta) > self.kmax:
            raise ValueError(f"derivative order {delta} exceeds table order {self.kmax}")
        tx, ty, tz = self._t
        return tx[delta[0]][idx[:, 0]] * ty[delta[1]][idx[:, 1]] * tz[delta[2]][idx[:, 2]]


# ----------------------------------------------------------------------------
# separable Gaussian-mixture Grams


def gaussian_moment_matrices(K: int, lam: np.ndarray, p: int = 0) -> np.ndarray:
    """int psi_a psi_b x^p exp(-lam x^2) dx for a, b <= K; shape (len(lam), K+1, K+1).

    psi_a psi_b exp(-lam x^2) is a polynomial times exp(-(1/2 + lam) x^2), so a
    rescaled Gauss rule with K + p/2 + 2 nodes is exact.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    Q = K + p // 2 + 2
    y, w = hermegauss(Q)
    scale = 1.0 / np.sqrt(1.0 + 2.0 * lam)
    x = y[None, :] * scale[:, None]
    P = hermite_table(K, x)  # (K+1, M, Q)
    # psi_a psi_b exp(-lam x^2) = poly(x) exp(-y^2/2); fold exp(y^2/2) back in
    fold = w[None, :] * scale[:, None] * np.exp(0.5 * y * y)[None, :] * np.exp(-lam[:, None] * x * x) * x**p
    return np.einsum("amq,bmq,mq->mab", P, P, fold, optimize=True)


def separable_gram(K: int, omega: np.ndarray, X: np.ndarray, Y: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """sum_m omega_m X_m[a1,b1] Y_m[a2,b2] Z_m[a3,b3] over basis(K) x basis(K)."""
    n = K + 1
    pairs = np.array([(a1, a2) for a1 in range(n) for a2 in range(n - a1)], dtype=np.intp).reshape(-1, 2)
    npair = len(pairs)
    XY = X[:, pairs[:, 0][:, None], pairs[:, 0][None, :]] * Y[:, pairs[:, 1][:, None], pairs[:, 1][None, :]]
    XY *= omega[:, None, None]
    Zf = Z.reshape(len(omega), n * n)
    pos = {a: i for i, a in enumerate(multi_indices(K))}
    # scatter maps: (pair, a3) -> basis position, only for valid degrees
    rows_p, rows_a3, rows_pos = [], [], []
    for ip, (a1, a2) in enumerate(pairs):
        for a3 in range(n - a1 - a2):
            rows_p.append(ip)
            rows_a3.append(a3)
            rows_pos.append(pos[(int(a1), int(a2), a3)])
    rows_p = np.array(rows_p)
    rows_a3 = np.array(rows_a3)
    rows_pos = np.array(rows_pos)
    G = np.zeros((basis_size(K), basis_size(K)))
    block = max(1, 4_000_000 // (npair * n * n))
    for lo in range(0, npair, block):
        hi = min(npair, lo + block)
        R = (XY[:, lo:hi, :].reshape(len(omega), -1).T @ Zf).reshape(hi - lo, npair, n, n)
        sel = (rows_p >= lo) & (rows_p < hi)
        rp, ra, rpos = rows_p[sel] - lo, rows_a3[sel], rows_pos[sel]
        # R[p, q, a3, b3] -> G[(p,a3), (q,b3)]
        G[rpos[:, None], rows_pos[None, :]] = R[rp[:, None], rows_p[None, :], ra[:, None], rows_a3[None, :]]
    return 0.5 * (G + G.T)


def laplace_rule(phi: float, M: int) -> tuple[np.ndarray, np.ndarray]:
    """(lam, omega) with (1 + r^2)^phi ~= sum omega exp(-lam r^2), for phi < 0.

    From (1+r^2)^phi = Gamma(-phi)^{-1} int_0^inf s^{-phi-1} e^{-s(1+r^2)} ds
    with s = (1/sigma - 1)/2 and a Gauss-Jacobi rule absorbing (1 - sigma)^{-phi-1}.
    """
    if phi >= 0:
        raise ValueError("laplace_rule needs phi < 0")
    a = -phi - 1.0
    x, w = roots_jacobi(M, a, 0.0)
    sig = 0.5 * (x + 1.0)
    s = 0.5 * (1.0 / sig - 1.0)
    omega = w / 2.0 ** (a + 1.0) * (2.0 * sig) ** (phi + 1.0) * np.exp(-s) / (2.0 * sig**2) / gamma_fn(-phi)
    return s, omega


def _polynomial_split(theta: float) -> tuple[float, list[tuple[float, tuple[int, int, int]]]]:
    """(1+r^2)^theta = (1+r^2)^phi * sum c x^{2i} y^{2j} z^{2k} with phi <= 0."""
    n = max(0, int(np.ceil(theta)))
    phi = theta - n
    terms = []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            for k in range(n + 1 - i - j):
                l = n - i - j - k
                c = gamma_fn(n + 1) / (gamma_fn(i + 1) * gamma_fn(j + 1) * gamma_fn(k + 1) * gamma_fn(l + 1))
                terms.append((float(c), (i, j, k)))
    return phi, terms


def _laplace_gram_at(K: int, theta: float, M: int) -> np.ndarray:
    phi, terms = _polynomial_split(theta)
    if phi == 0.0:
        lam, omega = np.zeros(1), np.ones(1)
    else:
        lam, omega = laplace_rule(phi, M)
    tables = {}
    G = np.zeros((basis_size(K), basis_size(K)))
    for c, (i, j, k) in terms:
        for p in {2 * i, 2 * j, 2 * k}:
            if p not in tables:
                tables[p] = gaussian_moment_matrices(K, lam, p)
        G += c * separable_gram(K, omega, tables[2 * i], tables[2 * j], tables[2 * k])
    return G


def laplace_gram(K: int, theta: float, tol: float = 1e-11, M0: int = 40, max_doublings: int = 3) -> np.ndarray:
    """int (1 + |v|^2)^theta Psi_a Psi_b dv over basis(K), refined until stable to ``tol``."""
    if float(theta).is_integer() and theta >= 0:
        return _laplace_gram_at(K, theta, 1)
    prev = _laplace_gram_at(K, theta, M0)
    M = M0
    resid = np.inf
    for _ in range(max_doublings):
        M *= 2
        cur = _laplace_gram_at(K, theta, M)
        resid = float(np.max(np.abs(cur - prev)) / np.max(np.abs(cur)))
        if resid < tol:
            return cur
        prev = cur
    raise NumericalToleranceError(f"Laplace Gram for theta={theta} did not reach tol={tol:g}", residual=resid)
