"""Hermite basis calculus on R^3.

The basis functions are psi_n(x) = 2^{-1/4} phi_n(x / sqrt 2), with phi_n the
standard Hermite functions, and Psi_alpha(v) = prod_j psi_{alpha_j}(v_j).
Psi_0 = sqrt(mu) for the unit Maxwellian mu = (2 pi)^{-3/2} exp(-|v|^2/2).

Ladder operators A_{+,j} = v_j/2 - d_j and A_{-,j} = v_j/2 + d_j act by

    A_{+,j} Psi_alpha = sqrt(alpha_j + 1) Psi_{alpha + e_j}
    A_{-,j} Psi_alpha = sqrt(alpha_j) Psi_{alpha - e_j}

so that d_j = (A_{-,j} - A_{+,j}) / 2 and v_j = A_{+,j} + A_{-,j}.

Axes are 0-based throughout (j in {0, 1, 2}).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial, prod
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

ORDERING_VERSION = "grlex-v1"

MultiIndex = tuple[int, int, int]


def check_multi_index(alpha: Sequence[int]) -> MultiIndex:
    if len(alpha) != 3:
        raise ValueError(f"multi-index must have 3 components, got {alpha!r}")
    if any(isinstance(x, bool) or int(x) != x for x in alpha):
        raise ValueError(f"multi-index components must be integers, got {alpha!r}")
    a = tuple(int(x) for x in alpha)
    if min(a) < 0:
        raise ValueError(f"multi-index components must be >= 0, got {alpha!r}")
    return a  # type: ignore[return-value]


def mi_abs(alpha: Sequence[int]) -> int:
    return int(sum(alpha))


def mi_factorial(alpha: Sequence[int]) -> int:
    return prod(factorial(a) for a in alpha)


def unit(j: int) -> MultiIndex:
    e = [0, 0, 0]
    e[j] = 1
    return tuple(e)  # type: ignore[return-value]


def mi_add(alpha: Sequence[int], beta: Sequence[int]) -> MultiIndex:
    return (alpha[0] + beta[0], alpha[1] + beta[1], alpha[2] + beta[2])


def mi_sub(alpha: Sequence[int], beta: Sequence[int]) -> MultiIndex:
    out = (alpha[0] - beta[0], alpha[1] - beta[1], alpha[2] - beta[2])
    if min(out) < 0:
        raise ValueError(f"{tuple(beta)} is not <= {tuple(alpha)}")
    return out


def mi_leq(beta: Sequence[int], alpha: Sequence[int]) -> bool:
    return all(b <= a for a, b in zip(alpha, beta))


def mi_binomial(alpha: Sequence[int], beta: Sequence[int]) -> int:
    """Multi-index binomial C_alpha^beta = prod_j C(alpha_j, beta_j)."""
    from math import comb

    return prod(comb(a, b) for a, b in zip(alpha, beta))


def sub_indices(alpha: Sequence[int]) -> list[MultiIndex]:
    """All beta <= alpha, in graded order."""
    out = [
        (b0, b1, b2)
        for b0 in range(alpha[0] + 1)
        for b1 in range(alpha[1] + 1)
        for b2 in range(alpha[2] + 1)
    ]
    out.sort(key=lambda b: (sum(b), tuple(-x for x in b)))
    return out


@lru_cache(maxsize=None)
def indices_of_degree(k: int) -> tuple[MultiIndex, ...]:
    """Multi-indices with |alpha| = k, (k,0,0) first."""
    return tuple(
        (a0, a1, k - a0 - a1) for a0 in range(k, -1, -1) for a1 in range(k - a0, -1, -1)
    )


@lru_cache(maxsize=None)
def multi_indices(D: int) -> tuple[MultiIndex, ...]:
    """Basis labels with |alpha| <= D in graded lexicographic order."""
    out: list[MultiIndex] = []
    for k in range(D + 1):
        out.extend(indices_of_degree(k))
    return tuple(out)


def basis_size(D: int) -> int:
    return (D + 1) * (D + 2) * (D + 3) // 6


@lru_cache(maxsize=None)
def _index_arrays(D: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    idx = np.array(multi_indices(D), dtype=np.intp).reshape(-1, 3)
    return idx[:, 0], idx[:, 1], idx[:, 2]


@lru_cache(maxsize=None)
def degree_mask(D: int) -> np.ndarray:
    n = np.arange(D + 1)
    mask = n[:, None, None] + n[None, :, None] + n[None, None, :] <= D
    mask.setflags(write=False)
    return mask


# ----------------------------------------------------------------------------
# 1-d functions


def hermite_table(nmax: int, x) -> np.ndarray:
    """psi_n(x) for n = 0..nmax, shape (nmax+1,) + x.shape.

    Three-term recurrence x psi_n = sqrt(n+1) psi_{n+1} + sqrt(n) psi_{n-1};
    no factorials, stable to n ~ 200 for |x| <= 40.
    """
    if nmax < 0:
        raise ValueError(f"nmax must be >= 0, got {nmax}")
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = (2.0 * np.pi) ** -0.25 * np.exp(-0.25 * x * x)
    if nmax >= 1:
        out[1] = x * out[0]
    for n in range(1, nmax):
        out[n + 1] = (x * out[n] - np.sqrt(n) * out[n - 1]) / np.sqrt(n + 1.0)
    return out


def hermite_eval_1d(n: int, x):
    """Evaluate psi_n at x (scalar or array)."""
    if n < 0:
        raise ValueError(f"Hermite index must be >= 0, got {n}")
    val = hermite_table(n, x)[n]
    return float(val) if np.ndim(val) == 0 else val


def basis_eval(alpha: Sequence[int], v) -> np.ndarray | float:
    """Psi_alpha(v) for a point or an (..., 3) array of points."""
    alpha = check_multi_index(alpha)
    v = np.asarray(v, dtype=float)
    val = (
        hermite_table(alpha[0], v[..., 0])[alpha[0]]
        * hermite_table(alpha[1], v[..., 1])[alpha[1]]
        * hermite_table(alpha[2], v[..., 2])[alpha[2]]
    )
    return float(val) if np.ndim(val) == 0 else val


# ----------------------------------------------------------------------------
# spectral functions


@dataclass(frozen=True, eq=False)
class SpectralFunction:
    """f = sum_{|alpha| <= D} c_alpha Psi_alpha.

    ``coeffs`` is a dense (D+1, D+1, D+1) array indexed by alpha; entries with
    |alpha| > D are zero.
    """

    degree_cap: int
    coeffs: np.ndarray

    def __post_init__(self):
        D = int(self.degree_cap)
        if D < 0:
            raise ValueError("degree_cap must be >= 0")
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (D + 1,) * 3:
            raise ValueError(f"coeffs shape {c.shape} does not match degree cap {D}")
        if np.any(c[~degree_mask(D)] != 0.0):
            raise ValueError("coefficients stored beyond the degree cap")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "degree_cap", D)
        object.__setattr__(self, "coeffs", c)

    # construction
    @classmethod
    def zeros(cls, D: int) -> "SpectralFunction":
        return cls(D, np.zeros((D + 1,) * 3))

    @classmethod
    def basis(cls, alpha: Sequence[int], D: int | None = None) -> "SpectralFunction":
        alpha = check_multi_index(alpha)
        D = mi_abs(alpha) if D is None else D
        if mi_abs(alpha) > D:
            raise ValueError(f"|{alpha}| exceeds degree cap {D}")
        c = np.zeros((D + 1,) * 3)
        c[alpha] = 1.0
        return cls(D, c)

    @classmethod
    def from_dict(cls, coeffs: dict, D: int | None = None) -> "SpectralFunction":
        keys = [check_multi_index(k) for k in coeffs]
        D = max((mi_abs(k) for k in keys), default=0) if D is None else D
        c = np.zeros((D + 1,) * 3)
        for k, val in zip(keys, coeffs.values()):
            if mi_abs(k) > D:
                raise ValueError(f"|{k}| exceeds degree cap {D}")
            c[k] = val
        return cls(D, c)

    @classmethod
    def from_vector(cls, vec, D: int) -> "SpectralFunction":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (basis_size(D),):
            raise ValueError(f"vector length {vec.shape} != basis size {basis_size(D)}")
        c = np.zeros((D + 1,) * 3)
        c[_index_arrays(D)] = vec
        return cls(D, c)

    @classmethod
    def random(cls, D: int, rng: np.random.Generator, kind: str = "normal") -> "SpectralFunction":
        n = basis_size(D)
        if kind == "normal":
            vec = rng.standard_normal(n)
        elif kind == "sign":
            vec = rng.choice(np.array([-1.0, 1.0]), size=n)
        else:
            raise ValueError(f"unknown random kind {kind!r}")
        return cls.from_vector(vec, D)

    # views
    def to_vector(self) -> np.ndarray:
        return self.coeffs[_index_arrays(self.degree_cap)].copy()

    def to_dict(self) -> dict[MultiIndex, float]:
        return {a: float(self.coeffs[a]) for a in multi_indices(self.degree_cap) if self.coeffs[a] != 0.0}

    def __getitem__(self, alpha: Sequence[int]) -> float:
        alpha = check_multi_index(alpha)
        if mi_abs(alpha) > self.degree_cap:
            return 0.0
        return float(self.coeffs[alpha])

    # degree bookkeeping
    def truncate(self, D: int) -> "SpectralFunction":
        """Orthogonal projection onto span{Psi_alpha : |alpha| <= D}."""
        if D < 0:
            raise ValueError("degree cap must be >= 0")
        m = min(D, self.degree_cap)
        c = np.zeros((D + 1,) * 3)
        c[: m + 1, : m + 1, : m + 1] = self.coeffs[: m + 1, : m + 1, : m + 1]
        c[~degree_mask(D)] = 0.0
        return SpectralFunction(D, c)

    def pad(self, D: int) -> "SpectralFunction":
        """Same function with a larger degree cap."""
        if D < self.degree_cap:
            raise ValueError(f"pad target {D} below current cap {self.degree_cap}; use truncate")
        return self.truncate(D)

    # algebra
    def _aligned(self, other: "SpectralFunction") -> tuple[np.ndarray, np.ndarray, int]:
        D = max(self.degree_cap, other.degree_cap)
        return self.pad(D).coeffs, other.pad(D).coeffs, D

    def __add__(self, other: "SpectralFunction") -> "SpectralFunction":
        a, b, D = self._aligned(other)
        return SpectralFunction(D, a + b)

    def __sub__(self, other: "SpectralFunction") -> "SpectralFunction":
        a, b, D = self._aligned(other)
        return SpectralFunction(D, a - b)

    def __mul__(self, s: float) -> "SpectralFunction":
        return SpectralFunction(self.degree_cap, float(s) * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralFunction":
        return SpectralFunction(self.degree_cap, -self.coeffs)

    def inner(self, other: "SpectralFunction") -> float:
        a, b, _ = self._aligned(other)
        return float(np.sum(a * b))

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.coeffs**2)))

    def allclose(self, other: "SpectralFunction", atol: float = 1e-12) -> bool:
        a, b, _ = self._aligned(other)
        return bool(np.allclose(a, b, rtol=0.0, atol=atol))

    # evaluation
    def __call__(self, v) -> np.ndarray:
        """Pointwise values at an (..., 3) array of points."""
        v = np.asarray(v, dtype=float)
        D = self.degree_cap
        X = hermite_table(D, v[..., 0])
        Y = hermite_table(D, v[..., 1])
        Z = hermite_table(D, v[..., 2])
        return np.einsum("abc,a...,b...,c...->...", self.coeffs, X, Y, Z, optimize=True)


# ----------------------------------------------------------------------------
# ladder calculus


def _raise(c: np.ndarray, j: int) -> np.ndarray:
    n = c.shape[0]
    out = np.zeros((n + 1,) * 3)
    w = np.sqrt(np.arange(1, n + 1, dtype=float))
    shape = [1, 1, 1]
    shape[j] = n
    sl = [slice(0, n)] * 3
    sl[j] = slice(1, n + 1)
    out[tuple(sl)] = c * w.reshape(shape)
    return out


def _lower(c: np.ndarray, j: int) -> np.ndarray:
    n = c.shape[0]
    out = np.zeros_like(c)
    w = np.sqrt(np.arange(1, n, dtype=float))
    shape = [1, 1, 1]
    shape[j] = n - 1
    src = [slice(None)] * 3
    src[j] = slice(1, n)
    dst = [slice(None)] * 3
    dst[j] = slice(0, n - 1)
    out[tuple(dst)] = c[tuple(src)] * w.reshape(shape)
    return out


def _check_axis(j: int) -> int:
    if j not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1 or 2, got {j!r}")
    return j


def ladder(f: SpectralFunction, j: int, direction: str) -> SpectralFunction:
    """Apply A_{+,j} ("raise", cap grows by one) or A_{-,j} ("lower", cap kept)."""
    _check_axis(j)
    if direction == "raise":
        return SpectralFunction(f.degree_cap + 1, _raise(f.coeffs, j))
    if direction == "lower":
        return SpectralFunction(f.degree_cap, _lower(f.coeffs, j))
    raise ValueError(f"direction must be 'raise' or 'lower', got {direction!r}")


def derivative(f: SpectralFunction, j: int) -> SpectralFunction:
    """d f / d v_j, exact; degree cap grows by one."""
    _check_axis(j)
    lo = np.pad(_lower(f.coeffs, j), ((0, 1),) * 3)
    return SpectralFunction(f.degree_cap + 1, 0.5 * (lo - _raise(f.coeffs, j)))


def multiply_v(f: SpectralFunction, j: int) -> SpectralFunction:
    """v_j f, exact; degree cap grows by one."""
    _check_axis(j)
    lo = np.pad(_lower(f.coeffs, j), ((0, 1),) * 3)
    return SpectralFunction(f.degree_cap + 1, lo + _raise(f.coeffs, j))


def partial(f: SpectralFunction, alpha: Sequence[int]) -> SpectralFunction:
    """d^alpha f by iterated spectral differentiation; cap grows by |alpha|."""
    alpha = check_multi_index(alpha)
    out = f
    for j, a in enumerate(alpha):
        for _ in range(a):
            out = derivative(out, j)
    return out


def harmonic_apply(f: SpectralFunction) -> SpectralFunction:
    """H f with H = -Laplacian + |v|^2/4, i.e. multiplication by |alpha| + 3/2."""
    n = np.arange(f.degree_cap + 1)
    k = n[:, None, None] + n[None, :, None] + n[None, None, :]
    return SpectralFunction(f.degree_cap, f.coeffs * (k + 1.5))


# ----------------------------------------------------------------------------
# matrices of the same maps in the graded basis


@lru_cache(maxsize=None)
def _position(D: int) -> dict[MultiIndex, int]:
    return {a: i for i, a in enumerate(multi_indices(D))}


def index_of(alpha: Sequence[int], D: int) -> int:
    return _position(D)[check_multi_index(alpha)]


def lowering_matrix(D: int, j: int) -> np.ndarray:
    """Matrix of A_{-,j}: basis(D) -> basis(D-1)."""
    _check_axis(j)
    rows = _position(max(D - 1, 0))
    L = np.zeros((basis_size(D - 1) if D >= 1 else 0, basis_size(D)))
    for col, a in enumerate(multi_indices(D)):
        if a[j] >= 1:
            b = list(a)
            b[j] -= 1
            L[rows[tuple(b)], col] = np.sqrt(a[j])
    return L


def derivative_matrix(D: int, j: int) -> np.ndarray:
    """Matrix of d_j: basis(D) -> basis(D+1)."""
    _check_axis(j)
    rows = _position(D + 1)
    M = np.zeros((basis_size(D + 1), basis_size(D)))
    for col, a in enumerate(multi_indices(D)):
        up = list(a)
        up[j] += 1
        M[rows[tuple(up)], col] = -0.5 * np.sqrt(a[j] + 1)
        if a[j] >= 1:
            dn = list(a)
            dn[j] -= 1
            M[rows[tuple(dn)], col] = 0.5 * np.sqrt(a[j])
    return M


def partial_matrix(D: int, alpha: Sequence[int]) -> np.ndarray:
    """Matrix of d^alpha: basis(D) -> basis(D + |alpha|)."""
    alpha = check_multi_index(alpha)
    M = sparse.identity(basis_size(D), format="csr")
    d = D
    for j, a in enumerate(alpha):
        for _ in range(a):
            M = sparse.csr_matrix(derivative_matrix(d, j)) @ M
            d += 1
    return M.toarray()


def embed_vector(vec: np.ndarray, D: int, K: int) -> np.ndarray:
    """Zero-pad a basis(D) coefficient vector into basis(K), K >= D."""
    if K < D:
        raise ValueError("target cap below source cap")
    out = np.zeros(basis_size(K))
    out[: basis_size(D)] = vec
    return out


def iter_degree(indices: Iterable[MultiIndex], m: int) -> list[MultiIndex]:
    return [a for a in indices if mi_abs(a) == m]
