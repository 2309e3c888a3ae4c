"""Galerkin matrix of the linearized Landau generator on span{Psi_alpha : |alpha| <= D}.

The generator is B f = -div(abar grad f) + 1/4 (abar v . v) f - 1/2 div(abar v) f,
and the solver propagates d_t f = -B f. Its weak form factorizes through the
lowering operators A_{-,k} = v_k/2 + d_k:

    (B f, g) = sum_jk int abar_jk (A_{-,k} f)(A_{-,j} g),

which makes B symmetric positive semidefinite with Psi_0 = sqrt(mu) in its
kernel. ``assemble`` uses this form; ``assemble_direct`` builds the same
matrix from the three-term expression as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import CoefficientField
from .errors import InvariantError
from .hermite import ORDERING_VERSION, basis_size, derivative_matrix, lowering_matrix
from .io import read_arrays, write_arrays
from .quadrature import TensorRule, weighted_gram


def default_nodes(D: int) -> int:
    """Gauss nodes per axis: generous enough for 1e-12 stability up to D ~ 20."""
    return 2 * D + 40


@dataclass(frozen=True, eq=False)
class GalerkinSystem:
    D: int
    gamma: float
    matrix: np.ndarray
    provenance: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        B = np.asarray(self.matrix, dtype=float)
        if B.shape != (basis_size(self.D),) * 2:
            raise ValueError(f"matrix shape {B.shape} does not match D={self.D}")
        B = B.copy()
        B.setflags(write=False)
        object.__setattr__(self, "matrix", B)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def invariant_residuals(self) -> dict:
        B = self.matrix
        scale = max(float(np.max(np.abs(B))), 1e-300)
        evals = np.linalg.eigvalsh(0.5 * (B + B.T))
        return {
            "asymmetry": float(np.max(np.abs(B - B.T))) / scale,
            "min_eigenvalue": float(evals[0]) / scale,
            "equilibrium_row": float(np.max(np.abs(B[0]))) / scale,
        }

    def check_invariants(self, tol: float = 1e-10) -> dict:
        """Raise InvariantError unless B is symmetric PSD with a zero Psi_0 row."""
        res = self.invariant_residuals()
        if res["asymmetry"] > tol:
            raise InvariantError("Galerkin matrix not symmetric", residual=res["asymmetry"])
        if res["min_eigenvalue"] < -tol:
            raise InvariantError("Galerkin matrix not positive semidefinite", residual=res["min_eigenvalue"])
        if res["equilibrium_row"] > tol:
            raise InvariantError("Psi_0 row of the Galerkin matrix is not zero", residual=res["equilibrium_row"])
        return res

    def spectral_gap(self) -> float:
        """Smallest eigenvalue on the orthogonal complement of Psi_0."""
        if self.size == 1:
            return float("nan")
        return float(np.linalg.eigvalsh(self.matrix[1:, 1:])[0])

    def quadratic_form(self, c: np.ndarray) -> float:
        return float(c @ self.matrix @ c)

    # persistence
    def save(self, path: str | Path) -> None:
        header = {
            "kind": "galerkin-system",
            "D": self.D,
            "gamma": self.gamma,
            "ordering": ORDERING_VERSION,
            "package_version": __version__,
            "provenance": self.provenance,
        }
        write_arrays(path, header, {"B": self.matrix})

    @classmethod
    def load(cls, path: str | Path) -> "GalerkinSystem":
        header, arrays = read_arrays(path)
        if header.get("kind") != "galerkin-system":
            raise ValueError(f"{path}: not a Galerkin system file")
        if header.get("ordering") != ORDERING_VERSION:
            raise ValueError(f"{path}: basis ordering {header.get('ordering')} != {ORDERING_VERSION}")
        return cls(header["D"], header["gamma"], arrays["B"], header["provenance"])


def _abar_grams(rule: TensorRule, field: CoefficientField, K: int) -> dict[tuple[int, int], np.ndarray]:
    A = field.abar(rule.nodes)
    out = {}
    for j in range(3):
        for k in range(j, 3):
            out[j, k] = out[k, j] = weighted_gram(rule, A[..., j, k], K)
    return out


def assemble(D: int, field: CoefficientField, Q: int | None = None, check: bool = True) -> GalerkinSystem:
    """B_{alpha beta} = sum_jk sqrt(alpha_j beta_k) int abar_jk Psi_{alpha-e_j} Psi_{beta-e_k}."""
    if D < 0:
        raise ValueError("D must be >= 0")
    Q = Q or default_nodes(D)
    n = basis_size(D)
    B = np.zeros((n, n))
    if D >= 1:
        rule = TensorRule(Q)
        M = _abar_grams(rule, field, D - 1)
        L = [lowering_matrix(D, j) for j in range(3)]
        for j in range(3):
            for k in range(3):
                B += L[j].T @ M[j, k] @ L[k]
        B = 0.5 * (B + B.T)
    prov = {"path": "factorized", "Q": Q, "field": field.cache_key()}
    system = GalerkinSystem(D, field.gamma, B, prov)
    if check:
        system.check_invariants()
    return system


def assemble_direct(D: int, field: CoefficientField, Q: int | None = None, check: bool = True) -> GalerkinSystem:
    """Same operator from int abar grad f . grad g + 1/4 int q f g - 1/2 int div(abar v) f g."""
    if D < 0:
        raise ValueError("D must be >= 0")
    Q = Q or default_nodes(D + 1)
    rule = TensorRule(Q)
    M = _abar_grams(rule, field, D + 1)
    Dm = [derivative_matrix(D, j) for j in range(3)]
    B = np.zeros((basis_size(D),) * 2)
    for j in range(3):
        for k in range(3):
            B += Dm[j].T @ M[j, k] @ Dm[k]
    B += 0.25 * weighted_gram(rule, field.potential(rule.nodes), D)
    B -= 0.5 * weighted_gram(rule, field.drift_divergence(rule.nodes), D)
    B = 0.5 * (B + B.T)
    prov = {"path": "direct", "Q": Q, "field": field.cache_key()}
    system = GalerkinSystem(D, field.gamma, B, prov)
    if check:
        system.check_invariants()
    return system


def anorm_matrix(D: int, field: CoefficientField, Q: int | None = None) -> np.ndarray:
    """Unweighted ||.||_A^2 over basis(D) on the tensor rule (theta = 0 needs no spherical rule)."""
    Q = Q or default_nodes(D + 1)
    rule = TensorRule(Q)
    M = _abar_grams(rule, field, D + 1)
    Dm = [derivative_matrix(D, j) for j in range(3)]
    G = sum(Dm[j].T @ M[j, k] @ Dm[k] for j in range(3) for k in range(3))
    G = G + 0.25 * weighted_gram(rule, field.potential(rule.nodes), D)
    return 0.5 * (G + G.T)


def drift_matrix(D: int, field: CoefficientField, Q: int | None = None) -> np.ndarray:
    """int div(abar v) Psi_a Psi_b over basis(D)."""
    Q = Q or default_nodes(D + 1)
    rule = TensorRule(Q)
    return weighted_gram(rule, field.drift_divergence(rule.nodes), D)
