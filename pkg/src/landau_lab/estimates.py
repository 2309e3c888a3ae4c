"""Empirical constants for the coefficient, commutator and energy inequalities.

Every quantity is a quadratic (or bilinear) form in the Hermite coefficients,
so each inequality is first turned into matrices over basis(D) and then
evaluated on seeded random samples. A reported constant is the worst ratio over
the samples; the sample metadata (seed, D, gamma, theta, index ranges) is
enough to reproduce it exactly.

Sign convention: d_t f = L f with L = -B, so (L f, f) = -(B f, f) <= 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Sequence

import numpy as np

from .coefficients import CoefficientField, abar_mixture_derivatives
from .errors import CapacityError
from .evolution import EvolutionTrace, Propagator, _initial_vector
from .galerkin import anorm_matrix
from .hermite import (
    basis_size,
    check_multi_index,
    indices_of_degree,
    mi_abs,
    mi_add,
    mi_binomial,
    mi_factorial,
    mi_sub,
    multi_indices,
    partial_matrix,
    sub_indices,
    unit,
)
from .io import fmt, write_csv, write_json
from .norms import anorm_gram, coercivity_grams, default_rule, weight_derivative
from .quadrature import NodeTables, SphericalRule, laplace_gram

_UNITS = (unit(0), unit(1), unit(2))


def sample_vectors(D: int, n: int, seed: int) -> np.ndarray:
    """n standard-normal coefficient vectors over basis(D), shape (n, basis_size(D))."""
    return np.random.default_rng(seed).standard_normal((n, basis_size(D)))


def japanese_bracket(theta: float) -> float:
    """<theta> = (1 + theta^2)^{1/2}."""
    return math.sqrt(1.0 + theta * theta)


def _qform(X: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Row-wise x^T M x."""
    return np.sum((X @ M) * X, axis=1)


def _sqrt_qform(X: np.ndarray, M: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(_qform(X, M), 0.0))


def _block(M: np.ndarray, K: int) -> np.ndarray:
    n = basis_size(K)
    return M[:n, :n]


@dataclass(frozen=True, eq=False)
class EstimateReport:
    inequality: str
    description: dict
    records: list  # dicts with sample, label, theta, ratio and extra fields
    constants: dict
    notes: dict = dc_field(default_factory=dict)

    def ratios(self, label: str | None = None, key: str = "ratio") -> np.ndarray:
        return np.array([r[key] for r in self.records if label is None or r["label"] == label], dtype=float)

    def distribution(self, key: str = "ratio") -> dict:
        x = self.ratios(key=key)
        if x.size == 0:
            return {}
        return {
            "n": int(x.size),
            "min": float(x.min()),
            "median": float(np.median(x)),
            "p90": float(np.quantile(x, 0.9)),
            "max": float(x.max()),
        }

    def to_json(self) -> dict:
        return {
            "inequality": self.inequality,
            "description": self.description,
            "constants": {k: _clean(v) for k, v in self.constants.items()},
            "distribution": self.distribution(),
            **self.notes,
        }

    def columns(self) -> list[str]:
        keys = []
        for r in self.records:
            for k in r:
                if k not in keys:
                    keys.append(k)
        return keys

    def rows(self):
        cols = self.columns()
        for r in self.records:
            yield [r.get(c, "") for c in cols]

    def write(self, directory: str | Path, prov: dict, stem: str | None = None) -> None:
        directory = Path(directory)
        stem = stem or self.inequality
        write_csv(directory / f"{stem}.csv", self.columns(), self.rows(), prov)
        write_json(directory / f"{stem}.json", {"provenance": prov, **self.to_json()})


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


# ----------------------------------------------------------------------------
# coefficient bilinear form


def lemma22_matrices(
    D: int,
    betas: Sequence[Sequence[int]],
    thetas: Sequence[float],
    field: CoefficientField,
    rule: SphericalRule | None = None,
    tol: float = 1e-10,
) -> dict:
    """{(beta, theta): M} with f^T M g = sum_ij int <v>^{2 theta} d^beta abar_ij d_j f d_i g."""
    betas = [check_multi_index(b) for b in betas]
    rule = rule or default_rule(2 * D + 2)
    idx = multi_indices(D)
    n = basis_size(D)
    out = {(b, th): np.zeros((n, n)) for b in betas for th in thetas}
    for nodes, w in rule.chunks():
        T = NodeTables(nodes, D, 1)
        grad = [T.values(idx, e) for e in _UNITS]
        wts = {th: w * (1.0 + np.sum(nodes * nodes, axis=1)) ** th for th in thetas}
        dAs = abar_mixture_derivatives(nodes, betas, field.config, tol=tol)
        for b in betas:
            dA = dAs[b]
            for th in thetas:
                M = out[b, th]
                for i in range(3):
                    Gi = sum(grad[j] * (wts[th] * dA[:, i, j]) for j in range(3))
                    M += Gi @ grad[i].T
    return out


def validate_lemma22(
    field: CoefficientField,
    D: int,
    n_samples: int = 100,
    beta_max: int = 4,
    thetas: Sequence[float] | None = None,
    seed: int = 0,
    rule: SphericalRule | None = None,
) -> EstimateReport:
    """|sum_ij <<v>^{2theta} d^beta abar_ij d_j f, d_i g>| / (sqrt(beta!) ||f||_{A,theta} ||g||_{A,theta})."""
    gamma = field.gamma
    thetas = tuple(float(t) for t in (thetas if thetas is not None else (0.0, gamma / 2, gamma)))
    betas = multi_indices(beta_max)
    rule = rule or default_rule(2 * D + 2)
    mats = lemma22_matrices(D, betas, thetas, field, rule)
    F = sample_vectors(D, n_samples, seed)
    G = sample_vectors(D, n_samples, seed + 1)
    records = []
    constants = {}
    for th in thetas:
        A = anorm_gram(D, th, field, rule)
        nf = _sqrt_qform(F, A)
        ng = _sqrt_qform(G, A)
        for b in betas:
            num = np.abs(np.sum((F @ mats[b, th]) * G, axis=1))
            ratio = num / (math.sqrt(mi_factorial(b)) * nf * ng)
            for s in range(n_samples):
                records.append({"sample": s, "label": fmt(b), "order": mi_abs(b), "theta": th, "ratio": float(ratio[s])})
            key = f"theta={th!r}"
            constants[key] = max(constants.get(key, 0.0), float(ratio.max()))
    constants["max_ratio"] = max(constants.values())
    desc = {
        "D": D,
        "gamma": gamma,
        "thetas": list(thetas),
        "beta_max": beta_max,
        "n_samples": n_samples,
        "seed": seed,
        "sampling": "f ~ N(0, I) with seed, g ~ N(0, I) with seed + 1, over basis(D)",
        "rule": rule.describe(),
    }
    return EstimateReport("lemma22", desc, records, constants)


# ----------------------------------------------------------------------------
# commutator inequality


def prop31_lhs_matrix(D: int, alpha: Sequence[int], theta: float, field: CoefficientField, rule: SphericalRule | None = None) -> np.ndarray:
    """Symmetric M with c^T M c = (<v>^{2theta} d^alpha L f, d^alpha f), L = -B.

    Moving d^alpha across and using the factorized weak form,
    (<v>^{2theta} d^alpha B f, d^alpha f) = (-1)^{|alpha|} sum_jk int abar_jk (A_{-,k} f)(A_{-,j} h)
    with h = d^alpha(<v>^{2theta} d^alpha f) expanded by Leibniz.
    """
    alpha = check_multi_index(alpha)
    m = mi_abs(alpha)
    rule = rule or default_rule(2 * D + 2 * m + 2)
    idx = multi_indices(D)
    n = basis_size(D)
    kmax = 2 * max(alpha) + 1
    two_alpha = tuple(2 * a for a in alpha)
    leibniz = [(b, mi_binomial(alpha, b)) for b in sub_indices(alpha)]
    M = np.zeros((n, n))
    for nodes, w in rule.chunks():
        T = NodeTables(nodes, D, kmax)
        cache: dict = {}

        def val(d):
            if d not in cache:
                cache[d] = T.values(idx, d)
            return cache[d]

        wj: dict = {}

        def wd(b):
            if b not in wj:
                wj[b] = weight_derivative(nodes, theta, b)
            return wj[b]

        h = sum(c * wd(b) * val(mi_sub(two_alpha, b)) for b, c in leibniz)
        A = field.abar(nodes) * w[:, None, None]
        lowered_f = [0.5 * nodes[:, k] * val((0, 0, 0)) + val(_UNITS[k]) for k in range(3)]
        for j in range(3):
            ej = _UNITS[j]
            dh = sum(
                c * (wd(mi_add(b, ej)) * val(mi_sub(two_alpha, b)) + wd(b) * val(mi_add(mi_sub(two_alpha, b), ej)))
                for b, c in leibniz
            )
            lowered_h = 0.5 * nodes[:, j] * h + dh
            Fj = sum(lowered_f[k] * A[:, j, k] for k in range(3))
            M += Fj @ lowered_h.T
    M = -((-1) ** m) * M
    return 0.5 * (M + M.T)


class _NormBank:
    """Cached Gram matrices for ||.||_{A,theta} and ||.||_{2,theta} over basis(K)."""

    def __init__(self, field: CoefficientField, K: int):
        self.field = field
        self.K = K
        self._a: dict = {}
        self._l: dict = {}

    def anorm(self, theta: float) -> np.ndarray:
        if theta not in self._a:
            self._a[theta] = anorm_gram(self.K, theta, self.field, default_rule(2 * self.K + 2))
        return self._a[theta]

    def l2(self, theta: float) -> np.ndarray:
        if theta not in self._l:
            self._l[theta] = laplace_gram(self.K, theta)
        return self._l[theta]


def validate_prop31(
    field: CoefficientField,
    D: int,
    n_samples: int = 100,
    m_max: int = 2,
    seed: int = 0,
    max_degree: int | None = None,
) -> EstimateReport:
    """Smallest admissible C0 per sample and alpha, theta = gamma |alpha| / 2.

    C0 = max(0, (LHS + X^2) / (<theta> X Y + R2 + R3)) with X = ||d^a f||_{A,theta},
    Y = ||d^a f||_{2,gamma/2+theta}, Z_b = ||d^{a-b} f||_{A,theta},
    R2 = sum_{|b|>=1} C(a,b) sqrt(b!) Z_b (X + |theta| Y) and
    R3 = sum_{|b|>=k} C(a,b) |b| sqrt(b!) Z_b Y, reported for k = 1 and k = 2.
    Also reports the alpha = 0 reduced inequality and the lower-order control
    ratio ||d^a f||_{2,gamma/2+theta} / ||d^{a-e_j0} f||_{A,theta}.
    """
    if max_degree is not None and D + 2 * m_max + 1 > max_degree:
        raise CapacityError(f"commutator check to order {m_max} needs degree {D + 2 * m_max + 1} > {max_degree}")
    gamma = field.gamma
    K = D + m_max
    bank = _NormBank(field, K)
    F = sample_vectors(D, n_samples, seed)
    records = []
    best = {"C0": 0.0, "C0_beta_ge_2": 0.0}
    remark1 = remark2 = 0.0
    per_alpha = {}
    for alpha in multi_indices(m_max):
        m = mi_abs(alpha)
        theta = gamma * m / 2
        L = prop31_lhs_matrix(D, alpha, theta, field)
        lhs = _qform(F, L)
        Aw = bank.anorm(theta)

        def anorm_of(a):
            Xa = F @ partial_matrix(D, a).T
            return _sqrt_qform(Xa, _block(Aw, D + mi_abs(a)))

        Xd = F @ partial_matrix(D, alpha).T
        X = _sqrt_qform(Xd, _block(Aw, D + m))
        Y = _sqrt_qform(Xd, _block(bank.l2(gamma / 2 + theta), D + m))
        R1 = japanese_bracket(theta) * X * Y
        R2 = np.zeros(n_samples)
        R3 = np.zeros(n_samples)
        R3b = np.zeros(n_samples)
        for b in sub_indices(alpha):
            k = mi_abs(b)
            if k == 0:
                continue
            Z = anorm_of(mi_sub(alpha, b))
            c = mi_binomial(alpha, b) * math.sqrt(mi_factorial(b))
            R2 += c * Z * (X + abs(theta) * Y)
            R3 += c * k * Z * Y
            if k >= 2:
                R3b += c * k * Z * Y
        top = lhs + X * X
        c0 = np.maximum(0.0, top / (R1 + R2 + R3))
        c0b = np.maximum(0.0, top / (R1 + R2 + R3b))
        label = fmt(alpha)
        per_alpha[label] = float(c0.max())
        best["C0"] = max(best["C0"], float(c0.max()))
        best["C0_beta_ge_2"] = max(best["C0_beta_ge_2"], float(c0b.max()))
        extra = {}
        if m == 0:
            # reduced form: (L f, f) <= -1/2 ||f||_A^2 + C0 ||f||_{2,gamma/2}^2
            r1 = np.maximum(0.0, (lhs + 0.5 * X * X) / (Y * Y))
            remark1 = float(r1.max())
            extra["remark1"] = r1
        else:
            j0 = int(np.argmax(alpha))
            low = anorm_of(mi_sub(alpha, _UNITS[j0]))
            r2 = Y / low
            remark2 = max(remark2, float(r2.max()))
            extra["remark2"] = r2
        for s in range(n_samples):
            rec = {
                "sample": s,
                "label": label,
                "order": m,
                "theta": theta,
                "ratio": float(c0[s]),
                "ratio_beta_ge_2": float(c0b[s]),
                "lhs": float(lhs[s]),
                "X": float(X[s]),
                "Y": float(Y[s]),
            }
            for k, v in extra.items():
                rec[k] = float(v[s])
            records.append(rec)
    constants = {
        "C0": best["C0"],
        "C0_beta_ge_2": best["C0_beta_ge_2"],
        "C0_remark1": remark1,
        "remark2_c": remark2,
        "C0_per_alpha": per_alpha,
    }
    desc = {
        "D": D,
        "gamma": gamma,
        "m_max": m_max,
        "theta_rule": "gamma*|alpha|/2",
        "bracket": "<theta> = sqrt(1 + theta^2)",
        "n_samples": n_samples,
        "seed": seed,
        "sampling": "f ~ N(0, I) with seed over basis(D)",
    }
    return EstimateReport("prop31", desc, records, constants)


# ----------------------------------------------------------------------------
# coercivity


def validate_coercivity(
    field: CoefficientField,
    D: int,
    n_samples: int = 100,
    thetas: Sequence[float] | None = None,
    seed: int = 0,
) -> EstimateReport:
    """Admissible C1 = min over samples of ||f||^2_{A,theta} / (split weighted norms)."""
    gamma = field.gamma
    thetas = tuple(float(t) for t in (thetas if thetas is not None else (0.0, gamma / 2, gamma)))
    F = sample_vectors(D, n_samples, seed)
    records = []
    constants = {}
    space = {}
    for th in thetas:
        grams = coercivity_grams(D, th, field)
        for s, c in enumerate(F):
            rec = grams.record(c)
            records.append(
                {
                    "sample": s,
                    "label": "coercivity",
                    "theta": th,
                    "ratio": rec.ratio,
                    "ratio_simplified": rec.ratio_simplified,
                }
            )
        ratios = [r["ratio"] for r in records if r["theta"] == th]
        constants[f"theta={th!r}"] = float(min(ratios))
        space[f"theta={th!r}"] = grams.min_ratio()
    constants["C1"] = min(v for k, v in constants.items())
    constants["C1_simplified"] = float(min(r["ratio_simplified"] for r in records))
    constants["space_min"] = space
    desc = {
        "D": D,
        "gamma": gamma,
        "thetas": list(thetas),
        "n_samples": n_samples,
        "seed": seed,
        "sampling": "f ~ N(0, I) with seed over basis(D)",
        "P_v_at_origin": "no quadrature node at v = 0",
    }
    return EstimateReport("coercivity", desc, records, constants)


# ----------------------------------------------------------------------------
# energy inequality along a trajectory


def validate_energy(trace: EvolutionTrace, C0: float, field: CoefficientField, Q: int | None = None) -> EstimateReport:
    """||f(t)||^2 + int_0^t ||f||_A^2 ds <= exp(2 C0 T) ||f0||^2 on every snapshot.

    The time integral is closed form in the eigenbasis of B. The energy identity
    ||f(t)||^2 + 2 int_0^t (B f, f) ds = ||f0||^2 is reported alongside.
    """
    if C0 < 0 or not math.isfinite(C0):
        raise ValueError("C0 must be finite and >= 0")
    D = trace.D
    A = anorm_matrix(D, field, Q)
    c0 = _initial_vector(trace.system, trace.f0)
    e0 = float(c0 @ c0)
    T = float(trace.times[-1])
    integral = Propagator(trace.system).form_integral(c0, trace.times, A)
    lhs = trace.norm2 + integral
    rhs = math.exp(2 * C0 * T) * e0
    records = [
        {"sample": i, "label": "energy", "t": float(t), "lhs": float(l), "rhs": rhs, "ratio": float(l / rhs) if rhs > 0 else 0.0}
        for i, (t, l) in enumerate(zip(trace.times, lhs))
    ]
    worst = max(r["ratio"] for r in records)
    constants = {
        "C0": C0,
        "T": T,
        "max_ratio": worst,
        "margin": 1.0 - worst,
        "holds": bool(worst <= 1.0),
        "identity_residual": trace.energy_residual(),
        "initial_norm2": e0,
    }
    desc = {"D": D, "gamma": trace.system.gamma, "n_snapshots": len(trace.times), "T": T}
    return EstimateReport("energy", desc, records, constants)
