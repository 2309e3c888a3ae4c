"""Weighted and anisotropic norms: radial oracles, Gram/pointwise agreement, P_v."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import gamma as Gamma

from landau_lab.hermite import SpectralFunction, basis_size
from landau_lab.norms import (
    anorm,
    anorm_gram,
    coercivity_grams,
    coercivity_probe,
    pv_project,
    weight_derivative,
    weighted_l2,
    weighted_l2_gram,
)

MU = lambda r: (2 * np.pi) ** -1.5 * np.exp(-r * r / 2)  # noqa: E731


def radial(fun):
    val, _ = quad(lambda r: 4 * np.pi * r * r * fun(r), 0, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    return val


def psi0_anorm_sq(gamma):
    """||Psi_0||_A^2 = (1/2) int q mu = (1/2) E|u|^{gamma+2}, u ~ N(0, 2 I)."""
    p = gamma + 2
    return 0.5 * 2 ** (p / 2) * 2 ** (p / 2 + 1) * Gamma((p + 3) / 2) / np.sqrt(np.pi)


@pytest.mark.parametrize("theta", [0.0, -0.5, -1.0, 0.7])
def test_weighted_l2_psi0(theta):
    ref = np.sqrt(radial(lambda r: (1 + r * r) ** theta * MU(r)))
    assert weighted_l2(SpectralFunction.basis((0, 0, 0)), theta) == pytest.approx(ref, rel=1e-10)


def test_weighted_l2_first_hermite():
    # Psi_{e1} = v1 Psi_0
    ref = np.sqrt(radial(lambda r: (1 + r * r) ** -0.5 * r * r / 3 * MU(r)))
    assert weighted_l2(SpectralFunction.basis((1, 0, 0)), -0.5) == pytest.approx(ref, rel=1e-10)


def test_anorm_psi0_oracle(field):
    assert psi0_anorm_sq(-1.0) == pytest.approx(1.1283791670955, rel=1e-12)
    assert anorm(SpectralFunction.basis((0, 0, 0)), 0.0, field) ** 2 == pytest.approx(psi0_anorm_sq(-1.0), rel=1e-8)


@pytest.mark.parametrize("gamma", [-0.5, -2.0, -2.5])
def test_anorm_psi0_other_gamma(gamma, field_by_gamma):
    got = anorm(SpectralFunction.basis((0, 0, 0)), 0.0, field_by_gamma(gamma)) ** 2
    assert got == pytest.approx(psi0_anorm_sq(gamma), rel=1e-7)


@pytest.mark.parametrize("theta", [0.0, -0.5])
def test_anorm_gram_matches_pointwise(field, theta, rng):
    K = 4
    G = anorm_gram(K, theta, field)
    for _ in range(3):
        f = SpectralFunction.random(K, rng)
        c = f.to_vector()
        assert np.sqrt(c @ G @ c) == pytest.approx(anorm(f, theta, field), rel=1e-10)


@pytest.mark.parametrize("theta", [-1.0, -0.5, 0.5])
def test_laplace_gram_matches_pointwise(theta, rng):
    K = 6
    G = weighted_l2_gram(K, theta)
    assert G.shape == (basis_size(K),) * 2
    for _ in range(3):
        f = SpectralFunction.random(K, rng)
        c = f.to_vector()
        assert np.sqrt(c @ G @ c) == pytest.approx(weighted_l2(f, theta), rel=1e-9)


def test_unweighted_gram_is_identity():
    assert np.allclose(weighted_l2_gram(5, 0.0), np.eye(basis_size(5)), atol=1e-12)


@given(scale=st.floats(-50, 50).filter(lambda s: abs(s) > 1e-3))
@settings(max_examples=20, deadline=None)
def test_norms_are_homogeneous(field, scale):
    f = SpectralFunction.random(3, np.random.default_rng(0))
    assert anorm(scale * f, -0.5, field) == pytest.approx(abs(scale) * anorm(f, -0.5, field), rel=1e-12)
    assert weighted_l2(scale * f, -0.5) == pytest.approx(abs(scale) * weighted_l2(f, -0.5), rel=1e-12)


def test_coercivity_grams_match_probe(field, rng):
    K = 3
    grams = coercivity_grams(K, -0.5, field)
    f = SpectralFunction.random(K, rng)
    a, b = grams.record(f.to_vector()), coercivity_probe(f, -0.5, field)
    for name in ("lhs", "parallel", "perpendicular", "mass", "gradient"):
        assert getattr(a, name) == pytest.approx(getattr(b, name), rel=1e-9)
    assert 0 < grams.min_ratio() <= a.ratio**2 * (1 + 1e-9)


vecs = st.tuples(*[st.floats(-1e3, 1e3, allow_nan=False)] * 3).map(np.array)


@given(G=vecs, v=vecs.filter(lambda v: np.linalg.norm(v) > 1e-6))
@settings(max_examples=60, deadline=None)
def test_pv_is_orthogonal_projection(G, v):
    P = pv_project(G, v)
    assert np.allclose(pv_project(P, v), P, atol=1e-9 * (1 + np.linalg.norm(G)))
    assert abs((G - P) @ v) <= 1e-9 * (1 + np.linalg.norm(G)) * np.linalg.norm(v)


def test_pv_origin_policy():
    G = np.array([1.0, 2.0, 3.0])
    assert np.all(pv_project(G, np.zeros(3)) == 0)
    assert np.array_equal(pv_project(G, np.zeros(3), at_origin="parallel"), G)
    with pytest.raises(ValueError):
        pv_project(G, np.zeros(3), at_origin="other")


@pytest.mark.parametrize("beta", [(1, 0, 0), (0, 2, 0), (1, 1, 1), (3, 0, 1)])
def test_weight_derivative_finite_difference(beta):
    theta = -0.7
    v = np.array([[0.3, -1.2, 0.8], [2.0, 0.5, -1.0]])
    h = 1e-3

    # nested central differences
    def d(fun, j):
        e = np.zeros(3)
        e[j] = h
        return lambda x: (fun(x + e) - fun(x - e)) / (2 * h)

    fun = lambda x: (1 + np.sum(x * x, axis=-1)) ** theta  # noqa: E731
    for j, b in enumerate(beta):
        for _ in range(b):
            fun = d(fun, j)
    assert np.allclose(weight_derivative(v, theta, beta), fun(v), rtol=1e-4, atol=1e-6)
