"""Hermite basis: orthonormality, ordering, and the ladder algebra at coefficient level."""

from math import factorial, sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import eval_hermitenorm

from landau_lab.hermite import (
    SpectralFunction,
    basis_eval,
    basis_size,
    derivative,
    derivative_matrix,
    embed_vector,
    harmonic_apply,
    index_of,
    ladder,
    lowering_matrix,
    mi_binomial,
    multi_indices,
    multiply_v,
    partial,
    partial_matrix,
    sub_indices,
)

axes = st.integers(0, 2)
caps = st.integers(0, 7)


@st.composite
def spectral(draw, max_cap=7):
    D = draw(st.integers(0, max_cap))
    vals = draw(st.lists(st.floats(-10, 10, allow_nan=False), min_size=basis_size(D), max_size=basis_size(D)))
    return SpectralFunction.from_vector(np.array(vals), D)


def psi_oracle(n, x):
    """psi_n from probabilists' Hermite polynomials; independent of the recurrence."""
    return (2 * np.pi) ** -0.25 * eval_hermitenorm(n, x) * np.exp(-x * x / 4) / sqrt(factorial(n))


def test_gram_identity_D12():
    D = 12
    x, w = hermegauss(D + 2)  # weight exp(-x^2/2); psi_a psi_b exp(x^2/2) is a polynomial
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    W = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel() * np.exp(0.5 * (X**2 + Y**2 + Z**2)).ravel()
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=-1)
    Phi = np.stack([basis_eval(a, pts) for a in multi_indices(D)])
    G = (Phi * W) @ Phi.T
    assert np.max(np.abs(G - np.eye(basis_size(D)))) < 1e-10


@pytest.mark.parametrize("n", [0, 1, 5, 17, 40])
def test_basis_matches_hermite_polynomials(n):
    x = np.linspace(-6, 6, 41)
    got = basis_eval((n, 0, 0), np.stack([x, 0 * x, 0 * x], -1)) / psi_oracle(0, 0.0) ** 2
    assert np.allclose(got, psi_oracle(n, x), atol=1e-12)


def test_ordering_is_graded_prefix():
    small, big = multi_indices(4), multi_indices(7)
    assert big[: len(small)] == small
    assert [sum(a) for a in big] == sorted(sum(a) for a in big)
    assert basis_size(10) == 286 and basis_size(14) == 680
    assert all(index_of(a, 7) == i for i, a in enumerate(big))


@given(f=spectral(), j=axes, k=axes)
@settings(max_examples=60, deadline=None)
def test_ladder_commutators(f, j, k):
    # [A_-j, A_+k] = delta_jk ; [A_+j, A_+k] = 0
    lhs = ladder(ladder(f, k, "raise"), j, "lower") - ladder(ladder(f, j, "lower"), k, "raise")
    expect = f if j == k else SpectralFunction.zeros(f.degree_cap)
    assert lhs.allclose(expect, atol=1e-11)
    up = ladder(ladder(f, j, "raise"), k, "raise") - ladder(ladder(f, k, "raise"), j, "raise")
    assert up.allclose(SpectralFunction.zeros(0), atol=1e-11)


@given(f=spectral(), j=axes)
@settings(max_examples=60, deadline=None)
def test_derivative_and_multiplication_from_ladders(f, j):
    lo, up = ladder(f, j, "lower"), ladder(f, j, "raise")
    assert derivative(f, j).allclose(0.5 * (lo - up), atol=1e-12)
    assert multiply_v(f, j).allclose(lo + up, atol=1e-12)
    # [d_j, v_j] = 1
    comm = derivative(multiply_v(f, j), j) - multiply_v(derivative(f, j), j)
    assert comm.allclose(f, atol=1e-10)


@given(f=spectral(max_cap=6))
@settings(max_examples=40, deadline=None)
def test_harmonic_operator_number_form(f):
    # H = -Lap + |v|^2/4 = sum_j (A_+j A_-j + 1/2)
    acc = 1.5 * f
    for j in range(3):
        acc = acc + ladder(ladder(f, j, "lower"), j, "raise")
    assert harmonic_apply(f).allclose(acc, atol=1e-10)


@given(f=spectral(max_cap=5), j=axes)
@settings(max_examples=40, deadline=None)
def test_derivative_is_skew_adjoint(f, j):
    g = SpectralFunction.random(f.degree_cap + 1, np.random.default_rng(j))
    lhs = derivative(f, j).inner(g)
    rhs = -f.inner(derivative(g, j))
    assert lhs == pytest.approx(rhs, abs=1e-9 * (1 + abs(lhs)))


def test_derivative_matches_pointwise_finite_difference(rng):
    f = SpectralFunction.random(5, rng)
    v = rng.normal(size=(6, 3))
    h = 1e-5
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (f(v + e) - f(v - e)) / (2 * h)
        assert np.allclose(derivative(f, j)(v), fd, atol=1e-8)


@pytest.mark.parametrize("alpha", [(1, 0, 0), (0, 2, 1), (2, 2, 0)])
def test_matrices_match_function_calculus(alpha, rng):
    D = 5
    f = SpectralFunction.random(D, rng)
    c = f.to_vector()
    ref = partial(f, alpha).to_vector()
    assert np.allclose(partial_matrix(D, alpha) @ c, ref, atol=1e-13)
    assert np.allclose(derivative_matrix(D, 1) @ c, derivative(f, 1).to_vector(), atol=1e-13)
    L = lowering_matrix(D, 2)
    assert np.allclose(L @ c, ladder(f, 2, "lower").truncate(D - 1).to_vector(), atol=1e-13)


def test_leibniz_sub_indices():
    alpha = (2, 1, 3)
    subs = sub_indices(alpha)
    assert len(subs) == 3 * 2 * 4
    assert sum(mi_binomial(alpha, b) for b in subs) == 2 ** sum(alpha)


def test_pad_truncate_roundtrip(rng):
    f = SpectralFunction.random(4, rng)
    assert f.pad(9).truncate(4).allclose(f, atol=0)
    assert np.array_equal(f.pad(9).to_vector(), embed_vector(f.to_vector(), 4, 9))
    with pytest.raises(ValueError):
        f.pad(3)


def test_dict_roundtrip(rng):
    f = SpectralFunction.random(3, rng)
    assert SpectralFunction.from_dict(f.to_dict(), 3).allclose(f, atol=0)


@pytest.mark.parametrize("bad", [(-1, 0, 0), (1, 2), (0.5, 0, 0)])
def test_rejects_bad_multi_index(bad):
    with pytest.raises((ValueError, TypeError)):
        SpectralFunction.basis(bad)
