"""Inequality validators: matrix forms against independent routes, seeding, reporting."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from landau_lab.errors import CapacityError
from landau_lab.estimates import (
    japanese_bracket,
    lemma22_matrices,
    prop31_lhs_matrix,
    sample_vectors,
    validate_coercivity,
    validate_energy,
    validate_lemma22,
    validate_prop31,
)
from landau_lab.evolution import evolve_exact
from landau_lab.galerkin import assemble
from landau_lab.hermite import basis_size, multi_indices, partial_matrix
from landau_lab.norms import anorm_gram, default_rule
from landau_lab.quadrature import NodeTables
from landau_lab.smoothing import rough_datum


@pytest.mark.parametrize("alpha", [(0, 0, 0), (1, 0, 0), (0, 1, 1), (2, 0, 0)])
def test_commutator_lhs_matches_galerkin(field, alpha):
    D = 3
    m = sum(alpha)
    K = D + 2 * m
    BK = assemble(K, field).matrix
    E = np.eye(basis_size(K))[:, : basis_size(D)]
    P2 = np.eye(basis_size(K))[:, : basis_size(D + 2 * m)] @ partial_matrix(D, tuple(2 * a for a in alpha))
    ref = -((-1) ** m) * E.T @ BK @ P2
    ref = 0.5 * (ref + ref.T)
    got = prop31_lhs_matrix(D, alpha, 0.0, field)
    assert np.max(np.abs(got - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))


@pytest.mark.parametrize("theta", [-0.5, -1.0])
def test_weighted_lhs_alpha0_pointwise(field, theta, rng):
    # -(B f, w f) = -sum int abar_jk (A_-k f)(w A_-j f + d_j w f), w = <v>^{2 theta}
    D = 3
    rule = default_rule(2 * D + 2)
    c = rng.standard_normal(basis_size(D))
    idx = multi_indices(D)
    acc = 0.0
    for nodes, w in rule.chunks():
        T = NodeTables(nodes, D, 1)
        f = c @ T.values(idx)
        grad = [c @ T.values(idx, e) for e in ((1, 0, 0), (0, 1, 0), (0, 0, 1))]
        s = 1 + np.sum(nodes * nodes, axis=1)
        wt = s**theta
        low = [0.5 * nodes[:, k] * f + grad[k] for k in range(3)]
        A = field.abar(nodes)
        for j in range(3):
            dw = 2 * theta * nodes[:, j] * s ** (theta - 1)
            for k in range(3):
                acc -= np.sum(w * A[:, j, k] * low[k] * (wt * low[j] + dw * f))
    assert c @ prop31_lhs_matrix(D, (0, 0, 0), theta, field) @ c == pytest.approx(acc, rel=1e-10)


def test_lemma22_psi0_ratio_is_half(field):
    mats = lemma22_matrices(1, [(0, 0, 0)], [0.0], field)
    A = anorm_gram(1, 0.0, field)
    e = np.zeros(basis_size(1))
    e[0] = 1
    assert e @ mats[(0, 0, 0), 0.0] @ e / (e @ A @ e) == pytest.approx(0.5, rel=1e-8)


def test_lemma22_forms_are_symmetric(field):
    mats = lemma22_matrices(3, [(1, 0, 0), (0, 2, 1)], [0.0, -0.5], field)
    for M in mats.values():
        assert np.allclose(M, M.T, atol=1e-12 * np.max(np.abs(M)))


def test_lemma22_beta0_theta0_is_gradient_part_of_anorm(field):
    from landau_lab.galerkin import anorm_matrix
    from landau_lab.quadrature import TensorRule, weighted_gram

    D = 3
    M = lemma22_matrices(D, [(0, 0, 0)], [0.0], field)[(0, 0, 0), 0.0]
    rule = TensorRule(50)
    Q = 0.25 * weighted_gram(rule, field.potential(rule.nodes), D)
    assert np.allclose(M + Q, anorm_matrix(D, field), atol=1e-10)


def test_bracket():
    assert japanese_bracket(0.0) == 1.0
    assert japanese_bracket(-0.75) == pytest.approx(1.25)


@given(seed=st.integers(0, 2**31 - 1))
@settings(max_examples=15, deadline=None)
def test_sampling_reproducible(seed):
    assert np.array_equal(sample_vectors(3, 4, seed), sample_vectors(3, 4, seed))


def test_coercivity_report(field):
    a = validate_coercivity(field, 3, n_samples=20, seed=5)
    b = validate_coercivity(field, 3, n_samples=20, seed=5)
    assert a.constants == b.constants
    C1 = a.constants["C1"]
    assert 0 < C1 < np.inf
    # the sampled minimum can never beat the exact minimum over the space
    for key, lo in a.constants["space_min"].items():
        assert lo <= a.constants[key] ** 2 * (1 + 1e-9)


def test_prop31_report(field, tmp_path):
    rep = validate_prop31(field, 3, n_samples=10, m_max=1, seed=2)
    c = rep.constants
    assert 0 <= c["C0"] < np.inf
    assert c["C0_beta_ge_2"] >= c["C0"] - 1e-15
    assert set(c["C0_per_alpha"]) == {"0-0-0", "1-0-0", "0-1-0", "0-0-1"}
    again = validate_prop31(field, 3, n_samples=10, m_max=1, seed=2)
    assert again.constants == c
    rep.write(tmp_path, {"config_hash": "t"})
    doc = json.loads((tmp_path / "prop31.json").read_text())
    assert doc["description"]["seed"] == 2
    with pytest.raises(CapacityError):
        validate_prop31(field, 6, n_samples=2, m_max=2, max_degree=8)


def test_lemma22_report_small(field):
    rep = validate_lemma22(field, 2, n_samples=8, beta_max=2, seed=1)
    assert 0 < rep.constants["max_ratio"] < np.inf
    assert len(rep.records) == 8 * 3 * len(multi_indices(2))


def test_energy_inequality(system6, field):
    tr = evolve_exact(system6, rough_datum(6, 3), np.linspace(0, 1, 11))
    rep = validate_energy(tr, 0.5, field)
    assert rep.constants["holds"]
    assert rep.constants["identity_residual"] <= 1e-9
    assert rep.constants["margin"] == pytest.approx(1 - rep.constants["max_ratio"])
    with pytest.raises(ValueError):
        validate_energy(tr, -1.0, field)


def test_admissible_c0_grows_with_sample_set(field):
    # the first n rows of a larger seeded draw are the smaller draw
    assert np.array_equal(sample_vectors(3, 10, 4)[:5], sample_vectors(3, 5, 4))
    small = validate_prop31(field, 3, n_samples=5, m_max=1, seed=4).constants["C0"]
    large = validate_prop31(field, 3, n_samples=10, m_max=1, seed=4).constants["C0"]
    assert large >= small
