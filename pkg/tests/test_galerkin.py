"""Galerkin matrix: two assembly routes, structural invariants, refinement, persistence."""


import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from landau_lab.errors import InvariantError
from landau_lab.galerkin import GalerkinSystem, anorm_matrix, assemble, assemble_direct, drift_matrix
from landau_lab.hermite import basis_size, index_of, multi_indices
from landau_lab.io import read_arrays, write_arrays


def test_factorized_matches_direct(system6, field):
    direct = assemble_direct(6, field)
    assert np.max(np.abs(system6.matrix - direct.matrix)) <= 1e-7


def test_invariants(system6):
    res = system6.check_invariants(tol=1e-10)
    assert res["equilibrium_row"] <= 1e-10
    assert system6.spectral_gap() > 0


def test_quadrature_refinement(field):
    D = 8
    a = assemble(D, field)
    b = assemble(D, field, Q=a.provenance["Q"] + 16)
    assert np.max(np.abs(a.matrix - b.matrix)) <= 1e-8


def test_quadratic_form_splits_into_norm_and_drift(system6, field):
    B = anorm_matrix(6, field) - 0.5 * drift_matrix(6, field)
    assert np.allclose(system6.matrix, B, atol=1e-9)


def test_nested_truncation(field, system6):
    small = assemble(4, field)
    n = basis_size(4)
    assert np.allclose(system6.matrix[:n, :n], small.matrix, atol=1e-11)


@pytest.mark.parametrize("perm", [(1, 0, 2), (2, 0, 1), (0, 2, 1)])
def test_axis_permutation_symmetry(system6, perm):
    # abar is isotropic, so relabelling axes permutes the basis and leaves B invariant
    idx = multi_indices(6)
    p = [index_of(tuple(a[k] for k in perm), 6) for a in idx]
    B = system6.matrix
    assert np.allclose(B[np.ix_(p, p)], B, atol=1e-12)


def test_axis_reflection_parity(system6):
    # v1 -> -v1 flips Psi_alpha by (-1)^{alpha_1}; B must not couple opposite parities
    par = np.array([(-1) ** a[0] for a in multi_indices(6)])
    B = system6.matrix
    assert np.max(np.abs(B[np.not_equal.outer(par, par)])) <= 1e-12


@given(c=arrays(np.float64, basis_size(6), elements=st.floats(-1e3, 1e3)))
@settings(max_examples=50, deadline=None)
def test_form_nonnegative(system6, c):
    assert system6.quadratic_form(c) >= -1e-10 * (1 + c @ c)


def test_save_load_roundtrip(system6, tmp_path):
    path = tmp_path / "B.bin"
    system6.save(path)
    loaded = GalerkinSystem.load(path)
    assert np.array_equal(loaded.matrix, system6.matrix)
    assert loaded.D == 6 and loaded.gamma == system6.gamma


def test_ordering_mismatch_rejected(system6, tmp_path):
    path = tmp_path / "B.bin"
    system6.save(path)
    header, arrays_ = read_arrays(path)
    header["ordering"] = "lex-v0"
    write_arrays(path, header, arrays_)
    with pytest.raises(ValueError, match="ordering"):
        GalerkinSystem.load(path)


def test_invariant_violation_raises():
    B = np.eye(basis_size(1))
    with pytest.raises(InvariantError):
        GalerkinSystem(1, -1.0, B).check_invariants()


def test_shape_mismatch():
    with pytest.raises(ValueError):
        GalerkinSystem(2, -1.0, np.zeros((3, 3)))
