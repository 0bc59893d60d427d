import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from nagumofem.linalg import (
    CSRPattern,
    IterativeSolverError,
    krylov_solve,
    matrix_properties,
    save_matrix_market,
    solve_linear,
    triplets_to_csr,
)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 12), m=st.integers(1, 60), seed=st.integers(0, 10**6))
def test_pattern_accumulate_matches_coo(n, m, seed):
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, n, m)
    cols = rng.integers(0, n, m)
    vals = rng.normal(size=m)
    pat = CSRPattern(rows, cols, (n, n))
    A = pat.matrix(pat.accumulate(vals))
    ref = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).toarray()
    np.testing.assert_allclose(A.toarray(), ref, atol=1e-14)
    np.testing.assert_allclose(triplets_to_csr(rows, cols, vals, (n, n)).toarray(), ref, atol=1e-14)
    assert A.has_sorted_indices


def test_pattern_diagonal():
    pat = CSRPattern([0, 1, 1, 2], [0, 1, 0, 1], (3, 3))
    data = pat.diagonal_data(np.array([5.0, 6.0, 7.0]))
    # row 2 has no diagonal slot, so its value is dropped
    np.testing.assert_array_equal(pat.matrix(data).toarray(), np.diag([5.0, 6.0, 0.0]))
    assert pat.diag[2] == -1


def laplacian_1d(n, shift=0.0):
    return sp.diags([-np.ones(n - 1), (2 + shift) * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr")


def test_cg_matches_dense_solve():
    rng = np.random.default_rng(0)
    A = laplacian_1d(80, 0.01)
    b = rng.normal(size=80)
    x, info = krylov_solve(A, b, tol=1e-12)
    assert info.method == "cg"
    np.testing.assert_allclose(x, np.linalg.solve(A.toarray(), b), rtol=1e-8, atol=1e-9)
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b)


def test_bicgstab_for_nonsymmetric():
    rng = np.random.default_rng(1)
    A = laplacian_1d(60, 0.5) + sp.diags([0.3 * np.ones(59)], [1])
    b = rng.normal(size=60)
    x, info = krylov_solve(A, b, tol=1e-12)
    assert info.method == "bicgstab"
    np.testing.assert_allclose(x, np.linalg.solve(A.toarray(), b), rtol=1e-8, atol=1e-9)
    np.testing.assert_allclose(solve_linear(A, b), x, atol=1e-8)


def test_zero_rhs():
    x, info = krylov_solve(laplacian_1d(5), np.zeros(5))
    np.testing.assert_array_equal(x, 0)
    assert info.iterations == 0


def test_failure_carries_residual():
    A = laplacian_1d(400)
    b = np.random.default_rng(2).normal(size=400)
    with pytest.raises(IterativeSolverError) as info:
        krylov_solve(A, b, tol=1e-14, max_iter=3)
    assert info.value.residual > 1e-14
    assert info.value.iterations >= 3


def test_shape_checks():
    with pytest.raises(ValueError):
        krylov_solve(sp.eye(3), np.ones(4))


def test_matrix_properties_m_matrix():
    rep = matrix_properties(laplacian_1d(6, 0.1))
    assert rep.is_z_matrix and rep.strictly_diag_dominant and rep.is_m_matrix
    assert rep.failing_rows == []
    assert rep.max_offdiag == -1.0


def test_matrix_properties_failures():
    A = sp.csr_matrix(np.array([[2.0, 0.5, 0.0], [-1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
    rep = matrix_properties(A)
    assert not rep.is_z_matrix
    assert not rep.strictly_diag_dominant  # row 1 is only weakly dominant
    assert rep.failing_rows == [0, 1]
    assert rep.row_sums_min == pytest.approx(0.0)


def test_identity_rows_count_as_dominant():
    assert matrix_properties(sp.eye(4, format="csr")).is_m_matrix


def test_matrix_market_round_trip(tmp_path):
    A = laplacian_1d(7, 0.3)
    path = tmp_path / "a.mtx"
    save_matrix_market(A, path)
    np.testing.assert_array_equal(scipy.io.mmread(str(path)).toarray(), A.toarray())
