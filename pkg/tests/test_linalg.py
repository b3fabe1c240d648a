import numpy as np
import pytest
import scipy.sparse as sp

from dfheat.linalg import LUFactor, SingularMatrixError, check_residual, factor_solve, to_csr


def test_identity():
    b = np.array([1.0, -2.0, 3.5])
    np.testing.assert_array_equal(factor_solve(sp.identity(3), b), b)


def test_small_saddle():
    A = sp.csr_matrix([[1.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(factor_solve(A, [2.0, 1.0]), [1.0, 1.0], atol=1e-15)


def test_random_spd_against_dense(rng):
    M = sp.random(50, 50, density=0.1, random_state=np.random.RandomState(3))
    A = (M @ M.T + 50 * sp.identity(50)).tocsr()
    b = rng.standard_normal(50)
    x = factor_solve(A, b)
    np.testing.assert_allclose(x, np.linalg.solve(A.toarray(), b), rtol=1e-12)
    assert check_residual(A, x, b) <= 1e-10 * np.linalg.norm(b)


def test_singular_detected():
    with pytest.raises(SingularMatrixError):
        LUFactor(sp.csr_matrix([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SingularMatrixError):
        LUFactor(sp.csr_matrix((3, 3)))


def test_non_square():
    with pytest.raises(ValueError):
        LUFactor(sp.csr_matrix(np.ones((2, 3))))


def test_residual_check_fails_on_wrong_solution():
    A = sp.identity(2, format="csr")
    with pytest.raises(SingularMatrixError):
        check_residual(A, np.array([1.0, 0.0]), np.array([0.0, 1.0]))


def test_canonical_csr():
    A = sp.coo_matrix(([1.0, 2.0, 3.0], ([0, 0, 1], [1, 1, 0])), shape=(2, 2))
    C = to_csr(A)
    assert C[0, 1] == 3.0 and C.has_sorted_indices
