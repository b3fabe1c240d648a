"""Sparse direct solves.

Matrices are stored as :class:`scipy.sparse.csr_matrix`; factorization is
SuperLU with partial pivoting, which handles the indefinite saddle-point
systems as well as the nonsymmetric convection-diffusion ones.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import norm as sparse_norm, splu

PIVOT_RTOL = 1e-14
RESIDUAL_RTOL = 1e-10


class SingularMatrixError(np.linalg.LinAlgError):
    """Factorization hit a pivot below ``PIVOT_RTOL * max|A|``."""


def to_csr(A) -> sp.csr_matrix:
    """Canonical CSR: duplicates summed, column indices sorted per row."""
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    return A


class LUFactor:
    """Immutable LU factorization of a square sparse matrix."""

    def __init__(self, A):
        A = to_csr(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.A = A
        amax = abs(A).max() if A.nnz else 0.0
        if amax == 0.0:
            raise SingularMatrixError("zero matrix")
        try:
            self._lu = splu(A.tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:  # SuperLU reports exact singularity this way
            raise SingularMatrixError(str(exc)) from exc
        pivots = np.abs(self._lu.U.diagonal())
        if pivots.min() < PIVOT_RTOL * amax:
            raise SingularMatrixError(
                f"pivot {pivots.min():.3e} below {PIVOT_RTOL:g} * max|A| = {PIVOT_RTOL * amax:.3e}")

    def solve(self, b, check: bool = True) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x = self._lu.solve(b)
        if check:
            check_residual(self.A, x, b)
        return x


def check_residual(A, x, b, rtol: float = RESIDUAL_RTOL) -> float:
    """Return ``||Ax - b||`` after asserting the backward-error bound."""
    r = np.linalg.norm(A @ x - b)
    bound = rtol * (sparse_norm(A) * np.linalg.norm(x) + np.linalg.norm(b))
    if not r <= bound:
        raise SingularMatrixError(f"residual {r:.3e} exceeds bound {bound:.3e}")
    return r


def factor_solve(A, b, check: bool = True) -> np.ndarray:
    """Solve ``A x = b`` by sparse LU."""
    return LUFactor(A).solve(b, check=check)
