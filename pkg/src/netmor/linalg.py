"""Small dense and sparse linear-algebra helpers."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def lu_nullspace(A: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Null-space basis of a full-row-rank ``A`` (m x n) from an LU factorization.

    With ``A.T = P L U`` and ``L = [L1; L2]`` (``L1`` square unit lower
    triangular) the columns of ``P @ [-L1^{-T} L2^T; I]`` span ``ker A``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, n = A.shape
    if m == 0:
        return np.eye(n)
    P, L, U = sla.lu(A.T)
    diag = np.abs(np.diag(U))
    if diag.size < m or np.any(diag <= tol * max(diag.max(), 1.0)):
        raise np.linalg.LinAlgError("matrix does not have full row rank")
    L1 = L[:m, :m]
    L2 = L[m:, :m]
    top = -sla.solve_triangular(L1.T, L2.T, lower=False, unit_diagonal=True)
    N = P @ np.vstack([top, np.eye(n - m)])
    return N


def gram_orthonormalize(X: np.ndarray, G, passes: int = 2) -> np.ndarray:
    """Return ``X R^{-1}`` with ``(X R^{-1})^T G (X R^{-1}) = I`` (Cholesky-QR, repeated)."""
    X = np.array(X, dtype=float, copy=True)
    if X.shape[1] == 0:
        return X
    for _ in range(passes):
        M = X.T @ (G @ X)
        M = 0.5 * (M + M.T)
        R = np.linalg.cholesky(M).T
        X = sla.solve_triangular(R, X.T, trans="T", lower=False).T
    return X


def weighted_projection(X: np.ndarray, V: np.ndarray, G) -> np.ndarray:
    """G-orthogonal projection of the columns of ``X`` onto ``im V`` (``V`` G-orthonormal)."""
    return V @ (V.T @ (G @ X))


def _orth(M: np.ndarray, rtol: float) -> np.ndarray:
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    r = int(np.sum(s > rtol * max(s[0], np.finfo(float).tiny))) if s.size else 0
    return U[:, :r]


def principal_angle_distance(A: np.ndarray, B: np.ndarray, rtol: float = 1e-11) -> float:
    """Sine of the largest principal angle between ``im A`` and ``im B``.

    Ranges are taken at numerical rank (relative tolerance ``rtol``); returns
    1.0 if their dimensions differ.
    """
    Qa, Qb = _orth(np.asarray(A, dtype=float), rtol), _orth(np.asarray(B, dtype=float), rtol)
    if Qa.shape[1] != Qb.shape[1]:
        return 1.0
    if Qa.shape[1] == 0:
        return 0.0
    return max(float(np.linalg.norm(Qa - Qb @ (Qb.T @ Qa), 2)),
               float(np.linalg.norm(Qb - Qa @ (Qa.T @ Qb), 2)))


class SaddleSolver:
    """Factorization of ``[[W, J^T], [J, 0]]`` for weighted pseudo-inverses of ``J``.

    ``pinv(y)`` returns the preimage ``x`` of ``y`` under ``J`` that is
    W-orthogonal to ``ker J``, i.e. the W-minimum-norm solution of ``J x = y``.
    """

    def __init__(self, W, J):
        W = sp.csc_matrix(W)
        J = sp.csc_matrix(J)
        self.n = W.shape[0]
        self.m = J.shape[0]
        K = sp.bmat([[W, J.T], [J, None]], format="csc")
        self._lu = spla.splu(K)

    def pinv(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        squeeze = y.ndim == 1
        Y = y.reshape(self.m, -1)
        rhs = np.vstack([np.zeros((self.n, Y.shape[1])), Y])
        X = self._lu.solve(rhs)[: self.n]
        return X[:, 0] if squeeze else X
