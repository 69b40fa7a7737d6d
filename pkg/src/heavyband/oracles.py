"""Small dense reference solvers used only to cross-check the banded paths.

Both are deliberately plain textbook algorithms so they share no code with
the LAPACK-backed production routines.  Intended for n <= 128.
"""

from __future__ import annotations

import numpy as np

MAX_DIM = 128


def dense_inverse(M: np.ndarray) -> np.ndarray:
    """Gauss-Jordan elimination with partial pivoting."""
    A = np.array(M, dtype=complex)
    n = A.shape[0]
    if n > MAX_DIM:
        raise ValueError(f"oracle limited to n <= {MAX_DIM}")
    X = np.eye(n, dtype=complex)
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if A[p, k] == 0:
            raise np.linalg.LinAlgError("singular matrix")
        if p != k:
            A[[k, p]] = A[[p, k]]
            X[[k, p]] = X[[p, k]]
        piv = A[k, k]
        A[k] /= piv
        X[k] /= piv
        for i in range(n):
            if i != k and A[i, k] != 0:
                f = A[i, k]
                A[i] -= f * A[k]
                X[i] -= f * X[k]
    return X


def jacobi_eigenvalues(M: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100) -> np.ndarray:
    """Cyclic Jacobi rotations for a real symmetric matrix; ascending eigenvalues."""
    A = np.array(M, dtype=float)
    n = A.shape[0]
    if n > MAX_DIM:
        raise ValueError(f"oracle limited to n <= {MAX_DIM}")
    scale = max(np.linalg.norm(A), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1)) if theta != 0 else 1.0
                c = 1 / np.sqrt(t * t + 1)
                s = t * c
                Ap, Aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap, Aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
    return np.sort(np.diag(A))
