"""Sparse SPD solves for the implicit steps, and a dense direct oracle."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

DENSE_MAX = 512


class SolverError(RuntimeError):
    pass


class IllConditionedWarning(RuntimeWarning):
    pass


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    # set when p^T A p <= 0 was met, i.e. A is not positive definite
    indefinite: bool = False


def cg_solve(A, b, tol: float = 1e-10, max_iter: int | None = None, x0=None):
    """Jacobi-preconditioned conjugate gradients.

    Returns ``(x, report)``.  ``report.residual`` is the true relative
    residual ||Ax - b|| / ||b|| of the returned iterate.  Stops early and
    flags ``indefinite`` on a direction of nonpositive curvature.
    """
    A = sp.csr_matrix(A) if not sp.issparse(A) else A
    b = np.asarray(b, dtype=float)
    n = b.size
    if max_iter is None:
        max_iter = 10 * n
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("nonpositive diagonal entry; matrix is not SPD")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)

    inv_d = 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = inv_d * r
    p = z.copy()
    rz = r @ z
    target = tol * bnorm
    k = 0
    indefinite = False
    while np.linalg.norm(r) > target and k < max_iter:
        Ap = A @ p
        curv = p @ Ap
        if curv <= 0.0:
            indefinite = True
            break
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        z = inv_d * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        k += 1
    res = float(np.linalg.norm(b - A @ x) / bnorm)
    return x, SolveReport(k, res, (res <= tol) and not indefinite, indefinite)


def dense_solve_oracle(A_dense, b) -> np.ndarray:
    """Direct LU solve with partial pivoting; test oracle for small systems.

    Warns when the condition number exceeds 1e10 and applies one round of
    iterative refinement if the residual misses 1e-10 ||b||.
    """
    A = np.asarray(A_dense, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise ValueError("shape mismatch")
    if n > DENSE_MAX:
        raise ValueError(f"dense oracle is capped at n <= {DENSE_MAX}")
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SolverError("singular matrix") from exc
    cond = np.linalg.cond(A)
    if not np.isfinite(cond):
        raise SolverError("singular matrix")
    if cond > 1e10:
        warnings.warn(f"ill-conditioned system, cond ~ {cond:.3e}", IllConditionedWarning, stacklevel=2)
    bnorm = np.linalg.norm(b)
    r = b - A @ x
    if np.linalg.norm(r) > 1e-10 * bnorm:
        x = x + np.linalg.solve(A, r)
    return x
