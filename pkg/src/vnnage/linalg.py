"""Dense symmetric linear algebra for small matrices (m up to ~128).

Covers exactly what the rest of the package needs: a cyclic Jacobi
eigendecomposition with a fixed ordering/sign convention, simple-line
least squares, unbiased sample covariance, and spectrum normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Jacobi stops when the off-diagonal Frobenius norm falls below
# OFF_DIAG_TOL * ||C||_F, or fails after MAX_SWEEPS full sweeps.
OFF_DIAG_TOL = 1e-12
MAX_SWEEPS = 100


class ConvergenceError(RuntimeError):
    """An iterative routine exhausted its iteration cap."""


@dataclass(frozen=True)
class EigenDecomposition:
    """Ordered eigenpairs of a symmetric matrix.

    eigenvalues are sorted descending; eigenvectors[:, j] pairs with
    eigenvalues[j] and is signed so its largest-magnitude entry is
    non-negative.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[0]


def _as_square_symmetric(C, tol: float = 1e-9) -> np.ndarray:
    A = np.asarray(C, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        raise ValueError("matrix must be non-empty")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    if np.max(np.abs(A - A.T)) > tol:
        raise ValueError(f"matrix is not symmetric within {tol}")
    return 0.5 * (A + A.T)


def sym_eigendecompose(C) -> EigenDecomposition:
    """Eigendecompose a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues in descending order with orthonormal, sign-fixed
    eigenvectors.  Raises ValueError on non-square/asymmetric input and
    ConvergenceError if the off-diagonal mass has not dropped below
    OFF_DIAG_TOL * ||C||_F after MAX_SWEEPS sweeps.
    """
    A = _as_square_symmetric(C)
    m = A.shape[0]
    V = np.eye(m)

    fro = float(np.linalg.norm(A))
    tol = OFF_DIAG_TOL * fro
    # Rotations on entries this small cannot keep the stop criterion
    # out of reach; skipping them avoids churn in late sweeps.
    skip = tol / (2.0 * m) if m > 1 else 0.0

    if m > 1 and fro > 0.0:
        for sweep in range(MAX_SWEEPS + 1):
            off = np.sqrt(2.0 * np.sum(np.triu(A, 1) ** 2))
            if off <= tol:
                break
            if sweep == MAX_SWEEPS:
                raise ConvergenceError(
                    f"Jacobi did not converge within {MAX_SWEEPS} sweeps (m={m})"
                )
            for p in range(m - 1):
                for q in range(p + 1, m):
                    apq = A[p, q]
                    if abs(apq) <= skip:
                        continue
                    # Golub & Van Loan sym.schur: zero A[p,q] with the
                    # smaller-angle rotation for stability.
                    tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                    t = np.sign(tau) if tau != 0.0 else 1.0
                    t /= abs(tau) + np.sqrt(1.0 + tau * tau)
                    c = 1.0 / np.sqrt(1.0 + t * t)
                    s = t * c
                    # A <- J^T A J restricted to rows/cols p and q
                    col_p, col_q = A[:, p].copy(), A[:, q].copy()
                    A[:, p] = c * col_p - s * col_q
                    A[:, q] = s * col_p + c * col_q
                    row_p, row_q = A[p, :].copy(), A[q, :].copy()
                    A[p, :] = c * row_p - s * row_q
                    A[q, :] = s * row_p + c * row_q
                    A[p, q] = 0.0
                    A[q, p] = 0.0
                    vp, vq = V[:, p].copy(), V[:, q].copy()
                    V[:, p] = c * vp - s * vq
                    V[:, q] = s * vp + c * vq

    eigenvalues = np.diag(A).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    V = V[:, order]
    # Sign convention: largest-magnitude entry of each column non-negative.
    for j in range(m):
        k = int(np.argmax(np.abs(V[:, j])))
        if V[k, j] < 0.0:
            V[:, j] = -V[:, j]
    eigenvalues.setflags(write=False)
    V.setflags(write=False)
    return EigenDecomposition(eigenvalues=eigenvalues, eigenvectors=V)


def least_squares_line(x, y) -> tuple[float, float]:
    """Fit y = slope * x + intercept by ordinary least squares.

    Requires len(x) == len(y) >= 2 and non-constant x.  Residuals of the
    fit sum to zero (up to roundoff), which downstream bias correction
    relies on.
    """
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    if xs.ndim != 1 or ys.ndim != 1 or xs.shape != ys.shape:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if xs.size < 2:
        raise ValueError("need at least two points")
    x_mean = xs.mean()
    y_mean = ys.mean()
    sxx = float(np.sum((xs - x_mean) ** 2))
    if sxx == 0.0:
        raise ValueError("x is constant; slope is undefined")
    sxy = float(np.sum((xs - x_mean) * (ys - y_mean)))
    slope = sxy / sxx
    intercept = float(y_mean - slope * x_mean)
    return slope, intercept


def sample_covariance(data) -> np.ndarray:
    """Unbiased (1/(n-1)) covariance of rows-are-subjects data, n >= 2."""
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise ValueError("data must be 2-d (subjects x features)")
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least two subjects to estimate covariance")
    centered = X - X.mean(axis=0)
    C = centered.T @ centered / (n - 1)
    return 0.5 * (C + C.T)


def normalize_covariance(C) -> tuple[np.ndarray, float]:
    """Scale a symmetric PSD matrix by its largest eigenvalue.

    Returns (C / lambda_max, lambda_max), so the normalized spectrum
    lies in [0, 1] and matrix powers stay numerically tame.  A zero
    matrix is returned unchanged with lambda_max = 0.
    """
    A = _as_square_symmetric(C)
    lam_max = float(sym_eigendecompose(A).eigenvalues[0])
    if lam_max <= 0.0:
        if lam_max < 0.0:
            raise ValueError("matrix is not positive semidefinite")
        return A, 0.0
    return A / lam_max, lam_max
