"""Complex linear-algebra helpers used by the channel model and WMMSE.

Complex matrices are plain ``complex128`` arrays: numpy's memory layout for
that dtype is exactly row-major interleaved (re, im) float64 pairs, which is
also the wire layout used by the dataset format.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DomainError, ShapeMismatchError, SingularSystemError

HERMITIAN_ATOL = 1e-12
RIDGE = 1e-12


def hermitian_solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve A X = B for Hermitian positive definite A via Cholesky.

    A failed factorisation is retried once with a small ridge (RIDGE * I);
    if that also fails the system is reported as singular.  The residual
    contract is max|A X - B| <= 1e-9 * max|B| for well-conditioned systems.
    """
    a = np.asarray(matrix, dtype=np.complex128)
    b = np.asarray(rhs, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatchError(f"hermitian_solve: matrix must be square, got {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ShapeMismatchError(
            f"hermitian_solve: rhs {b.shape} does not match matrix {a.shape}"
        )
    if __debug__:
        asym = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
        if asym > HERMITIAN_ATOL * max(1.0, float(np.max(np.abs(a)))):
            raise DomainError(f"hermitian_solve: matrix asymmetry {asym:.3e}")

    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        try:
            chol = np.linalg.cholesky(a + RIDGE * np.eye(a.shape[0]))
        except np.linalg.LinAlgError:
            raise SingularSystemError(
                f"hermitian_solve: factorisation failed for {a.shape} system"
            ) from None
    y = scipy.linalg.solve_triangular(chol, b, lower=True)
    return scipy.linalg.solve_triangular(chol, y, lower=True, trans="C")


def psd_sqrt(matrix: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Hermitian square root of a positive semidefinite matrix.

    Eigenvalues below -1e-12 * max_eig are rejected; small negative dust from
    rounding is clipped to zero.
    """
    a = np.asarray(matrix, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatchError(f"psd_sqrt: {name} must be square, got {a.shape}")
    eigvals, eigvecs = np.linalg.eigh(a)
    top = float(eigvals[-1]) if eigvals.size else 0.0
    if eigvals.size and eigvals[0] < -1e-12 * max(1.0, abs(top)):
        raise DomainError(f"psd_sqrt: {name} is not positive semidefinite")
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.conj().T
