"""Small dense complex-matrix helpers shared by the estimators and precoders.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.  The helpers
here only add shape checking and the conditioning contract used by the
least-squares and zero-forcing steps.
"""

import numpy as np

__all__ = ["SingularSystemError", "as_cmatrix", "matmul", "hermitian",
           "solve_ls", "solve_square", "DEFAULT_COND_CAP"]

DEFAULT_COND_CAP = 1e10


class SingularSystemError(np.linalg.LinAlgError):
    """Raised when a linear system is rank deficient or too ill conditioned.

    Attributes
    ----------
    cond : float
        Estimated 2-norm condition number of the offending matrix
        (``inf`` when exactly singular).
    """

    def __init__(self, message, cond=np.inf):
        super().__init__(f"{message} (cond={cond:.3e})")
        self.cond = float(cond)


def as_cmatrix(a):
    """Return ``a`` as a finite 2-D complex128 array."""
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def matmul(a, b):
    """Matrix product with an explicit inner-dimension check."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape[-1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def hermitian(a):
    """Conjugate transpose."""
    return np.conj(np.asarray(a)).T


def _cond_from_r(r):
    d = np.abs(np.diag(r))
    if d.size == 0:
        return 1.0
    if d.min() == 0.0:
        return np.inf
    return np.linalg.cond(r)


def solve_ls(a, y, cond_cap=DEFAULT_COND_CAP):
    """Least-squares solution of ``a @ x ~= y`` via a thin QR factorization.

    Parameters
    ----------
    a : array_like, shape (m, n)
        Tall matrix with full column rank (``m >= n``).
    y : array_like, shape (m,) or (m, k)
        Right-hand side(s).
    cond_cap : float
        Largest accepted condition number of ``a``.

    Returns
    -------
    x : ndarray, shape (n,) or (n, k)

    Raises
    ------
    SingularSystemError
        If ``a`` is rank deficient or its condition number exceeds
        ``cond_cap``.
    """
    a = np.asarray(a, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != y.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} vs rhs {y.shape}")
    m, n = a.shape
    if n > m:
        raise SingularSystemError(f"underdetermined system {m}x{n}")
    q, r = np.linalg.qr(a, mode="reduced")
    cond = _cond_from_r(r)
    if not cond < cond_cap:
        raise SingularSystemError("least-squares matrix not full column rank", cond)
    # r is upper triangular; back substitution through the generic solver is
    # fine at these sizes (n <= a few dozen)
    return np.linalg.solve(r, q.conj().T @ y)


def solve_square(a, b, cond_cap=DEFAULT_COND_CAP):
    """Solve ``a @ x = b`` for square ``a`` with a conditioning guard."""
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got {a.shape}")
    cond = np.linalg.cond(a)
    if not cond < cond_cap:
        raise SingularSystemError("square system is (near) singular", cond)
    return np.linalg.solve(a, b)
