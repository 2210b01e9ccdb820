"""Pure numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_kernels`` module. Batched
routines operate on stacks of small matrices with the batch axis first and
vectorize over it, so the Python-level loops only run over matrix indices.
"""
import numpy as np

from .errors import NumericalFailure


def esp_all(x):
    """Elementary symmetric polynomials sigma_0..sigma_n of ``x``.

    Builds the coefficients of prod(1 + x_i t) one factor at a time.
    """
    x = np.asarray(x, dtype=float)
    c = np.zeros(x.shape[0] + 1)
    c[0] = 1.0
    for j, xj in enumerate(x):
        c[1:j + 2] = c[1:j + 2] + xj * c[0:j + 1]
    return c


def batch_esp(X, k):
    """sigma_k of every row of ``X`` (shape (N, n))."""
    X = np.asarray(X, dtype=float)
    N, n = X.shape
    if k < 0 or k > n:
        return np.zeros(N)
    c = np.zeros((N, k + 1))
    c[:, 0] = 1.0
    for j in range(n):
        top = min(j + 1, k)
        c[:, 1:top + 1] = c[:, 1:top + 1] + X[:, j:j + 1] * c[:, 0:top]
    return c[:, k]


def batch_sigma_grad(X, k):
    """Return (sigma_k(x), [sigma_{k-1}(x|p)]_p) for every row of ``X``."""
    X = np.asarray(X, dtype=float)
    N, n = X.shape
    val = batch_esp(X, k)
    grad = np.empty((N, n))
    for p in range(n):
        grad[:, p] = batch_esp(np.delete(X, p, axis=1), k - 1)
    return val, grad


def batch_jacobi_eigh(A, tol=1e-13, max_sweeps=60):
    """Cyclic Jacobi eigendecomposition of a stack of symmetric matrices.

    Parameters
    ----------
    A : array_like, shape (N, n, n)
    tol : float
        Stop once the off-diagonal Frobenius norm falls below
        ``tol * ||A||_F`` for every matrix in the stack.

    Returns
    -------
    w : ndarray, shape (N, n)
        Eigenvalues, unsorted (diagonal of the rotated matrices).
    V : ndarray, shape (N, n, n)
        Orthogonal eigenvectors stored column-wise.
    """
    A = np.array(A, dtype=float, copy=True)
    N, n, _ = A.shape
    V = np.broadcast_to(np.eye(n), (N, n, n)).copy()
    if n == 1:
        return A[:, :, 0].copy(), V
    fro = np.sqrt(np.einsum("kij,kij->k", A, A))
    thresh = tol * fro
    iu = np.triu_indices(n, 1)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(A[:, iu[0], iu[1]] ** 2, axis=1))
        if np.all(off <= thresh):
            return np.diagonal(A, axis1=1, axis2=2).copy(), V
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[:, p, q]
                active = np.abs(apq) > 1e-300
                if not np.any(active):
                    continue
                app = A[:, p, p]
                aqq = A[:, q, q]
                safe = np.where(active, apq, 1.0)
                theta = (aqq - app) / (2.0 * safe)
                t = np.sign(theta) / (np.abs(theta) + np.hypot(1.0, theta))
                t = np.where(theta == 0.0, 1.0, t)
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                c_ = c[:, None]
                s_ = s[:, None]
                colp = A[:, :, p].copy()
                colq = A[:, :, q].copy()
                A[:, :, p] = c_ * colp - s_ * colq
                A[:, :, q] = s_ * colp + c_ * colq
                rowp = A[:, p, :].copy()
                rowq = A[:, q, :].copy()
                A[:, p, :] = c_ * rowp - s_ * rowq
                A[:, q, :] = s_ * rowp + c_ * rowq
                A[:, p, q] = np.where(active, 0.0, A[:, p, q])
                A[:, q, p] = A[:, p, q]
                vp = V[:, :, p].copy()
                vq = V[:, :, q].copy()
                V[:, :, p] = c_ * vp - s_ * vq
                V[:, :, q] = s_ * vp + c_ * vq
    raise NumericalFailure(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
