"""Elementary symmetric functions of eigenvalue vectors and their derivatives.

Conventions used throughout the package:

* indices are 0-based;
* ``sigma(0, .) == 1`` and ``sigma(m, .) == 0`` for ``m < 0`` or ``m`` larger
  than the number of remaining variables, so every formula stays total;
* ``sigma_excl(m, kappa, S)`` is sigma_m of ``kappa`` with the entries in
  ``S`` deleted.
"""
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import kernels
from .errors import DegenerateSpectrumError

JACOBI_TOL = 1e-13
GAP_TOL = 1e-8


@dataclass(frozen=True)
class CurvatureVector:
    """An n-vector of eigenvalues / principal curvatures."""

    values: np.ndarray
    sorted_desc: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size < 2:
            raise ValueError("a curvature vector needs n >= 2 entries")
        if not np.all(np.isfinite(v)):
            raise ValueError("curvature entries must be finite")
        if self.sorted_desc and np.any(np.diff(v) > 0):
            raise ValueError("values are not sorted in descending order")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def sorted(cls, values):
        return cls(np.sort(np.asarray(values, dtype=float))[::-1], sorted_desc=True)

    @property
    def n(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return self.values.size


def as_array(kappa):
    if isinstance(kappa, CurvatureVector):
        return kappa.values
    return np.asarray(kappa, dtype=float).reshape(-1)


def sigma_all(kappa):
    """Return the array ``[sigma_0, ..., sigma_n]``."""
    return kernels.esp_all(as_array(kappa))


def sigma(m, kappa):
    """m-th elementary symmetric polynomial of ``kappa``."""
    x = as_array(kappa)
    if m < 0 or m > x.size:
        return 0.0
    if m == 0:
        return 1.0
    return float(kernels.esp_all(x)[m])


def _remaining(x, excl):
    excl = set(int(e) for e in excl)
    if any(e < 0 or e >= x.size for e in excl):
        raise IndexError(f"excluded index out of range: {sorted(excl)}")
    keep = [j for j in range(x.size) if j not in excl]
    return x[keep]


def sigma_excl(m, kappa, excl: Iterable[int] = ()):
    """sigma_m of ``kappa`` with the indices in ``excl`` removed."""
    x = as_array(kappa)
    rest = _remaining(x, excl)
    if m < 0 or m > rest.size:
        return 0.0
    if m == 0:
        return 1.0
    return float(kernels.esp_all(rest)[m])


@dataclass
class SymTable:
    """Memoized ``sigma_m(kappa | S)`` lookups for one fixed vector.

    Keys are ``(m, frozenset(S))``. The full coefficient vector of each
    deleted subvector is cached, so all orders for a given ``S`` cost one
    recurrence.
    """

    base: np.ndarray
    _coeffs: dict = field(default_factory=dict, repr=False)
    _values: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.base = as_array(self.base).copy()

    @property
    def n(self):
        return self.base.size

    def coeffs(self, excl=()):
        key = frozenset(int(e) for e in excl)
        c = self._coeffs.get(key)
        if c is None:
            c = kernels.esp_all(_remaining(self.base, key))
            self._coeffs[key] = c
        return c

    def __call__(self, m, excl=()):
        # fast path keyed on the raw tuple; index order only matters for the key
        key = (m, excl)
        try:
            return self._values[key]
        except (KeyError, TypeError):
            pass
        c = self.coeffs(excl)
        v = float(c[m]) if 0 <= m < c.size else 0.0
        if isinstance(excl, tuple):
            self._values[key] = v
        return v

    def entries(self):
        """All cached values as ``{(m, S): value}``."""
        return {(m, S): float(c[m]) for S, c in self._coeffs.items() for m in range(c.size)}


def sigma_grad(k, kappa):
    """Gradient of sigma_k: component p is ``sigma_{k-1}(kappa | p)``."""
    x = as_array(kappa)
    _, g = kernels.batch_sigma_grad(x[None, :], k)
    return g[0]


def sigma_hess(k, kappa):
    """Hessian of sigma_k in the eigenvalues.

    Zero diagonal, off-diagonal entry (p, q) equal to ``sigma_{k-2}(kappa | p q)``.
    """
    x = as_array(kappa)
    n = x.size
    table = SymTable(x)
    H = np.zeros((n, n))
    for p in range(n):
        for q in range(p + 1, n):
            H[p, q] = H[q, p] = table(k - 2, (p, q))
    return H


def eigh_jacobi(A):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi.

    Returns eigenvalues sorted descending and the matching eigenvectors as
    columns.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    S = 0.5 * (A + A.T)
    w, V = kernels.batch_jacobi_eigh(S[None], JACOBI_TOL)
    order = np.argsort(-w[0], kind="stable")
    return w[0][order], V[0][:, order]


def eigvals_sym(A):
    return eigh_jacobi(A)[0]


def sigma_matrix(k, A):
    """sigma_k of the eigenvalues of symmetric ``A`` (sum of k x k principal minors)."""
    return sigma(k, eigvals_sym(A))


@dataclass(frozen=True)
class SymmetricFunction:
    """A symmetric function f(kappa) with first and second derivatives."""

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    name: str = "f"


def sigma_function(k):
    return SymmetricFunction(
        value=lambda x: sigma(k, x),
        grad=lambda x: sigma_grad(k, x),
        hess=lambda x: sigma_hess(k, x),
        name=f"sigma_{k}",
    )


def second_directional(F: SymmetricFunction, A, B, gap_tol=GAP_TOL):
    """Second derivative of ``F(eig(A + t B))`` at t = 0.

    Evaluated in the eigenbasis of ``A`` as
    ``sum_jk f_jk B_jj B_kk + 2 sum_{j<k} (f_j - f_k)/(kappa_j - kappa_k) B_jk^2``.

    Raises
    ------
    DegenerateSpectrumError
        If two eigenvalues of ``A`` are closer than ``gap_tol * ||A||``.
    """
    kappa, V = eigh_jacobi(A)
    Bt = V.T @ np.asarray(B, dtype=float) @ V
    Bt = 0.5 * (Bt + Bt.T)
    scale = max(np.max(np.abs(kappa)), np.finfo(float).tiny)
    gaps = -np.diff(kappa)
    if gaps.size and np.min(gaps) < gap_tol * scale:
        raise DegenerateSpectrumError(
            f"eigenvalue gap {np.min(gaps):.3e} below {gap_tol:g} * {scale:.3e}"
        )
    fd = F.grad(kappa)
    fdd = F.hess(kappa)
    d = np.diag(Bt)
    total = float(d @ fdd @ d)
    n = kappa.size
    for j in range(n):
        for k in range(j + 1, n):
            total += 2.0 * (fd[j] - fd[k]) / (kappa[j] - kappa[k]) * Bt[j, k] ** 2
    return total


def hessian_contraction(k, kappa, H):
    """``sigma_k^{pq,rs} H_pq H_rs`` at the diagonal matrix ``diag(kappa)``.

    Uses the diagonal-frame reduction
    ``sum_{p != q} sigma_{k-2}(kappa|pq) (H_pp H_qq - H_pq^2)``.
    """
    x = as_array(kappa)
    H = np.asarray(H, dtype=float)
    S = sigma_hess(k, x)
    d = np.diag(H)
    return float(d @ S @ d - np.sum(S * H * H))


def newton_expansion_residual(k, kappa, i):
    """``sigma_k - (kappa_i sigma_{k-1}(kappa|i) + sigma_k(kappa|i))``."""
    x = as_array(kappa)
    return sigma(k, x) - (x[i] * sigma_excl(k - 1, x, (i,)) + sigma_excl(k, x, (i,)))


def fact_i_error(k, kappa):
    """Largest relative gap between ``sigma_hess`` and exact unit mixed differences.

    sigma_k is affine in each variable, so
    ``sigma(x + e_p + e_q) - sigma(x + e_p) - sigma(x + e_q) + sigma(x)`` is
    exactly the (p, q) second derivative, and the diagonal is zero.
    """
    x = as_array(kappa)
    n = x.size
    H = sigma_hess(k, x)
    e = np.eye(n)
    base = sigma(k, x)
    worst = 0.0
    for p in range(n):
        for q in range(p, n):
            vals = (sigma(k, x + e[p] + e[q]), sigma(k, x + e[p]), sigma(k, x + e[q]), base)
            if p == q:
                # second difference in one variable vanishes for an affine function
                vals = (sigma(k, x + 2 * e[p]), 2 * sigma(k, x + e[p]), 0.0, -base)
                fd = vals[0] - vals[1] - vals[3]
            else:
                fd = vals[0] - vals[1] - vals[2] + vals[3]
            scale = max(max(abs(v) for v in vals), abs(H[p, q]), 1e-300)
            worst = max(worst, abs(fd - H[p, q]) / scale)
    return worst


def fact_ii_error(k, kappa, H, gap_tol=GAP_TOL):
    """Relative gap between two evaluations of ``sigma_k^{pq,rs} H_pq H_rs``.

    One is :func:`hessian_contraction`, the other the eigenbasis formula of
    :func:`second_directional` applied at ``diag(kappa)``.
    """
    x = as_array(kappa)
    H = 0.5 * (np.asarray(H, dtype=float) + np.asarray(H, dtype=float).T)
    a = hessian_contraction(k, x, H)
    b = second_directional(sigma_function(k), np.diag(x), H, gap_tol=gap_tol)
    S = sigma_hess(k, x)
    scale = max(float(np.sum(np.abs(S) * (np.abs(np.outer(np.diag(H), np.diag(H))) + H * H))), 1e-300)
    return abs(a - b) / scale
