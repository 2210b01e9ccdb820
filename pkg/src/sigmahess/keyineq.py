"""The sigma_{n-1} key inequality: its quadratic form, the Hadamard matrix
(a_pq), closed-form minors/cofactors, Schur-product PSD checks, and the
sigma_2 counterexample in dimension four.

Indices are 0-based; ``i`` is always the distinguished (excluded) index.
"""
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import NamedTuple

import numpy as np

from .cone import in_gamma_k
from .errors import NotInConeError
from .symfunc import SymTable, as_array, eigh_jacobi, sigma, sigma_grad, sigma_hess

PSD_TOL = 1e-9


# --------------------------------------------------------------------------
# quadratic form of the key inequality
# --------------------------------------------------------------------------

@dataclass
class FormReport:
    matrix: np.ndarray
    min_eig: float
    psd: bool
    hypotheses: dict
    tol: float = PSD_TOL
    scale: float = 1.0

    def to_json(self):
        h = self.hypotheses
        return {
            "kappa": [float(v) for v in h["kappa"]],
            "i": int(h["i"]),
            "k": int(h["k"]),
            "K": float(h["K"]),
            "eps": float(h["eps"]),
            "min_eig": float(self.min_eig),
            "psd": bool(self.psd),
            "tol": float(self.tol),
            "scale": float(self.scale),
        }


def form_parts(kappa, i, eps, k=None):
    """Split the form as ``M = c * K * g g^T + M0``.

    Returns ``(c, g, M0)`` with ``c = kappa_i``, ``g = grad sigma_k`` and
    ``M0 = -kappa_i * Hess sigma_k + D`` (D diagonal: ``-g_i`` at i and
    ``(1 + eps) g_j`` elsewhere).
    """
    x = as_array(kappa)
    n = x.size
    k = n - 1 if k is None else k
    g = sigma_grad(k, x)
    S = sigma_hess(k, x)
    d = (1.0 + eps) * g
    d[i] = -g[i]
    M0 = -x[i] * S + np.diag(d)
    return float(x[i]), g, M0


def min_eig_rank_one(M0, c, g):
    """Smallest eigenvalue of ``M0 + c g g^T`` via the secular equation.

    The answer is accurate relative to ``||M0||`` no matter how large ``c`` is,
    which a dense eigensolver on the assembled matrix cannot guarantee.
    """
    lam, V = eigh_jacobi(M0)
    lam = lam[::-1]
    w = (V[:, ::-1].T @ np.asarray(g, dtype=float))
    if c == 0.0 or not np.any(w != 0.0):
        return float(lam[0])
    live = np.flatnonzero(w != 0.0)
    dead_min = float(np.min(lam[w == 0.0])) if live.size < lam.size else math.inf
    lw, ww = lam[live], w[live] ** 2
    wn = float(np.sum(ww))

    def secular(mu):
        return 1.0 + c * float(np.sum(ww / (lw - mu)))

    if c > 0:
        lo = lw[0]
        hi = lw[1] if lw.size > 1 else lw[0] + c * wn
        s_lo = -1.0
    else:
        lo = lw[0] + c * wn
        hi = lw[0]
        s_lo = 1.0
    scale = max(abs(lo), abs(hi), float(np.max(np.abs(lam))), 1e-300)
    for _ in range(400):
        if hi - lo <= 4.0 * np.finfo(float).eps * scale:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f = secular(mid)
        if f == 0.0:
            lo = hi = mid
            break
        if (f > 0) == (s_lo > 0):
            lo = mid
        else:
            hi = mid
    return float(min(0.5 * (lo + hi), dead_min))


def build_prop21_form(kappa, i, K, eps, k=None):
    """Symmetric matrix of the key-inequality quadratic form.

    ``v^T M v`` equals
    ``kappa_i [K (sum_p sigma^pp v_p)^2 - sum sigma^{pp,qq} v_p v_q]
    - sigma^ii v_i^2 + (1 + eps) sum_{j != i} sigma^jj v_j^2``
    for ``v_j = u_{jji}``. ``k`` defaults to ``n - 1``.
    """
    x = as_array(kappa)
    n = x.size
    k = n - 1 if k is None else k
    c, g, M0 = form_parts(x, i, eps, k)
    M = c * K * np.outer(g, g) + M0
    M = 0.5 * (M + M.T)
    scale = max(float(np.max(np.abs(M0))), np.finfo(float).tiny)
    lam = min_eig_rank_one(M0, c * K, g)
    return FormReport(
        matrix=M,
        min_eig=lam,
        psd=bool(lam >= -PSD_TOL * scale),
        hypotheses={"kappa": x.copy(), "i": int(i), "K": float(K), "eps": float(eps), "k": int(k)},
        tol=PSD_TOL,
        scale=scale,
    )


def form_value(kappa, i, K, eps, v, k=None):
    """Direct scalar evaluation of the key-inequality left-hand side."""
    x = as_array(kappa)
    v = np.asarray(v, dtype=float)
    n = x.size
    k = n - 1 if k is None else k
    t = SymTable(x)
    g = [t(k - 1, (p,)) for p in range(n)]
    lin = math.fsum(g[p] * v[p] for p in range(n))
    cross = math.fsum(t(k - 2, (p, q)) * v[p] * v[q] for p in range(n) for q in range(n) if p != q)
    rest = math.fsum((1.0 + eps) * g[j] * v[j] ** 2 for j in range(n) if j != i)
    return x[i] * (K * lin * lin - cross) - g[i] * v[i] ** 2 + rest


def K_grid(K_max, K_min=1.0):
    K = float(K_min)
    while K <= K_max:
        yield K
        K *= 2.0


def find_K_threshold(kappa, i, eps, K_max, k=None):
    """Smallest K on the grid 1, 2, 4, ... <= K_max whose form is PSD.

    Returns ``None`` when no grid value certifies the form.
    """
    for K in K_grid(K_max):
        if build_prop21_form(kappa, i, K, eps, k).psd:
            return K
    return None


# --------------------------------------------------------------------------
# the matrix (a_pq) and its determinants
# --------------------------------------------------------------------------

@dataclass
class HadamardMatrix:
    base: np.ndarray
    excluded: int
    indices: list = field(default_factory=list)
    entries: np.ndarray = None

    def submatrix(self, rows, cols):
        pos = {p: a for a, p in enumerate(self.indices)}
        return self.entries[np.ix_([pos[r] for r in rows], [pos[c] for c in cols])]


def hadamard_matrix(kappa, i):
    """(n-1) x (n-1) matrix over p, q != i.

    ``a_pp = sigma_{n-3}(kappa|ip)`` and ``a_pq = -sigma_{n-3}(kappa|ipq)``.
    """
    x = as_array(kappa)
    n = x.size
    if n < 3:
        raise ValueError("the Hadamard matrix needs n >= 3")
    t = SymTable(x)
    idx = [p for p in range(n) if p != i]
    A = np.empty((n - 1, n - 1))
    for a, p in enumerate(idx):
        A[a, a] = t(n - 3, (i, p))
        for b in range(a + 1, n - 1):
            A[a, b] = A[b, a] = -t(n - 3, (i, p, idx[b]))
    return HadamardMatrix(base=x.copy(), excluded=int(i), indices=idx, entries=A)


def principal_minor_formula(kappa, indices, excluded, table=None):
    """Closed form of the principal minor of (a_pq) on ``indices``:
    ``sigma_{n-2}(kappa|i)^(m-1) * sigma_{n-m-2}(kappa|i, indices)``."""
    x = as_array(kappa)
    n = x.size
    m = len(indices)
    if m == 0:
        return 1.0
    if excluded in indices:
        raise ValueError("indices must not contain the excluded index")
    t = table or SymTable(x)
    return t(n - 2, (excluded,)) ** (m - 1) * t(n - m - 2, (excluded, *indices))


def cofactor_formula(kappa, indices, dropped, excluded, table=None):
    """Closed form of the (m-1) x (m-1) minor with rows ``indices[:-1]`` and
    columns ``indices`` minus ``dropped`` (which may not be the last index).

    Evaluates
    ``(-1)^(m+k) [ sigma_{n-3}(kappa|i i_k i_m) D_{m-2}(indices[:-1] without i_k)
    + sigma_{n-m}(kappa|i i_1..i_{m-1}) sigma_{n-2}(kappa|i)^(m-3)
      sum_{l != k, l < m} sigma_{n-3}(kappa|i i_l i_m) ]``
    with k the 1-based position of ``dropped``.
    """
    x = as_array(kappa)
    n = x.size
    indices = list(indices)
    m = len(indices)
    if m < 2:
        raise ValueError("need at least two indices")
    kpos = indices.index(dropped)
    if kpos == m - 1:
        raise ValueError("the dropped column must differ from the last index")
    t = table or SymTable(x)
    i = excluded
    last = indices[-1]
    head = indices[:-1]
    reduced = [p for a, p in enumerate(head) if a != kpos]
    first = t(n - 3, (i, dropped, last)) * principal_minor_formula(x, reduced, i, t)
    tail = math.fsum(t(n - 3, (i, head[l], last)) for l in range(m - 1) if l != kpos)
    second = 0.0
    if tail != 0.0:
        second = t(n - m, (i, *head)) * t(n - 2, (i,)) ** (m - 3) * tail
    sign = -1.0 if (m + kpos + 1) % 2 else 1.0
    return sign * (first + second)


def admissible_minor_tuples(n, excluded, max_m=None):
    """All increasing index tuples for principal minors of (a_pq)."""
    idx = [p for p in range(n) if p != excluded]
    top = len(idx) if max_m is None else min(max_m, len(idx))
    for m in range(1, top + 1):
        yield from combinations(idx, m)


def admissible_cofactor_tuples(n, excluded):
    for ids in admissible_minor_tuples(n, excluded):
        if len(ids) >= 2:
            for dropped in ids[:-1]:
                yield ids, dropped


class SchurCheck(NamedTuple):
    psd_a: bool
    psd_a2: bool
    min_eig_a: float
    min_eig_a2: float
    scale_a: float
    scale_a2: float


def schur_psd_check(kappa, i, tol=PSD_TOL, require_cone=True):
    """PSD verdicts for (a_pq) and its entrywise square (a_pq^2)."""
    x = as_array(kappa)
    n = x.size
    if require_cone and not in_gamma_k(x, n - 1):
        raise NotInConeError(f"{x.tolist()} is not in Gamma_{n - 1}")
    A = hadamard_matrix(x, i).entries
    A2 = A * A
    ea = float(eigh_jacobi(A)[0][-1])
    ea2 = float(eigh_jacobi(A2)[0][-1])
    sa = max(float(np.max(np.abs(A))), np.finfo(float).tiny)
    sa2 = max(float(np.max(np.abs(A2))), np.finfo(float).tiny)
    return SchurCheck(ea >= -tol * sa, ea2 >= -tol * sa2, ea, ea2, sa, sa2)


# --------------------------------------------------------------------------
# identities used to simplify the form (all polynomial in kappa)
# --------------------------------------------------------------------------

def _ids_pair(n):
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def _ids_triple(n):
    return [(i, p, q) for i in range(n) for p in range(n) for q in range(n)
            if len({i, p, q}) == 3]


def _pair_sum(x, t, i, j):
    n = x.size
    terms = [-t(n - 2, (j,)), 2 * x[i] * t(n - 3, (i, j)), t(n - 2, (i,))]
    return math.fsum(terms), (x[i] + x[j]) * t(n - 3, (i, j)), sum(map(abs, terms))


def _pair_product(x, t, i, j):
    n = x.size
    s3 = t(n - 3, (i, j))
    lhs = t(n - 2, (j,)) * (x[i] + x[j]) * s3
    terms = [x[i] ** 2 * s3 ** 2, t(n - 1) * s3]
    return lhs, math.fsum(terms), sum(map(abs, terms)) + abs(lhs)


def _triple_gradient(x, t, i, p, q):
    n = x.size
    terms = [
        x[i] * t(n - 2, (p,)) * t(n - 3, (i, q)),
        x[i] * t(n - 2, (q,)) * t(n - 3, (i, p)),
        -x[i] * t(n - 2, (i,)) * t(n - 3, (p, q)),
        -t(n - 2, (p,)) * t(n - 2, (q,)),
    ]
    s = t(n - 3, (i, p, q))
    rterms = [x[i] ** 2 * s * s, -t(n - 1) * s]
    return math.fsum(terms), math.fsum(rterms), sum(map(abs, terms + rterms))


def _triple_deleted(x, t, i, p, q):
    n = x.size
    lhs = t(n - 3, (i, p)) * t(n - 3, (i, q))
    rterms = [t(n - 3, (i, p, q)) ** 2, t(n - 2, (i,)) * t(n - 4, (i, p, q))]
    return lhs, math.fsum(rterms), abs(lhs) + sum(map(abs, rterms))


def _triple_expansion(x, t, i, p, q):
    n = x.size
    lhs = t(n - 3, (p, q))
    rterms = [x[i] * t(n - 4, (i, p, q)), t(n - 3, (i, p, q))]
    return lhs, math.fsum(rterms), abs(lhs) + sum(map(abs, rterms))


def _triple_weighted(x, t, i, p, q):
    n = x.size
    lterms = [-x[i] ** 2 * t(n - 3, (i, p)) * t(n - 3, (i, q)),
              x[i] * t(n - 2, (i,)) * t(n - 3, (p, q))]
    s = t(n - 3, (i, p, q))
    rterms = [-x[i] ** 2 * s * s, x[i] * t(n - 2, (i,)) * s]
    return math.fsum(lterms), math.fsum(rterms), sum(map(abs, lterms + rterms))


IDENTITIES = {
    "pair_sum": (_pair_sum, _ids_pair),
    "pair_product": (_pair_product, _ids_pair),
    "triple_gradient": (_triple_gradient, _ids_triple),
    "triple_deleted": (_triple_deleted, _ids_triple),
    "triple_expansion": (_triple_expansion, _ids_triple),
    "triple_weighted": (_triple_weighted, _ids_triple),
}


class IdentityCheck(NamedTuple):
    name: str
    indices: tuple
    lhs: float
    rhs: float
    scale: float

    @property
    def rel_err(self):
        return abs(self.lhs - self.rhs) / max(self.scale, 1e-300)


def check_identities(kappa, names=None):
    """Evaluate every identity at every admissible index tuple."""
    x = as_array(kappa)
    if x.size < 3:
        raise ValueError("identities need n >= 3")
    t = SymTable(x)
    out = []
    for name in names or IDENTITIES:
        fn, tuples = IDENTITIES[name]
        for ids in tuples(x.size):
            lhs, rhs, scale = fn(x, t, *ids)
            out.append(IdentityCheck(name, ids, float(lhs), float(rhs), float(scale)))
    return out


# --------------------------------------------------------------------------
# sigma_2, n = 4 counterexample
# --------------------------------------------------------------------------

def counterexample_poly(K, t):
    """Determinant of the sigma_2 form at i = 0, eps = 0 along the family."""
    return (275 * K - 311 + (12 * K - 12) / t ** 4 + (96 * K - 100) / t ** 2
            + (313 * K - 427) * t ** 2 + (66 * K - 216) * t ** 4 - 72 * K * t ** 6)


def counterexample_family(t):
    """``(2t + 1/t, 2t, 0, -t)``: sigma_2 == 1 and in Gamma_2 for every t > 0."""
    if not t > 0:
        raise ValueError("t must be positive")
    return np.array([2 * t + 1 / t, 2 * t, 0.0, -t])


def form_witness(kappa, i, eps, k=None):
    """Unit vector orthogonal to grad sigma_k minimizing the K-free part.

    Along such a vector the K term vanishes, so a negative value certifies
    an indefinite form for every K at once.
    """
    c, g, M0 = form_parts(kappa, i, eps, k)
    Q, _ = np.linalg.qr(np.column_stack([g, np.eye(g.size)]))
    P = Q[:, 1:g.size]
    lam, V = eigh_jacobi(P.T @ M0 @ P)
    v = P @ V[:, -1]
    return v / np.linalg.norm(v), float(lam[-1])


@dataclass
class CounterexampleRow:
    t: float
    K: float
    poly: float
    det: float
    min_eig: float
    witness_value: float

    def as_dict(self):
        return asdict(self)


def counterexample_sweep(t, K_max=2.0 ** 60, eps=0.0, i=0):
    """Evaluate the sigma_2 / n = 4 form on the K grid at one t."""
    x = counterexample_family(t)
    v, _ = form_witness(x, i, eps, k=2)
    rows = []
    for K in K_grid(K_max):
        rep = build_prop21_form(x, i, K, eps, k=2)
        rows.append(CounterexampleRow(
            t=float(t), K=K, poly=float(counterexample_poly(K, t)),
            det=float(np.linalg.det(rep.matrix)), min_eig=rep.min_eig,
            witness_value=float(form_value(x, i, K, eps, v, k=2)),
        ))
    return rows


def sigma2_check(t):
    return sigma(2, counterexample_family(t))
