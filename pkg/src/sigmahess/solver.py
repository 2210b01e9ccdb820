"""Finite-difference Newton continuation for ``sigma_{n-1}[D^2 u] = f(x, u, Du)``.

The unknowns are the interior node values of ``u`` on a box; boundary values
are fixed Dirichlet data. Two operators are supported:

* ``euclidean``: sigma_{n-1} of the eigenvalues of the discrete Hessian;
* ``minkowski``: sigma_{n-1} of the principal curvatures of the spacelike
  graph, ``eig(g^{-1} h)`` with ``g = I - Du Du^T``, ``h = D^2u / sqrt(1 - |Du|^2)``.

Derivatives use centered second-order stencils (the four-point cross for the
mixed terms). Steps are damped so that every accepted state keeps all interior
eigenvalue vectors in Gamma_{n-1} and strictly lowers the residual.

A radial solver for round spheres ``C(n, k) r^{-k} = f(r)`` with the barrier
checks lives at the end of the module.
"""
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import sympy

from . import kernels
from .errors import (ConfigError, LineSearchError, NoRootError, NotSpacelikeError,
                     SeedError, SingularJacobianError, SolverError)
from .geometry import SPACELIKE_TOL

TOL_NEWTON = 1e-10
CONE_MARGIN = 1e-12
RESIDUAL_FLOOR = 1e-12
MAX_HALVINGS = 20
SIGNATURES = ("euclidean", "minkowski")


# --------------------------------------------------------------------------
# right-hand sides
# --------------------------------------------------------------------------

def _broadcast(val, n_nodes):
    return np.broadcast_to(np.asarray(val, dtype=float), (n_nodes,)).astype(float)


@dataclass
class RHS:
    """``f(x, u, p)`` evaluated on node arrays ``X (N, n)``, ``U (N,)``, ``P (N, n)``.

    ``du`` and ``dp`` return the partial derivatives in ``u`` and ``p``.
    """

    func: Callable
    du: Callable
    dp: Callable
    label: str = "f"

    def __call__(self, X, U, P):
        return _broadcast(self.func(X, U, P), X.shape[0])


def _symbols(n):
    xs = sympy.symbols(f"x0:{n}")
    ps = sympy.symbols(f"p0:{n}")
    return xs, sympy.Symbol("u"), ps


def _parse(expr, n, extra=()):
    xs, u, ps = _symbols(n)
    names = {str(s): s for s in (*xs, u, *ps, *extra)}
    names["pi"] = sympy.pi
    names["E"] = sympy.E
    try:
        e = sympy.sympify(expr, locals=names)
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ConfigError(f"cannot parse expression {expr!r}: {exc}") from exc
    allowed = set(names.values())
    stray = e.free_symbols - allowed
    if stray:
        raise ConfigError(f"unknown symbols {sorted(map(str, stray))} in {expr!r}")
    return e


def rhs_from_expr(expr, n):
    """Right-hand side from a string in ``x0..x{n-1}``, ``u`` and ``p0..p{n-1}``."""
    xs, u, ps = _symbols(n)
    e = _parse(expr, n)
    args = (*xs, u, *ps)
    fn = sympy.lambdify(args, e, "numpy")
    dfu = sympy.lambdify(args, sympy.diff(e, u), "numpy")
    dfp = [sympy.lambdify(args, sympy.diff(e, p), "numpy") for p in ps]

    def call(f):
        return lambda X, U, P: _broadcast(f(*X.T, U, *P.T), X.shape[0])

    def grad_p(X, U, P):
        return np.stack([_broadcast(d(*X.T, U, *P.T), X.shape[0]) for d in dfp], axis=1)

    return RHS(call(fn), call(dfu), grad_p, label=str(e))


def constant_rhs(value):
    value = float(value)
    return RHS(lambda X, U, P: np.full(X.shape[0], value),
               lambda X, U, P: np.zeros(X.shape[0]),
               lambda X, U, P: np.zeros_like(X),
               label=repr(value))


class ExactSolution:
    """A closed-form ``u(x)`` with symbolic gradient and Hessian."""

    def __init__(self, expr, n):
        xs, _, _ = _symbols(n)
        e = _parse(expr, n)
        if e.free_symbols - set(xs):
            raise ConfigError("a solution expression may only depend on x0..x{n-1}")
        self.n = n
        self.expr = e
        self._u = sympy.lambdify(xs, e, "numpy")
        self._du = [sympy.lambdify(xs, sympy.diff(e, a), "numpy") for a in xs]
        self._d2u = [[sympy.lambdify(xs, sympy.diff(e, a, b), "numpy") for b in xs] for a in xs]

    def value(self, X):
        return _broadcast(self._u(*X.T), X.shape[0])

    def gradient(self, X):
        return np.stack([_broadcast(d(*X.T), X.shape[0]) for d in self._du], axis=1)

    def hessian(self, X):
        N = X.shape[0]
        return np.stack([np.stack([_broadcast(d(*X.T), N) for d in row], axis=1)
                         for row in self._d2u], axis=1)


def manufactured_rhs(solution: "ExactSolution", signature):
    """``f(x) = sigma_{n-1}`` of the operator applied to the exact solution."""

    def func(X, U, P):
        ev = operator_eval(solution.hessian(X), solution.gradient(X), signature, derivs=False)
        return ev.F

    return RHS(func, lambda X, U, P: np.zeros(X.shape[0]), lambda X, U, P: np.zeros_like(X),
               label=f"manufactured[{solution.expr}]")


# --------------------------------------------------------------------------
# the pointwise operator
# --------------------------------------------------------------------------

class OperatorEval(NamedTuple):
    F: np.ndarray        # sigma_{n-1} per node
    kappa: np.ndarray    # eigenvalues (up to a positive factor) per node
    dA: Optional[np.ndarray]   # dF/dA_ab, (N, n, n)
    dP: Optional[np.ndarray]   # dF/dp_c, (N, n)


def _esp_columns(W, k):
    # sigma_0..sigma_k of each row of W
    N, n = W.shape
    c = np.zeros((N, k + 1))
    c[:, 0] = 1.0
    for j in range(n):
        c[:, 1:] = c[:, 1:] + W[:, j:j + 1] * c[:, :-1]
    return c


def cone_margins(kappa, k):
    """Row-wise ``min_m sigma_m / |kappa|^m`` for m = 1..k (0 for kappa = 0)."""
    norm = np.linalg.norm(kappa, axis=1)
    c = _esp_columns(kappa, k)
    safe = np.where(norm > 0, norm, 1.0)
    m = np.arange(1, k + 1)
    r = c[:, 1:] / safe[:, None] ** m
    out = np.min(r, axis=1)
    out[norm == 0] = 0.0
    return out


def operator_eval(A, P, signature, derivs=True):
    """sigma_{n-1} of the Hessian or curvature operator at each node.

    ``A`` holds the (symmetric) Hessians, ``P`` the gradients. In Minkowski
    mode ``kappa`` is returned as the eigenvalues of ``L^{-1} A L^{-T}``
    (same signs as the curvatures, which are these divided by
    ``sqrt(1 - |p|^2)``).
    """
    N, n, _ = A.shape
    k = n - 1
    if signature == "euclidean":
        w, V = kernels.batch_jacobi_eigh(A)
        F, g = kernels.batch_sigma_grad(w, k)
        if not derivs:
            return OperatorEval(F, w, None, None)
        dA = np.einsum("nap,np,nbp->nab", V, g, V)
        return OperatorEval(F, w, dA, np.zeros((N, n)))
    if signature != "minkowski":
        raise ConfigError(f"unknown signature {signature!r}")
    q = 1.0 - np.einsum("na,na->n", P, P)
    if np.any(1.0 - np.sqrt(np.maximum(1.0 - q, 0.0)) <= SPACELIKE_TOL):
        raise NotSpacelikeError("gradient reaches the light cone at some node")
    G = np.eye(n)[None] - np.einsum("na,nb->nab", P, P)
    L = np.linalg.cholesky(G)
    Li = np.linalg.inv(L)
    S = Li @ A @ np.swapaxes(Li, 1, 2)
    S = 0.5 * (S + np.swapaxes(S, 1, 2))
    w, V = kernels.batch_jacobi_eigh(S)
    s, g = kernels.batch_sigma_grad(w, k)
    cw = q ** (-0.5 * k)
    F = cw * s
    if not derivs:
        return OperatorEval(F, w, None, None)
    FS = np.einsum("nap,np,nbp->nab", V, g, V)
    LiT = np.swapaxes(Li, 1, 2)
    dA = cw[:, None, None] * (LiT @ FS @ Li)
    Psi = LiT @ FS @ np.swapaxes(L, 1, 2)
    APsi = A @ Psi
    left = np.einsum("na,nab->nb", P, APsi)
    right = np.einsum("nab,nb->na", APsi, P)
    quad = np.einsum("na,na->n", left, P)
    d = (left + right) / q[:, None] + 2.0 * P * (quad / q ** 2)[:, None]
    dP = cw[:, None] * d + (s * k * q ** (-0.5 * (k + 2)))[:, None] * P
    return OperatorEval(F, w, dA, dP)


# --------------------------------------------------------------------------
# grids
# --------------------------------------------------------------------------

@dataclass
class GridProblem:
    """Dirichlet problem on a box; see :func:`load_problem` for the JSON form."""

    n: int
    box: np.ndarray
    h: np.ndarray
    f_spec: RHS
    boundary: Callable
    signature: str = "euclidean"
    cone_k: int = None
    exact: Optional[ExactSolution] = None
    name: str = "problem"

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ConfigError("only n = 2 and n = 3 are supported")
        if self.signature not in SIGNATURES:
            raise ConfigError(f"signature must be one of {SIGNATURES}")
        self.box = np.asarray(self.box, dtype=float).reshape(self.n, 2)
        if np.any(self.box[:, 1] <= self.box[:, 0]):
            raise ConfigError("box needs lo < hi on every axis")
        self.h = _broadcast(self.h, self.n).copy()
        if np.any(self.h <= 0):
            raise ConfigError("mesh width must be positive")
        cells = (self.box[:, 1] - self.box[:, 0]) / self.h
        if np.any(np.abs(cells - np.round(cells)) > 1e-12 * np.maximum(1.0, cells)):
            raise ConfigError("mesh width does not divide the box extents")
        if np.any(np.round(cells) < 2):
            raise ConfigError("need at least one interior node per axis")
        if self.cone_k is None:
            self.cone_k = self.n - 1
        if self.cone_k != self.n - 1:
            raise ConfigError("cone_k must equal n - 1")

    @property
    def shape(self):
        return tuple(int(round(c)) + 1 for c in (self.box[:, 1] - self.box[:, 0]) / self.h)

    @property
    def interior_shape(self):
        return tuple(m - 2 for m in self.shape)

    def axes(self):
        return [lo + self.h[a] * np.arange(m) for a, (lo, m) in enumerate(zip(self.box[:, 0], self.shape))]

    def nodes(self):
        """All node coordinates, shape ``shape + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def interior_nodes(self):
        return self.nodes()[_interior(self.n)].reshape(-1, self.n)

    def boundary_mask(self):
        mask = np.ones(self.shape, dtype=bool)
        mask[_interior(self.n)] = False
        return mask


def _interior(n):
    return (slice(1, -1),) * n


def _shifted(U, off):
    sl = []
    for o, m in zip(off, U.shape):
        sl.append(slice(1 + o, m - 1 + o))
    return U[tuple(sl)]


@dataclass
class Stencil:
    """Discrete derivatives of a full grid at the interior nodes (flattened)."""

    U: np.ndarray
    P: np.ndarray
    A: np.ndarray


def discrete_derivatives(U, h):
    n = U.ndim
    e = np.eye(n, dtype=int)
    c = _shifted(U, (0,) * n).ravel()
    P = np.empty((c.size, n))
    A = np.empty((c.size, n, n))
    for a in range(n):
        up, dn = _shifted(U, e[a]).ravel(), _shifted(U, -e[a]).ravel()
        P[:, a] = (up - dn) / (2.0 * h[a])
        A[:, a, a] = (up - 2.0 * c + dn) / h[a] ** 2
        for b in range(a + 1, n):
            pp = _shifted(U, e[a] + e[b]).ravel()
            pm = _shifted(U, e[a] - e[b]).ravel()
            mp = _shifted(U, -e[a] + e[b]).ravel()
            mm = _shifted(U, -e[a] - e[b]).ravel()
            A[:, a, b] = A[:, b, a] = (pp - pm - mp + mm) / (4.0 * h[a] * h[b])
    return Stencil(c, P, A)


# --------------------------------------------------------------------------
# state, residual, Jacobian
# --------------------------------------------------------------------------

@dataclass
class SolverState:
    u: np.ndarray
    residual_norm: float = math.inf
    newton_iter: int = 0
    continuation_t: float = 1.0
    damping: float = 1.0
    cone_ok: bool = False
    min_margin: float = 0.0
    min_spacelike: Optional[float] = None
    f0: Optional[np.ndarray] = None
    log: list = field(default_factory=list)

    def interior(self):
        return self.u[_interior(self.u.ndim)]


def _target(problem, st, X, t, f0):
    f = problem.f_spec(X, st.U, st.P)
    if f0 is None or t == 1.0:
        return f
    return t * f + (1.0 - t) * f0


class Evaluation(NamedTuple):
    residual: np.ndarray
    margins: np.ndarray
    spacelike: Optional[np.ndarray]
    op: OperatorEval
    stencil: Stencil


def evaluate(u, problem: GridProblem, t=1.0, f0=None, derivs=False):
    st = discrete_derivatives(u, problem.h)
    spacelike = None
    if problem.signature == "minkowski":
        spacelike = 1.0 - np.linalg.norm(st.P, axis=1)
    op = operator_eval(st.A, st.P, problem.signature, derivs=derivs)
    X = problem.interior_nodes()
    R = op.F - _target(problem, st, X, t, f0)
    margins = cone_margins(op.kappa, problem.cone_k)
    return Evaluation(R, margins, spacelike, op, st)


def assemble_residual(state: SolverState, problem: GridProblem):
    """Residual ``sigma_{n-1}(.) - f_t`` on the interior grid."""
    ev = evaluate(state.u, problem, state.continuation_t, state.f0)
    return ev.residual.reshape(problem.interior_shape)


def _interior_index(problem):
    idx = -np.ones(problem.shape, dtype=np.int64)
    idx[_interior(problem.n)] = np.arange(int(np.prod(problem.interior_shape))).reshape(
        problem.interior_shape)
    return idx


def jacobian(state: SolverState, problem: GridProblem, ev: Evaluation = None):
    """Sparse Jacobian of the interior residual in the interior unknowns."""
    if ev is None:
        ev = evaluate(state.u, problem, state.continuation_t, state.f0, derivs=True)
    t = state.continuation_t if state.f0 is not None else 1.0
    n, h = problem.n, problem.h
    X = problem.interior_nodes()
    st = ev.stencil
    fu = t * problem.f_spec.du(X, st.U, st.P)
    fp = t * problem.f_spec.dp(X, st.U, st.P)
    FA, FP = ev.op.dA, ev.op.dP - fp
    N = X.shape[0]
    e = np.eye(n, dtype=int)
    coeff = {}

    def add(off, w):
        key = tuple(int(o) for o in off)
        coeff[key] = coeff.get(key, 0.0) + w

    center = -_broadcast(fu, N).copy()
    for a in range(n):
        center = center - 2.0 * FA[:, a, a] / h[a] ** 2
        add(e[a], FA[:, a, a] / h[a] ** 2 + FP[:, a] / (2.0 * h[a]))
        add(-e[a], FA[:, a, a] / h[a] ** 2 - FP[:, a] / (2.0 * h[a]))
        for b in range(a + 1, n):
            w = 2.0 * FA[:, a, b] / (4.0 * h[a] * h[b])
            add(e[a] + e[b], w)
            add(-e[a] - e[b], w)
            add(e[a] - e[b], -w)
            add(-e[a] + e[b], -w)
    add((0,) * n, center)
    idx = _interior_index(problem)
    rows, cols, vals = [], [], []
    ar = np.arange(N)
    for off, w in coeff.items():
        nb = _shifted(idx, off).ravel()
        keep = nb >= 0
        rows.append(ar[keep])
        cols.append(nb[keep])
        vals.append(np.asarray(w)[keep])
    return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(N, N))


@lru_cache(maxsize=8)
def nested_dissection(shape):
    """Geometric nested-dissection ordering of a box grid (flat C-order indices)."""
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    out = []

    def rec(block):
        if block.size <= 64:
            out.append(block.ravel())
            return
        ax = int(np.argmax(block.shape))
        m = block.shape[ax] // 2
        lo, sep, hi = ([slice(None)] * block.ndim for _ in range(3))
        lo[ax], sep[ax], hi[ax] = slice(0, m), slice(m, m + 1), slice(m + 1, None)
        rec(block[tuple(lo)])
        rec(block[tuple(hi)])
        out.append(block[tuple(sep)].ravel())

    rec(idx)
    return np.concatenate(out)


def sparse_solve(J, b, shape):
    """Direct LU solve with a nested-dissection ordering (partial pivoting kept)."""
    p = nested_dissection(tuple(shape))
    Jp = J[p][:, p].tocsc()
    lu = spla.splu(Jp, permc_spec="NATURAL", options={"SymmetricMode": True})
    x = np.empty_like(b)
    x[p] = lu.solve(b[p])
    return x


def _state_from(u, problem, t, f0, iters=0, damping=1.0, log=None):
    ev = evaluate(u, problem, t, f0)
    return _state_with(u, ev, t, f0, iters, damping, log), ev


def _state_with(u, ev, t, f0, iters, damping, log):
    ok = bool(np.all(ev.margins > CONE_MARGIN))
    sl = None
    if ev.spacelike is not None:
        sl = float(np.min(ev.spacelike))
        ok = ok and sl > SPACELIKE_TOL
    return SolverState(u=u, residual_norm=float(np.max(np.abs(ev.residual))), newton_iter=iters,
                       continuation_t=t, damping=damping, cone_ok=ok,
                       min_margin=float(np.min(ev.margins)), min_spacelike=sl, f0=f0,
                       log=list(log or []))


def _diag(state, **more):
    d = {"t": state.continuation_t, "newton_iter": state.newton_iter,
         "residual_norm": state.residual_norm, "min_margin": state.min_margin}
    if state.min_spacelike is not None:
        d["min_spacelike"] = state.min_spacelike
    d.update(more)
    return d


def newton_step(state: SolverState, problem: GridProblem) -> SolverState:
    """One damped Newton step.

    The step is halved (at most 20 times) until the new state is admissible
    and has a strictly smaller residual max norm (or one below 1e-12).

    Raises
    ------
    SingularJacobianError
        If the linear solve fails.
    LineSearchError
        If no damping factor is accepted.
    """
    if not state.cone_ok:
        raise SolverError("newton_step needs an admissible state", _diag(state))
    ev = evaluate(state.u, problem, state.continuation_t, state.f0, derivs=True)
    J = jacobian(state, problem, ev)
    try:
        delta = sparse_solve(J, -ev.residual, problem.interior_shape)
    except RuntimeError as exc:
        raise SingularJacobianError(f"Jacobian solve failed: {exc}", _diag(state)) from exc
    if not np.all(np.isfinite(delta)):
        raise SingularJacobianError("Jacobian solve produced non-finite values", _diag(state))
    inner = _interior(problem.n)
    base = state.u[inner]
    shape = problem.interior_shape
    lam = 1.0
    tried = []
    for _ in range(MAX_HALVINGS + 1):
        u = state.u.copy()
        u[inner] = base + lam * delta.reshape(shape)
        try:
            new, _ = _state_from(u, problem, state.continuation_t, state.f0,
                                 state.newton_iter + 1, lam, state.log)
        except NotSpacelikeError:
            tried.append((lam, None))
            lam *= 0.5
            continue
        tried.append((lam, new.residual_norm))
        if new.cone_ok and (new.residual_norm < state.residual_norm
                            or new.residual_norm <= RESIDUAL_FLOOR):
            return new
        lam *= 0.5
    raise LineSearchError("no damping factor kept the state admissible and reduced the residual",
                          _diag(state, tried=tried[:5]))


# --------------------------------------------------------------------------
# seed and continuation
# --------------------------------------------------------------------------

def _quadratic_features(X):
    n = X.shape[1]
    cols = [np.ones(X.shape[0])] + [X[:, a] for a in range(n)]
    cols += [X[:, a] * X[:, b] for a in range(n) for b in range(a, n)]
    return np.stack(cols, axis=1)


def _admissible(u, problem):
    try:
        st, ev = _state_from(u, problem, 1.0, None)
    except NotSpacelikeError:
        return False, None
    return st.cone_ok, ev


def seed_state(problem: GridProblem, max_doublings=40):
    """Admissible starting grid with exact boundary values.

    Tries the boundary function itself first; otherwise a least-squares
    quadratic fit to the boundary data plus ``alpha |x - c|^2 / 2`` with
    alpha doubled until every interior node is admissible.
    """
    nodes = problem.nodes()
    flat = nodes.reshape(-1, problem.n)
    bvals = _broadcast(problem.boundary(flat), flat.shape[0]).reshape(problem.shape)
    mask = problem.boundary_mask()
    u = bvals.copy()
    ok, ev = _admissible(u, problem)
    if ok:
        return u, ev, "boundary-extension"
    Xb = nodes[mask]
    coef, *_ = np.linalg.lstsq(_quadratic_features(Xb), bvals[mask], rcond=None)
    quad = (_quadratic_features(flat) @ coef).reshape(problem.shape)
    ctr = problem.box.mean(axis=1)
    r2 = np.sum((nodes - ctr) ** 2, axis=-1)
    alpha = 1.0
    for _ in range(max_doublings):
        u = quad + 0.5 * alpha * r2
        u[mask] = bvals[mask]
        ok, ev = _admissible(u, problem)
        if ok:
            return u, ev, f"quadratic-fit alpha={alpha:g}"
        alpha *= 2.0
    raise SeedError("no admissible seed: boundary data incompatible with the cone condition",
                    {"max_alpha": alpha})


def _check_positive(problem, u, ev):
    X = problem.interior_nodes()
    f = problem.f_spec(X, ev.stencil.U, ev.stencil.P)
    if not np.all(np.isfinite(f)) or np.min(f) <= 0:
        j = int(np.argmin(f))
        raise SolverError("right-hand side must be positive", {
            "node": X[j].tolist(), "value": float(f[j])})


def newton_solve(state, problem, tol=TOL_NEWTON, max_iter=50):
    """Newton iterations at fixed ``t`` until ``residual_norm < tol``."""
    log = state.log
    start = state.newton_iter
    while state.residual_norm >= tol:
        if state.newton_iter - start >= max_iter:
            raise SolverError(f"no convergence in {max_iter} Newton iterations", _diag(state))
        state = newton_step(state, problem)
        log.append({"t": state.continuation_t, "iter": state.newton_iter,
                    "residual": state.residual_norm, "damping": state.damping,
                    "min_margin": state.min_margin, "min_spacelike": state.min_spacelike})
        state.log = log
    return state


def solve_continuation(problem: GridProblem, t_steps=4, tol=TOL_NEWTON, max_iter=50, u0=None):
    """Follow ``f_t = t f + (1 - t) f_0`` from t = 0 to t = 1.

    ``f_0`` is the discrete operator applied to the seed, so the seed solves
    the t = 0 problem exactly. ``u0`` overrides the seed (it must be
    admissible and carry the boundary data).

    Raises
    ------
    SolverError
        Any Newton failure, with ``diagnostics["t"]`` naming the failing t.
    """
    if t_steps < 1:
        raise ConfigError("t_steps must be at least 1")
    if u0 is None:
        u, ev, how = seed_state(problem)
    else:
        u = np.array(u0, dtype=float)
        ok, ev = _admissible(u, problem)
        if not ok:
            raise SeedError("supplied start is not admissible")
        how = "user"
    _check_positive(problem, u, ev)
    f0 = ev.op.F.copy()
    log = [{"seed": how}]
    state = None
    for j in range(1, t_steps + 1):
        t = j / t_steps
        if state is None:
            state, _ = _state_from(u, problem, t, f0, 0, 1.0, log)
        else:
            state, _ = _state_from(state.u, problem, t, f0, state.newton_iter, 1.0, state.log)
        state.log.append({"t": t, "iter": state.newton_iter, "residual": state.residual_norm,
                          "damping": None, "min_margin": state.min_margin,
                          "min_spacelike": state.min_spacelike})
        try:
            state = newton_solve(state, problem, tol, max_iter)
        except SolverError as exc:
            exc.diagnostics.setdefault("t", t)
            raise
    return state


def newton_from(u, problem, tol=TOL_NEWTON, max_iter=50):
    """Plain Newton at t = 1 from a given admissible grid."""
    state, _ = _state_from(np.array(u, dtype=float), problem, 1.0, None)
    return newton_solve(state, problem, tol, max_iter)


def jacobian_fd_check(state, problem, direction=None, eps=1e-6, rng=None):
    """Relative gap between ``J d`` and a centered finite difference of the residual."""
    N = int(np.prod(problem.interior_shape))
    if direction is None:
        rng = np.random.default_rng(0) if rng is None else rng
        direction = rng.standard_normal(N)
    d = np.asarray(direction, dtype=float).reshape(-1)
    J = jacobian(state, problem)
    inner = _interior(problem.n)

    def res(s):
        u = state.u.copy()
        u[inner] = u[inner] + s * d.reshape(problem.interior_shape)
        return evaluate(u, problem, state.continuation_t, state.f0).residual

    fd = (res(eps) - res(-eps)) / (2 * eps)
    an = J @ d
    return float(np.max(np.abs(fd - an)) / max(np.max(np.abs(an)), 1e-300))


def solution_error(state, problem):
    """Max-norm error against ``problem.exact`` at the interior nodes."""
    if problem.exact is None:
        raise ConfigError("problem has no exact solution")
    X = problem.interior_nodes()
    return float(np.max(np.abs(state.interior().ravel() - problem.exact.value(X))))


# --------------------------------------------------------------------------
# problem files and output
# --------------------------------------------------------------------------

BOUNDARY_PRESETS = {
    "paraboloid": lambda n: "(" + " + ".join(f"x{a}**2" for a in range(n)) + ")/2",
    "hyperboloid": lambda n: "sqrt(1 + " + " + ".join(f"x{a}**2" for a in range(n)) + ")",
}


def _f_from_spec(spec, n, signature, exact):
    if isinstance(spec, (int, float)):
        return constant_rhs(spec)
    if "expr" in spec:
        return rhs_from_expr(spec["expr"], n)
    preset = spec.get("preset")
    if preset == "constant":
        return constant_rhs(spec.get("value", n))
    if preset == "sine":
        amp, axis = float(spec.get("amplitude", 0.5)), int(spec.get("axis", 0))
        return rhs_from_expr(f"{n}*(1 + {amp!r}*sin(x{axis}))", n)
    if preset == "manufactured":
        if exact is None:
            raise ConfigError("manufactured f needs a 'solution' expression")
        return manufactured_rhs(exact, signature)
    raise ConfigError(f"unknown f specification {spec!r}")


def problem_from_dict(doc) -> GridProblem:
    """Build a :class:`GridProblem` from its JSON document.

    Keys: ``n``, ``box`` (list of [lo, hi]), ``h``, ``signature``,
    ``solution`` (optional expression), ``boundary`` (``{"expr": ...}``,
    ``{"preset": "paraboloid" | "hyperboloid" | "solution"}``), and ``f``
    (a number, ``{"expr": ...}`` in x0.., u, p0.., or a preset ``constant``,
    ``sine`` or ``manufactured``).
    """
    try:
        n = int(doc["n"])
        box = doc.get("box", [[0.0, 1.0]] * n)
        h = doc["h"]
        signature = doc.get("signature", "euclidean")
        exact = ExactSolution(doc["solution"], n) if doc.get("solution") else None
        bspec = doc.get("boundary", {"preset": "solution"} if exact else None)
        if bspec is None:
            raise ConfigError("missing boundary specification")
        if isinstance(bspec, str):
            bspec = {"expr": bspec}
        if bspec.get("preset") == "solution":
            if exact is None:
                raise ConfigError("boundary preset 'solution' needs a solution expression")
            bsol = exact
        elif "expr" in bspec:
            bsol = ExactSolution(bspec["expr"], n)
        elif bspec.get("preset") in BOUNDARY_PRESETS:
            bsol = ExactSolution(BOUNDARY_PRESETS[bspec["preset"]](n), n)
        else:
            raise ConfigError(f"unknown boundary specification {bspec!r}")
        f = _f_from_spec(doc.get("f", {"preset": "constant"}), n, signature, exact)
        return GridProblem(n=n, box=box, h=h, f_spec=f, boundary=bsol.value,
                           signature=signature, exact=exact, name=doc.get("name", "problem"))
    except KeyError as exc:
        raise ConfigError(f"missing key {exc}") from exc


def load_problem(path) -> GridProblem:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return problem_from_dict(doc)


def write_grid(path, u, problem):
    """Text header (dimensions, box, h) then the values, one last-axis row per line."""
    with open(path, "w") as fh:
        fh.write("# sigmahess grid 1\n")
        fh.write("shape " + " ".join(str(m) for m in u.shape) + "\n")
        fh.write("box " + " ".join(f"{v:.17g}" for v in problem.box.ravel()) + "\n")
        fh.write("h " + " ".join(f"{v:.17g}" for v in problem.h) + "\n")
        for row in u.reshape(-1, u.shape[-1]):
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_grid(path):
    """Inverse of :func:`write_grid`; returns ``(u, box, h)``."""
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    head = {ln.split()[0]: ln.split()[1:] for ln in lines[:3]}
    shape = tuple(int(v) for v in head["shape"])
    box = np.array(head["box"], dtype=float).reshape(-1, 2)
    h = np.array(head["h"], dtype=float)
    vals = np.array(" ".join(lines[3:]).split(), dtype=float)
    return vals.reshape(shape), box, h


def convergence_log(state, problem):
    return {
        "problem": problem.name,
        "signature": problem.signature,
        "n": problem.n,
        "shape": list(problem.shape),
        "h": problem.h.tolist(),
        "residual_norm": state.residual_norm,
        "newton_iter": state.newton_iter,
        "cone_ok": state.cone_ok,
        "min_margin": state.min_margin,
        "min_spacelike": state.min_spacelike,
        "steps": state.log,
    }


# --------------------------------------------------------------------------
# radial spheres
# --------------------------------------------------------------------------

class RadialRHS(NamedTuple):
    func: Callable
    n: int
    label: str = "f"

    def __call__(self, rho):
        return self.func(rho)


def radial_from_expr(expr, n):
    rho = sympy.Symbol("rho", positive=True)
    try:
        e = sympy.sympify(expr, locals={"rho": rho, "n": sympy.Integer(n), "pi": sympy.pi})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ConfigError(f"cannot parse {expr!r}: {exc}") from exc
    if e.free_symbols - {rho}:
        raise ConfigError(f"radial f may only depend on rho, got {e.free_symbols}")
    fn = sympy.lambdify(rho, e, "math")
    return RadialRHS(lambda r: float(fn(r)), n, str(e))


class BarrierReport(NamedTuple):
    cond1: bool
    cond2: bool
    lower_gap: float
    upper_gap: float
    max_slope: float


def sphere_barrier_check(f: RadialRHS, r1, r2, k, n=None, points=1000, tol=1e-8):
    """Barrier conditions for round spheres between radii ``r1 < 1 < r2``.

    ``cond1``: ``f(r1) >= C(n,k) / r1^k`` and ``f(r2) <= C(n,k) / r2^k``.
    ``cond2``: ``d/drho (rho^k f) <= tol`` on ``points`` radii, by centered
    differences.
    """
    n = f.n if n is None else n
    if not 0 < r1 < 1 < r2:
        raise ConfigError("need 0 < r1 < 1 < r2")
    c = math.comb(n, k)
    lower = f(r1) - c / r1 ** k
    upper = c / r2 ** k - f(r2)
    rel = 1e-12
    cond1 = lower >= -rel * c / r1 ** k and upper >= -rel * c / r2 ** k
    slope = -math.inf
    for rho in np.linspace(r1, r2, points):
        d = 1e-5 * rho
        gp = (rho + d) ** k * f(rho + d)
        gm = (rho - d) ** k * f(rho - d)
        slope = max(slope, (gp - gm) / (2 * d))
    return BarrierReport(bool(cond1), bool(slope <= tol), float(lower), float(upper), float(slope))


class SphereSolution(NamedTuple):
    r: float
    degenerate_plateau: bool
    residual: float


def sphere_solve(f: RadialRHS, r1, r2, k, n=None, tol=1e-12):
    """Radius ``r`` with ``C(n,k) r^{-k} = f(r)`` by bisection on ``r^k f(r) - C(n,k)``.

    Raises
    ------
    NoRootError
        If ``r^k f - C(n,k)`` keeps one sign on ``[r1, r2]``.
    """
    n = f.n if n is None else n
    c = math.comb(n, k)

    def g(r):
        return r ** k * f(r) - c

    g1, g2 = g(r1), g(r2)
    if abs(g1) < tol and abs(g2) < tol:
        return SphereSolution(float(r1), True, float(g1))
    if g1 * g2 > 0:
        raise NoRootError(f"no sign change on [{r1}, {r2}]: g = {g1:.3e}, {g2:.3e}")
    lo, hi = (r1, r2) if g1 > 0 else (r2, r1)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    r = min((lo, hi), key=lambda x: abs(g(x)))
    res = g(r)
    if abs(res) >= tol:
        raise NoRootError(f"bisection stalled at r = {r!r} with |g| = {abs(res):.3e}")
    return SphereSolution(float(r), False, float(res))
