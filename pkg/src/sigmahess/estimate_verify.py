"""Numerical verification of the inequalities behind the curvature estimate.

Each ``check_*`` function evaluates both sides of one inequality for a single
trial and returns a :class:`LemmaTrial`. Lemmas are only claimed under their
hypotheses; trials outside them are flagged with ``hypotheses_met = False``.
"Sufficiently large" parameters are never assumed, the sweep helpers report
empirical thresholds instead.

Exponential terms are evaluated after factoring out ``exp(shift)`` (the
largest curvature, or kappa_l for the divided-difference lemma), so trials
with curvatures in the thousands stay finite. ``log_scale`` records the
factor that was removed.
"""
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .cone import ConeSpec, in_gamma_k
from .errors import ExpRangeError, SamplerExhausted
from .keyineq import min_eig_rank_one
from .rng import stream_id, trial_rng
from .symfunc import SymTable, as_array, sigma, sigma_grad, sigma_hess

TOL = 1e-9
EXP_CLAMP = 500.0
DD_SERIES = 1e-6
REGIMES = ("small_i", "positive_i", "negative_i")


@dataclass
class LemmaTrial:
    kappa: np.ndarray
    aux: dict
    derivative_vector: np.ndarray
    lhs: float
    rhs: float
    hypotheses_met: bool
    satisfied: bool
    scale: float = 1.0
    tol: float = TOL
    log_scale: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def margin(self):
        return self.lhs - self.rhs


def _trial(kappa, aux, v, lhs, rhs, met, scale, log_scale=0.0, tol=TOL, **extra):
    scale = max(float(scale), 1e-300)
    ok = bool(lhs >= rhs - tol * scale)
    return LemmaTrial(
        kappa=np.array(kappa, dtype=float), aux=dict(aux),
        derivative_vector=np.array(v, dtype=float), lhs=float(lhs), rhs=float(rhs),
        hypotheses_met=bool(met), satisfied=ok, scale=scale, tol=tol,
        log_scale=float(log_scale), extra=extra,
    )


# --------------------------------------------------------------------------
# divided differences of exp
# --------------------------------------------------------------------------

def _phi(d):
    # (1 - exp(-d)) / d for d >= 0, confluent value 1
    if d < DD_SERIES:
        return 1.0 - d / 2.0 + d * d / 6.0
    return -math.expm1(-d) / d


def divided_difference(a, b, shift=0.0):
    """``(e^a - e^b) / (a - b) * e^(-shift)``, with value ``e^(a - shift)`` at a == b."""
    m = max(a, b)
    return math.exp(m - shift) * _phi(abs(a - b))


# --------------------------------------------------------------------------
# Guan-type inequalities
# --------------------------------------------------------------------------

def _alpha(k, l):
    return 1.0 / (k - l) if k != l else math.nan


def _guan_parts(x, k, l, v):
    sk, sl = sigma(k, x), sigma(l, x)
    gk, gl = sigma_grad(k, x), sigma_grad(l, x)
    qk = float(v @ sigma_hess(k, x) @ v)
    ql = float(v @ sigma_hess(l, x) @ v)
    return sk, sl, float(gk @ v), float(gl @ v), qk, ql


def check_guan_17(kappa, k, l, v):
    """``-Q_k/s_k + Q_l/s_l >= (a - b)((alpha - 1) a - (alpha + 1) b)``.

    Here ``Q_m = sigma_m^{pp,qq} v_p v_q``, ``a = (sigma_k)_h / sigma_k``,
    ``b = (sigma_l)_h / sigma_l`` and ``alpha = 1 / (k - l)``. Requires
    ``kappa`` in Gamma_k.
    """
    x = as_array(kappa)
    v = np.asarray(v, dtype=float)
    met = k > l >= 1 and in_gamma_k(x, k)
    sk, sl, dk, dl, qk, ql = _guan_parts(x, k, l, v)
    alpha = _alpha(k, l)
    if not met or sk == 0.0 or sl == 0.0:
        return _trial(x, {"k": k, "l": l, "alpha": alpha}, v, math.nan, math.nan, False, 1.0)
    a, b = dk / sk, dl / sl
    lhs = -qk / sk + ql / sl
    rhs = (a - b) * ((alpha - 1) * a - (alpha + 1) * b)
    scale = abs(qk / sk) + abs(ql / sl) + (abs(a) + abs(b)) ** 2 * (alpha + 1)
    return _trial(x, {"k": k, "l": l, "alpha": alpha}, v, lhs, rhs, met, scale)


def _guan18_sides(sk, sl, dk, dl, qk, ql, alpha, delta):
    lhs = -qk + (1 - alpha + alpha / delta) * dk * dk / sk
    rhs = sk * (alpha + 1 - delta * alpha) * (dl / sl) ** 2 - sk / sl * ql
    scale = abs(qk) + abs(1 - alpha + alpha / delta) * dk * dk / abs(sk) \
        + abs(sk) * (alpha + 1) * (dl / sl) ** 2 + abs(sk / sl * ql)
    return lhs, rhs, scale


def check_guan_18(kappa, k, l, v, delta, delta_grid_depth=40):
    """The ``delta``-weighted variant of :func:`check_guan_17`.

    ``extra["delta_star"]`` is the largest delta in {1/2, 1/4, ...} for which
    the trial holds (``None`` if none of the first ``delta_grid_depth`` do).
    """
    x = as_array(kappa)
    v = np.asarray(v, dtype=float)
    met = k > l >= 1 and 0 < delta < 1 and in_gamma_k(x, k)
    parts = _guan_parts(x, k, l, v)
    alpha = _alpha(k, l)
    if not met or parts[0] == 0.0 or parts[1] == 0.0:
        return _trial(x, {"k": k, "l": l, "alpha": alpha, "delta": delta}, v, math.nan, math.nan,
                      False, 1.0, delta_star=None)
    lhs, rhs, scale = _guan18_sides(*parts, alpha, delta)
    delta_star = None
    for j in range(1, delta_grid_depth + 1):
        d = 2.0 ** -j
        lo, hi, sc = _guan18_sides(*parts, alpha, d)
        if lo >= hi - TOL * max(sc, 1e-300):
            delta_star = d
            break
    return _trial(x, {"k": k, "l": l, "alpha": alpha, "delta": delta}, v, lhs, rhs, met, scale,
                  delta_star=delta_star)


# --------------------------------------------------------------------------
# divided-difference lemma
# --------------------------------------------------------------------------

def check_leR(kappa, k, i, l, eps_T, delta):
    """``(1+eps_T) e^{k_l} s_{k-2}(|il) + (1+eps_T) DD(k_l, k_i) s_{k-1}(|l)
    >= e^{k_l} / kappa_1 * s_{k-1}(|i)``, evaluated divided by
    ``exp(max(kappa_l, kappa_i))``.
    """
    x = as_array(kappa)
    n = x.size
    sorted_ok = bool(np.all(np.diff(x) <= 0))
    met = (0 < eps_T < 0.5 and 0 < delta < min(eps_T / 2, 1 / 200) and sorted_ok
           and x[0] > 0 and i != l and abs(x[i]) < delta * x[0])
    t = SymTable(x)
    s_il = t(k - 2, (i, l))
    s_l = t(k - 1, (l,))
    s_i = t(k - 1, (i,))
    shift = max(x[l], x[i])
    el = math.exp(x[l] - shift)
    dd = divided_difference(x[l], x[i], shift=shift)
    terms = [(1 + eps_T) * el * s_il, (1 + eps_T) * dd * s_l]
    lhs = math.fsum(terms)
    rhs = el * s_i / x[0]
    scale = sum(map(abs, terms)) + abs(rhs)
    return _trial(x, {"k": k, "i": i, "l": l, "eps_T": eps_T, "delta": delta, "n": n},
                  np.zeros(0), lhs, rhs, met, scale, log_scale=shift, kappa_1=float(x[0]))


# --------------------------------------------------------------------------
# the five terms A_i .. E_i
# --------------------------------------------------------------------------

class PProfile(NamedTuple):
    kappa: np.ndarray
    P: float
    logP: float


def p_profile(kappa):
    """``P = sum_l exp(kappa_l)``; rejects entries beyond the exp clamp."""
    x = as_array(kappa)
    if np.max(np.abs(x)) > EXP_CLAMP:
        raise ExpRangeError(f"|kappa| exceeds {EXP_CLAMP}")
    return PProfile(x.copy(), float(np.sum(np.exp(x))), float(logsumexp(x)))


@dataclass
class ABCDE:
    A: float
    B: float
    C: float
    D: float
    E: float
    log_scale: float = 0.0

    def total(self):
        return math.fsum([self.A, self.B, self.C, self.D, -self.E])

    def magnitude(self):
        return abs(self.A) + abs(self.B) + abs(self.C) + abs(self.D) + abs(self.E)

    def unscaled(self):
        """Terms multiplied back by ``exp(log_scale)``."""
        if abs(self.log_scale) > EXP_CLAMP:
            raise ExpRangeError(f"scale exp({self.log_scale}) is outside the exp clamp")
        f = math.exp(self.log_scale)
        return ABCDE(self.A * f, self.B * f, self.C * f, self.D * f, self.E * f, 0.0)


def _log_P(x):
    logP = float(logsumexp(x))
    if not logP > 0:
        raise ValueError("log P must be positive (need some kappa_l > 0)")
    return logP


def compute_ABCDE(kappa, i, hvec, K, shift=None):
    """The five quantities of the curvature estimate, divided by ``exp(shift)``.

    ``shift`` defaults to ``max(kappa)``. ``hvec`` stands for
    ``(h_11i, ..., h_nni)``; all derivatives are of sigma_{n-1}.
    """
    x = as_array(kappa)
    h = np.asarray(hvec, dtype=float)
    n = x.size
    s = float(np.max(x)) if shift is None else float(shift)
    t = SymTable(x)
    g = np.array([t(n - 2, (p,)) for p in range(n)])
    ex = np.exp(x - s)
    lin = float(g @ h)
    cross = math.fsum(t(n - 3, (p, q)) * h[p] * h[q]
                      for p in range(n) for q in range(n) if p != q)
    A = ex[i] * (K * lin * lin - cross)
    B = 2.0 * math.fsum(t(n - 3, (i, l)) * ex[l] * h[l] ** 2 for l in range(n) if l != i)
    C = g[i] * math.fsum(ex * h * h)
    D = 2.0 * math.fsum(g[l] * divided_difference(x[l], x[i], shift=s) * h[l] ** 2
                        for l in range(n) if l != i)
    logP = _log_P(x)
    Pt = float(np.sum(ex))
    Pi = math.fsum(ex * h)
    E = (1.0 + logP) / (Pt * logP) * g[i] * Pi * Pi
    return ABCDE(float(A), float(B), float(C), float(D), float(E), s)


def combination_parts(kappa, i, K, shift=None):
    """Matrix form of ``A + B + C + D - E`` as a quadratic form in hvec.

    Returns ``(c, g, M0)`` with the form equal to ``c g g^T + M0`` (the K term
    split off so the minimum eigenvalue can be computed stably).
    """
    x = as_array(kappa)
    n = x.size
    s = float(np.max(x)) if shift is None else float(shift)
    g = sigma_grad(n - 1, x)
    S = sigma_hess(n - 1, x)
    ex = np.exp(x - s)
    t = SymTable(x)
    M0 = -ex[i] * S
    diag = g[i] * ex.copy()
    for l in range(n):
        if l != i:
            diag[l] += 2.0 * t(n - 3, (i, l)) * ex[l]
            diag[l] += 2.0 * g[l] * divided_difference(x[l], x[i], shift=s)
    M0 += np.diag(diag)
    logP = _log_P(x)
    Pt = float(np.sum(ex))
    M0 -= (1.0 + logP) / (Pt * logP) * g[i] * np.outer(ex, ex)
    return float(ex[i] * K), g, 0.5 * (M0 + M0.T)


def combination_min_eig(kappa, i, K):
    """Smallest eigenvalue of the combination form and a tolerance scale."""
    c, g, M0 = combination_parts(kappa, i, K)
    scale = max(float(np.max(np.abs(M0))), 1e-300)
    return min_eig_rank_one(M0, c, g), scale


def adversarial_direction(kappa, i, K):
    """Unit hvec along the most negative direction of the combination form."""
    c, g, M0 = combination_parts(kappa, i, K)
    M = M0 + c * np.outer(g, g)
    w, V = np.linalg.eigh(M)
    return V[:, 0]


def _signed_logsum(terms):
    # terms: (coef, log_weight); returns (sign, log|sum|) of sum coef * exp(log_weight)
    terms = [(c, w) for c, w in terms if c != 0.0]
    if not terms:
        return 0.0, -math.inf
    top = max(w for _, w in terms)
    tot = math.fsum(c * math.exp(w - top) for c, w in terms)
    if tot == 0.0:
        return 0.0, -math.inf
    return math.copysign(1.0, tot), top + math.log(abs(tot))


class Certificate(NamedTuple):
    min_eig: float
    psd: bool
    log_diag: np.ndarray


def combination_certificate(kappa, i, K, tol=TOL):
    """PSD test of the combination form valid for any curvature range.

    Entries are assembled as signed log-magnitudes, then the matrix is
    equilibrated by ``diag(|Q_pp|^{-1/2})`` (a congruence, so the inertia is
    unchanged) before taking the smallest eigenvalue. A nonpositive diagonal
    entry shows up as an eigenvalue <= -1.
    """
    x = as_array(kappa)
    n = x.size
    t = SymTable(x)
    g = np.array([t(n - 2, (p,)) for p in range(n)])
    logP = _log_P(x)
    ce = -(1.0 + logP) / logP * g[i]
    sign = np.zeros((n, n))
    logm = np.full((n, n), -math.inf)
    for p in range(n):
        for q in range(p, n):
            if p == q:
                terms = [(K * g[p] ** 2, x[i]), (g[i], x[p]), (ce, 2 * x[p] - logP)]
                if p != i:
                    terms.append((2.0 * t(n - 3, (i, p)), x[p]))
                    terms.append((2.0 * g[p] * _phi(abs(x[p] - x[i])), max(x[p], x[i])))
            else:
                terms = [(K * g[p] * g[q] - t(n - 3, (p, q)), x[i]), (ce, x[p] + x[q] - logP)]
            sg, lm = _signed_logsum(terms)
            sign[p, q] = sign[q, p] = sg
            logm[p, q] = logm[q, p] = lm
    d = np.diag(logm).copy()
    if np.any(np.isinf(d)):
        # a zero diagonal entry: equilibrate with weight 1 there
        d[np.isinf(d)] = 0.0
    M = sign * np.exp(np.minimum(logm - 0.5 * (d[:, None] + d[None, :]), 700.0))
    lam = float(np.linalg.eigvalsh(M)[0])
    return Certificate(lam, bool(lam >= -tol), d)


def regime_holds(kappa, i, regime, delta):
    x = as_array(kappa)
    if regime == "small_i":
        return abs(x[i]) < delta * x[0]
    if regime == "positive_i":
        return x[i] >= delta * x[0]
    if regime == "negative_i":
        return -x[i] >= delta * x[0]
    raise ValueError(f"unknown regime {regime!r}")


def check_lemma_combination(kappa, i, hvec, K, regime, delta, certify=False):
    """Sign of ``A_i + B_i + C_i + D_i - E_i`` for one trial.

    With ``certify`` the trial also carries the form-level certificate
    (``extra["form_min_eig"]``, ``extra["form_psd"]``), which covers every hvec
    at once.
    """
    x = as_array(kappa)
    n = x.size
    met = (n >= 3 and bool(np.all(np.diff(x) <= 0)) and in_gamma_k(x, n - 1)
           and regime_holds(x, i, regime, delta))
    terms = compute_ABCDE(x, i, hvec, K)
    extra = {"terms": {"A": terms.A, "B": terms.B, "C": terms.C, "D": terms.D, "E": terms.E}}
    if certify:
        cert = combination_certificate(x, i, K)
        extra["form_min_eig"] = cert.min_eig
        extra["form_psd"] = cert.psd
    return _trial(x, {"i": i, "K": K, "regime": regime, "delta": delta}, hvec,
                  terms.total(), 0.0, met, terms.magnitude(), log_scale=terms.log_scale, **extra)


# --------------------------------------------------------------------------
# samplers and sweeps
# --------------------------------------------------------------------------

def _sorted_desc(x):
    return np.sort(x)[::-1]


def sample_guan(n, k, rng, max_tries=10_000):
    """kappa in Gamma_k (sorted) and a standard normal direction."""
    for _ in range(max_tries):
        x = rng.standard_normal(n) + 1.0
        if in_gamma_k(x, k):
            return _sorted_desc(x), rng.standard_normal(n)
    raise SamplerExhausted(f"no Gamma_{k} sample in {max_tries} draws")


def sweep_guan_17(n, k, l, trials, seed):
    sid = stream_id(f"guan17:{n}:{k}:{l}")
    out = []
    for j in range(trials):
        x, v = sample_guan(n, k, trial_rng(seed, j, sid))
        out.append(check_guan_17(x, k, l, v))
    return out


def sweep_guan_18(n, k, l, trials, seed, delta):
    sid = stream_id(f"guan18:{n}:{k}:{l}")
    out = []
    for j in range(trials):
        x, v = sample_guan(n, k, trial_rng(seed, j, sid))
        out.append(check_guan_18(x, k, l, v, delta))
    return out


def sample_small_index(n, delta, rng, max_tries=10_000):
    """Normalized kappa in Gamma_{n-1} (kappa_1 = 1) with one |kappa_i| < delta.

    Returns ``(kappa, i)``.
    """
    for _ in range(max_tries):
        y = rng.standard_normal(n - 1) + 1.0
        top = float(np.max(y))
        if top <= 0:
            continue
        z = delta * top * rng.uniform(-0.99, 0.99)
        x = np.concatenate([y, [z]])
        if not in_gamma_k(x, n - 1):
            continue
        order = np.argsort(-x, kind="stable")
        x = x[order] / top
        i = int(np.flatnonzero(order == n - 1)[0])
        return x, i
    raise SamplerExhausted("no small-index Gamma_{n-1} sample")


def sweep_leR(n, trials, seed, eps_T, delta, kappa1_min, k=None):
    """Sample shapes with a small index, scale them so kappa_1 lies in
    ``[kappa1_min, 10 kappa1_min]`` and test every ``l != i``."""
    k = n - 1 if k is None else k
    sid = stream_id(f"leR:{n}:{k}")
    out = []
    for j in range(trials):
        rng = trial_rng(seed, j, sid)
        x, i = sample_small_index(n, delta, rng)
        s = kappa1_min * 10.0 ** rng.uniform(0.0, 1.0)
        y = x * s
        for l in range(n):
            if l != i:
                out.append(check_leR(y, k, i, l, eps_T, delta))
    return out


def leR_threshold(shape, i, eps_T, delta, k=None, s_min=1.0, s_max=1e6, points=121):
    """Smallest scale kappa_1 on a log grid above which the lemma holds for
    every ``l`` (``None`` if it fails at the top of the grid)."""
    x = as_array(shape)
    n = x.size
    k = n - 1 if k is None else k
    grid = np.geomspace(s_min, s_max, points)
    ok = []
    for s in grid:
        y = x * (s / x[0])
        ok.append(all(check_leR(y, k, i, l, eps_T, delta).satisfied for l in range(n) if l != i))
    if not ok[-1]:
        return None
    j = len(ok) - 1
    while j > 0 and ok[j - 1]:
        j -= 1
    return float(grid[j])


def sample_regime(n, regime, delta, rng, max_tries=10_000):
    """Normalized sorted kappa in Gamma_{n-1} plus an index meeting ``regime``."""
    for _ in range(max_tries):
        x = _sorted_desc(rng.standard_normal(n) + 1.0)
        if x[0] <= 0 or not in_gamma_k(x, n - 1):
            continue
        x = x / x[0]
        cand = [i for i in range(n) if regime_holds(x, i, regime, delta)]
        if cand:
            return x, cand[int(rng.integers(len(cand)))]
    raise SamplerExhausted(f"no sample for regime {regime}")


def sweep_combination(n, regime, trials, seed, delta, K, kappa1, adversarial_every=2, spread=10.0):
    """Trials of ``A + B + C + D - E`` at fixed K with kappa_1 drawn
    log-uniformly from ``[kappa1, spread * kappa1]``.

    Every ``adversarial_every``-th trial uses the most negative direction of
    the form instead of a random hvec. When the exponential weights span more
    than the double range that direction degenerates, so every trial also
    carries the log-domain certificate of :func:`combination_certificate`.
    """
    sid = stream_id(f"abcde:{n}:{regime}")
    out = []
    for j in range(trials):
        rng = trial_rng(seed, j, sid)
        x, i = sample_regime(n, regime, delta, rng)
        y = x * (kappa1 * spread ** rng.uniform(0.0, 1.0))
        h = rng.standard_normal(n)
        if adversarial_every and j % adversarial_every == adversarial_every - 1:
            h = adversarial_direction(y, i, K)
        out.append(check_lemma_combination(y, i, h, K, regime, delta, certify=True))
    return out


def combination_threshold(shape, i, K, s_min=1.0, s_max=1e4, points=81):
    """Smallest kappa_1 on a log grid above which the combination form is PSD."""
    x = as_array(shape)
    grid = np.geomspace(s_min, s_max, points)
    ok = [combination_certificate(x * (s / x[0]), i, K).psd for s in grid]
    if not ok[-1]:
        return None
    j = len(ok) - 1
    while j > 0 and ok[j - 1]:
        j -= 1
    return float(grid[j])


@dataclass
class Thresholds:
    K: float
    kappa_1: float
    samples: int
    uncertified: int


def discover_combination_thresholds(n, regime, delta, samples, seed, eps=0.1, K_max=2.0 ** 40,
                                    kappa1_max=1e4):
    """Empirical (K, kappa_1) pair for the combination in one regime.

    K is twice the largest quadratic-form threshold ``find_K_threshold(kappa, i, eps)``
    over the sampled shapes; kappa_1 is the largest scale past which the
    combination form is PSD at that K. Shapes where either search fails are
    counted in ``uncertified``.
    """
    from .keyineq import find_K_threshold

    sid = stream_id(f"abcde-thr:{n}:{regime}")
    shapes = [sample_regime(n, regime, delta, trial_rng(seed, j, sid)) for j in range(samples)]
    uncertified = 0
    K = 1.0
    for x, i in shapes:
        kt = find_K_threshold(x, i, eps, K_max)
        if kt is None:
            uncertified += 1
        else:
            K = max(K, kt)
    K *= 2.0
    k1 = 0.0
    for x, i in shapes:
        th = combination_threshold(x, i, K, s_min=1e-2, s_max=kappa1_max)
        if th is None:
            uncertified += 1
        else:
            k1 = max(k1, th)
    return Thresholds(float(K), float(k1), samples, uncertified)


def summarize(trials):
    """Counts and worst margin of a list of trials (hypotheses_met only)."""
    met = [t for t in trials if t.hypotheses_met]
    bad = [t for t in met if not t.satisfied]
    worst = min(met, key=lambda t: (t.lhs - t.rhs) / t.scale, default=None)
    return {
        "trials": len(trials),
        "hypotheses_met": len(met),
        "violations": len(bad),
        "worst_relative_margin": None if worst is None else (worst.lhs - worst.rhs) / worst.scale,
    }
