import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import sigma_subsets
from sigmahess import estimate_verify as ev
from sigmahess.errors import ExpRangeError
from sigmahess.rng import trial_rng


def test_divided_difference_values():
    assert ev.divided_difference(0.0, 0.0) == 1.0
    assert ev.divided_difference(1.0, 0.0) == pytest.approx(math.e - 1.0, rel=1e-15)
    assert ev.divided_difference(2.0, 2.0 + 1e-9) == pytest.approx(math.exp(2.0), rel=1e-8)
    assert ev.divided_difference(800.0, 799.0, shift=800.0) == pytest.approx(1 - math.exp(-1), rel=1e-14)


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_divided_difference_symmetric_and_between(a, b):
    d = ev.divided_difference(a, b)
    assert d == ev.divided_difference(b, a)
    lo, hi = sorted((math.exp(a), math.exp(b)))
    assert lo * (1 - 1e-12) <= d <= hi * (1 + 1e-12)


def test_guan17_zero_direction():
    t = ev.check_guan_17((3.0, 2.0, 1.0, 0.5), 3, 1, np.zeros(4))
    assert t.hypotheses_met and t.satisfied and t.lhs == 0.0 and t.rhs == 0.0


@pytest.mark.parametrize("k,l", [(3, 1), (3, 2), (4, 2)])
def test_guan17_euler_direction(k, l):
    """Along v = kappa both sides reduce to -(k-l)(k+l-1) by homogeneity."""
    x = np.array([4.0, 3.0, 2.0, 1.0, 0.5])
    t = ev.check_guan_17(x, k, l, x)
    assert t.lhs == pytest.approx(-(k - l) * (k + l - 1), rel=1e-12)
    assert t.rhs == pytest.approx(-(k - l) * (k + l - 1), rel=1e-12)
    assert t.satisfied


def test_guan17_hypotheses():
    assert not ev.check_guan_17((1.0, 1.0, -5.0), 2, 1, np.ones(3)).hypotheses_met
    assert not ev.check_guan_17((1.0, 1.0, 1.0), 1, 1, np.ones(3)).hypotheses_met
    assert not ev.check_guan_18((1.0, 1.0, 1.0), 2, 1, np.ones(3), 1.5).hypotheses_met


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.1, 10.0))
def test_guan_sides_homogeneous_in_v(seed, c):
    x, v = ev.sample_guan(5, 4, trial_rng(seed, 0, 1))
    a = ev.check_guan_17(x, 4, 2, v)
    b = ev.check_guan_17(x, 4, 2, c * v)
    assert b.lhs == pytest.approx(c * c * a.lhs, rel=1e-9, abs=1e-9 * b.scale)
    assert b.rhs == pytest.approx(c * c * a.rhs, rel=1e-9, abs=1e-9 * b.scale)


def test_guan_sweeps():
    for n in (4, 5):
        s = ev.summarize(ev.sweep_guan_17(n, n - 1, 1, 300, 0))
        assert s["hypotheses_met"] == 300 and s["violations"] == 0
    trials = ev.sweep_guan_18(4, 3, 1, 200, 1, 1 / 16)
    assert ev.summarize(trials)["violations"] == 0
    assert all(t.extra["delta_star"] is not None for t in trials)


def test_leR_small_case_by_hand():
    x = np.array([1000.0, 600.0, 400.0, 1.0])
    eps, i, l = 0.25, 3, 1
    t = ev.check_leR(x, 3, i, l, eps, 1 / 400)
    assert t.hypotheses_met and t.log_scale == 600.0
    s_il = sigma_subsets(1, x, (i, l))
    s_l = sigma_subsets(2, x, (l,))
    s_i = sigma_subsets(2, x, (i,))
    dd = -math.expm1(-599.0) / 599.0
    assert t.lhs == pytest.approx((1 + eps) * (s_il + dd * s_l), rel=1e-12)
    assert t.rhs == pytest.approx(s_i / 1000.0, rel=1e-12)
    assert t.satisfied


def test_leR_large_curvatures_finite():
    x = np.array([5000.0, 4000.0, -1000.0, 3.0])
    for l in (0, 1, 2):
        t = ev.check_leR(x, 3, 3, l, 0.25, 1 / 400)
        assert np.isfinite(t.lhs) and np.isfinite(t.rhs)


def test_leR_sweep_and_threshold():
    trials = ev.sweep_leR(4, 100, 2, 0.25, 1 / 400, 1e3)
    s = ev.summarize(trials)
    assert s["hypotheses_met"] == len(trials) and s["violations"] == 0
    x, i = ev.sample_small_index(4, 1 / 400, trial_rng(2, 0, 0))
    th = ev.leR_threshold(x, i, 0.25, 1 / 400)
    assert th is not None and th <= 1e3


def test_p_profile():
    p = ev.p_profile((0.0, 0.0))
    assert p.P == 2.0 and p.logP == pytest.approx(math.log(2.0))
    with pytest.raises(ExpRangeError):
        ev.p_profile((600.0, 1.0))


def _abcde_direct(x, i, h, K):
    """Term-by-term sums straight from the definitions, unscaled."""
    n = len(x)
    k = n - 1
    g = [sigma_subsets(k - 1, x, (p,)) for p in range(n)]
    ex = np.exp(x)
    A = ex[i] * (K * sum(g[p] * h[p] for p in range(n)) ** 2
                 - sum(sigma_subsets(k - 2, x, (p, q)) * h[p] * h[q]
                       for p in range(n) for q in range(n) if p != q))
    B = 2 * sum(sigma_subsets(k - 2, x, (i, l)) * ex[l] * h[l] ** 2 for l in range(n) if l != i)
    C = g[i] * sum(ex[l] * h[l] ** 2 for l in range(n))
    D = 2 * sum(g[l] * (ex[l] - ex[i]) / (x[l] - x[i]) * h[l] ** 2 for l in range(n) if l != i)
    P = ex.sum()
    E = (1 + math.log(P)) / (P * math.log(P)) * g[i] * (ex @ h) ** 2
    return A, B, C, D, E


def test_abcde_matches_direct_sums():
    rng = np.random.default_rng(11)
    x = np.array([3.0, 2.0, 1.5, -0.5])
    for i in range(4):
        h = rng.standard_normal(4)
        got = ev.compute_ABCDE(x, i, h, 7.0).unscaled()
        want = _abcde_direct(x, i, h, 7.0)
        np.testing.assert_allclose([got.A, got.B, got.C, got.D, got.E], want, rtol=1e-11)


def test_abcde_symmetric_point():
    """At kappa = (1, ..., 1) each D summand uses the confluent value e."""
    n = 4
    x = np.ones(n)
    h = np.arange(1.0, n + 1)
    t = ev.compute_ABCDE(x, 0, h, 2.0).unscaled()
    g = math.comb(n - 1, n - 2)  # sigma_{n-2} of n-1 ones
    assert t.D == pytest.approx(2 * g * math.e * float(h[1:] @ h[1:]), rel=1e-12)


def test_abcde_homogeneous_degree_two():
    x = np.array([2.0, 1.0, 0.5])
    h = np.array([0.3, -1.0, 2.0])
    a = ev.compute_ABCDE(x, 1, h, 3.0)
    b = ev.compute_ABCDE(x, 1, 2.5 * h, 3.0)
    assert b.total() == pytest.approx(6.25 * a.total(), rel=1e-12)


def test_combination_form_agrees_with_terms():
    rng = np.random.default_rng(12)
    x = np.array([4.0, 3.0, 1.0, 0.2])
    c, g, M0 = ev.combination_parts(x, 2, 5.0)
    M = M0 + c * np.outer(g, g)
    for _ in range(10):
        h = rng.standard_normal(4)
        assert h @ M @ h == pytest.approx(ev.compute_ABCDE(x, 2, h, 5.0).total(), rel=1e-10, abs=1e-12)


def test_certificate_agrees_with_min_eig():
    rng = np.random.default_rng(13)
    for _ in range(30):
        x, i = ev.sample_regime(4, "positive_i", 0.1, rng)
        for s in (0.5, 3.0, 20.0):
            for K in (1.0, 100.0):
                lam, scale = ev.combination_min_eig(x * s, i, K)
                cert = ev.combination_certificate(x * s, i, K)
                if abs(lam) > 1e-6 * scale:
                    assert cert.psd == (lam > 0)


def test_certificate_survives_huge_curvatures():
    x = np.array([1.0, 0.7, 0.4, 0.2]) * 3000.0
    cert = ev.combination_certificate(x, 2, 64.0)
    assert np.isfinite(cert.min_eig)
    with pytest.raises(ExpRangeError):
        ev.compute_ABCDE(x, 2, np.ones(4), 64.0).unscaled()


def test_regimes():
    x = np.array([1.0, 0.5, 0.01, -0.3])
    assert ev.regime_holds(x, 2, "small_i", 0.1)
    assert ev.regime_holds(x, 1, "positive_i", 0.1)
    assert ev.regime_holds(x, 3, "negative_i", 0.1)
    with pytest.raises(ValueError):
        ev.regime_holds(x, 0, "other", 0.1)


def test_combination_sweep_positive():
    th = ev.discover_combination_thresholds(4, "positive_i", 0.1, 20, 0)
    assert th.uncertified == 0
    trials = ev.sweep_combination(4, "positive_i", 40, 0, 0.1, th.K, max(th.kappa_1, 1.0) * 10)
    assert ev.summarize(trials)["violations"] == 0
    assert all(t.extra["form_psd"] for t in trials)
