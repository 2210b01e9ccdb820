"""Acceptance criteria 1-13, each at its stated tolerance.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import record_criterion
from sigmahess import estimate_verify as ev
from sigmahess import keyineq as ki
from sigmahess import solver as sv
from sigmahess.cli import RunConfig, main, run
from sigmahess.cone import ConeSpec, min_eig_ratio_bound, sample_gamma_k
from sigmahess.geometry import curvatures, hyperboloid_jet
from sigmahess.rng import trial_rng
from sigmahess.symfunc import sigma

SEED = 20240601


def _run(tmp_path, command, samples, dims, **params):
    cfg = RunConfig(command, SEED, samples, dims, params, str(tmp_path / command))
    return run(cfg)


def test_criterion_01_identity_suite(tmp_path):
    t0 = time.perf_counter()
    status, s = _run(tmp_path, "verify-identities", 1000, [3, 4, 5, 6, 7, 8])
    dt = time.perf_counter() - t0
    ok = status == 0 and s["violation_count"] == 0 and dt < 30.0
    record_criterion(1, ok, f"{s['rows']} checks, {s['violation_count']} above 1e-10, {dt:.1f} s (< 30 s)")
    assert ok


def _det_scale(M):
    return float(np.prod(np.linalg.norm(M, axis=1)))


def test_criterion_02_determinant_formulas():
    t0 = time.perf_counter()
    worst, count = 0.0, 0
    for n in range(3, 8):
        for cv in sample_gamma_k(ConeSpec(n, n - 1), 100, SEED):
            x = cv.values
            for i in range(n):
                H = ki.hadamard_matrix(x, i)
                for idx in ki.admissible_minor_tuples(n, i):
                    sub = H.submatrix(idx, idx)
                    err = abs(ki.principal_minor_formula(x, idx, i) - np.linalg.det(sub))
                    worst = max(worst, err / _det_scale(sub))
                    count += 1
                for idx, drop in ki.admissible_cofactor_tuples(n, i):
                    sub = H.submatrix(list(idx[:-1]), [c for c in idx if c != drop])
                    err = abs(ki.cofactor_formula(x, idx, drop, i) - np.linalg.det(sub))
                    worst = max(worst, err / _det_scale(sub))
                    count += 1
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and dt < 60.0
    record_criterion(2, ok, f"{count} minors/cofactors, worst rel err {worst:.2e} (<= 1e-9), {dt:.1f} s (< 60 s)")
    assert ok


def test_criterion_03_schur_certification():
    bad, worst, count = 0, math.inf, 0
    for n in range(3, 8):
        for cv in sample_gamma_k(ConeSpec(n, n - 1), 1000, SEED, near_boundary_fraction=0.2):
            for i in range(n):
                sc = ki.schur_psd_check(cv, i)
                bad += not (sc.psd_a and sc.psd_a2)
                worst = min(worst, sc.min_eig_a / sc.scale_a, sc.min_eig_a2 / sc.scale_a2)
                count += 1
    ok = bad == 0
    record_criterion(3, ok, f"{count} (sample, i) pairs, {bad} violations, worst min_eig/scale {worst:.2e}")
    assert ok


def test_criterion_04_prop21_sweep(tmp_path):
    status, s = _run(tmp_path, "verify-prop21", 200, [4, 5], delta=0.1, eps=0.1, K_max=2.0 ** 40)
    ok = status == 0 and s["violation_count"] == 0 and s["rows"] == 400
    th = s["thresholds"]
    record_criterion(4, ok, f"{s['rows']} samples, {s['violation_count']} without finite K* or PSD at 2K*; "
                            f"max K* n=4: {th['K_star_max_n4']:g}, n=5: {th['K_star_max_n5']:g}")
    assert ok


def test_criterion_05_counterexample():
    coeff_ok = all(abs(ki.counterexample_poly(K, 1.0) - (690 * K - 1066)) <= 1e-9 * (1 + 690 * K)
                   for K in (0.0, 1.0, 3.0, 1e3))
    rows = ki.counterexample_sweep(10.0, K_max=2.0 ** 60, eps=0.0, i=0)
    neg = all(r.min_eig < 0 for r in rows)
    grid_ok = rows[-1].K == 2.0 ** 60
    ok = coeff_ok and neg and grid_ok
    record_criterion(5, ok, f"poly(K, 1) = 690K - 1066: {coeff_ok}; t = 10 negative eigenvalue at all "
                            f"{len(rows)} grid K up to 2^60: {neg}")
    assert ok


def test_criterion_06_ratio_bound():
    bad, eq, count = 0, 0, 0
    for n in range(3, 8):
        for cv in sample_gamma_k(ConeSpec(n, n - 1), 10_000, SEED):
            rb = min_eig_ratio_bound(cv)
            bad += not rb.holds
            eq += rb.equality
            count += 1
    ok = bad == 0
    record_criterion(6, ok, f"{count} samples, {bad} violations ({eq} equality cases)")
    assert ok


def test_criterion_07_lemma_verifiers():
    g = ev.summarize(ev.sweep_guan_17(4, 3, 1, 1000, SEED))
    leR_trials = ev.sweep_leR(4, 1000, SEED, 0.25, 1 / 400, 1e3)
    leR_big = [t for t in leR_trials if t.extra["kappa_1"] >= 1e3]
    l = ev.summarize(leR_big)
    ths = []
    for j in range(30):
        x, i = ev.sample_small_index(4, 1 / 400, trial_rng(SEED, j, 7))
        ths.append(ev.leR_threshold(x, i, 0.25, 1 / 400, s_min=1e-3))
    th = ev.discover_combination_thresholds(4, "positive_i", 0.1, 200, SEED)
    k1 = th.kappa_1
    comb = ev.sweep_combination(4, "positive_i", 1000, SEED, 0.1, th.K, k1)
    c = ev.summarize(comb)
    uncert = sum(not t.extra["form_psd"] for t in comb)
    ok = (g["hypotheses_met"] == 1000 and g["violations"] == 0
          and l["hypotheses_met"] == len(leR_big) > 0 and l["violations"] == 0
          and None not in ths
          and th.uncertified == 0 and c["hypotheses_met"] == 1000 and c["violations"] == 0)
    record_criterion(7, ok, f"guan17 {g['violations']}/1000 violations; leR {l['violations']}/{len(leR_big)} "
                            f"(kappa_1* = {max(t for t in ths if t is not None):.3g}); combination "
                            f"{c['violations']}/1000 at K = {th.K:g}, kappa_1 = {k1:.3g} "
                            f"({uncert} forms not certified PSD)")
    assert ok


def _quadratic_problem(n):
    return sv.problem_from_dict({"n": n, "h": 1 / 32, "boundary": {"preset": "paraboloid"}, "f": n})


def test_criterion_08_solver_exactness():
    details, ok = [], True
    for n in (2, 3):
        p = _quadratic_problem(n)
        exact = sv.ExactSolution(sv.BOUNDARY_PRESETS["paraboloid"](n), n).value(
            p.nodes().reshape(-1, n)).reshape(p.shape)
        st = sv.solve_continuation(p)
        # a perturbed start exercises the Newton iteration itself
        u = exact.copy()
        u[sv._interior(n)] += 1e-5 * np.random.default_rng(SEED).standard_normal(p.interior_shape)
        st2 = sv.newton_from(u, p)
        for s in (st, st2):
            err = float(np.max(np.abs(s.u - exact)))
            margins = [e["min_margin"] for e in s.log if "min_margin" in e]
            good = (err <= 1e-8 and s.newton_iter <= 10 and s.cone_ok
                    and all(m > sv.CONE_MARGIN for m in margins))
            ok &= good
            details.append(f"n={n}: err {err:.1e}, {s.newton_iter} it")
    record_criterion(8, ok, "33^n grid; " + "; ".join(details))
    assert ok


def test_criterion_09_convergence_order():
    t0 = time.perf_counter()
    errs = []
    for h in (1 / 16, 1 / 32):
        p = sv.problem_from_dict({"n": 2, "h": h, "f": {"preset": "manufactured"},
                                  "solution": "(x0**2 + x1**2)/2 + 0.05*sin(3*x0)*sin(2*x1)"})
        errs.append(sv.solution_error(sv.solve_continuation(p), p))
    ratio = errs[0] / errs[1]
    dt = time.perf_counter() - t0
    ok = 3.0 <= ratio <= 5.0 and dt < 120.0
    record_criterion(9, ok, f"errors {errs[0]:.3e}, {errs[1]:.3e}; ratio {ratio:.3f} in [3, 5]; {dt:.1f} s")
    assert ok


def test_criterion_10_hyperboloid():
    rng = np.random.default_rng(SEED)
    worst_k, worst_s = 0.0, 0.0
    for _ in range(1000):
        x = rng.standard_normal(3)
        x *= 3.0 * rng.uniform() ** (1 / 3) / np.linalg.norm(x)
        k = curvatures(hyperboloid_jet(x), "minkowski").values
        worst_k = max(worst_k, float(np.max(np.abs(k - 1.0))))
        worst_s = max(worst_s, abs(sigma(2, k) - 3.0))
    ok = worst_k <= 1e-8 and worst_s <= 1e-7
    record_criterion(10, ok, f"1000 points, max |kappa - 1| {worst_k:.1e}, max |sigma_2 - 3| {worst_s:.1e}")
    assert ok


def test_criterion_11_sphere():
    n, k = 3, 2
    f1 = sv.radial_from_expr("n*rho**(-n)", n)
    b1 = sv.sphere_barrier_check(f1, 0.5, 2.0, k)
    r1 = sv.sphere_solve(f1, 0.5, 2.0, k).r
    f2 = sv.radial_from_expr("2*n*rho**(-n)", n)
    b2 = sv.sphere_barrier_check(f2, 0.5, 4.0, k)
    r2 = sv.sphere_solve(f2, 0.5, 4.0, k).r
    ok = b1.cond1 and b1.cond2 and abs(r1 - 1) <= 1e-10 and b2.cond2 and abs(r2 - 2) <= 1e-10
    record_criterion(11, ok, f"barriers ({b1.cond1}, {b1.cond2}); r* = {r1!r}; r* = {r2!r}")
    assert ok


def test_criterion_12_jacobian():
    rng = np.random.default_rng(SEED)
    docs = [
        {"n": 2, "h": 0.125, "boundary": {"preset": "paraboloid"}, "f": {"expr": "2 + 0.3*u + 0.1*p0**2"}},
        {"n": 2, "h": 0.125, "signature": "minkowski", "boundary": {"preset": "hyperboloid"}, "f": 2},
        {"n": 3, "h": 0.25, "boundary": {"preset": "paraboloid"}, "f": {"expr": "3 + p1*p2 + 0.1*u"}},
        {"n": 3, "h": 0.25, "signature": "minkowski", "boundary": {"preset": "hyperboloid"}, "f": 3},
    ]
    worst, count = 0.0, 0
    for j in range(20):
        p = sv.problem_from_dict(docs[j % len(docs)])
        u, _, _ = sv.seed_state(p)
        u[sv._interior(p.n)] += 1e-3 * rng.standard_normal(p.interior_shape)
        st, _ = sv._state_from(u, p, 1.0, None)
        assert st.cone_ok
        worst = max(worst, sv.jacobian_fd_check(st, p, rng=rng))
        count += 1
    ok = worst <= 1e-5
    record_criterion(12, ok, f"{count} admissible states, worst relative gap {worst:.1e} (<= 1e-5)")
    assert ok


def _csv_body(path):
    return Path(path).read_bytes()


def test_criterion_13_cli_determinism(tmp_path):
    runs = [
        ["verify-lemmas", "--dims", "4", "--samples", "50", "--lemmas", "guan17,guan18,leR,ratio"],
        ["verify-identities", "--dims", "3,5", "--samples", "30"],
        ["counterexample", "--t", "1", "--K", "1"],
    ]
    ok = True
    for argv in runs:
        a, b = tmp_path / "a", tmp_path / "b"
        sa = main(argv + ["--seed", "3", "--out", str(a)])
        sb = main(argv + ["--seed", "3", "--out", str(b)])
        ok &= sa == sb and _csv_body(f"{a}.csv") == _csv_body(f"{b}.csv")
    record_criterion(13, ok, f"{len(runs)} commands run twice: identical CSV bytes and exit statuses")
    assert ok
