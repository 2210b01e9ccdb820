"""Command-line entry point: verification sweeps, counterexample, curvatures, solvers.

Every command writes ``<out>.json`` (summary) and ``<out>.csv`` (one row per
trial, floats with 17 significant digits). Exit status is 0 on success, 1 on
violations or non-convergence and 2 on configuration errors.
"""
import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import estimate_verify as ev
from . import keyineq, solver
from .cone import ConeSpec, min_eig_ratio_bound, sample_gamma_k
from .errors import ConfigError, NotSpacelikeError, SigmaHessError, SolverError
from .geometry import GraphJet, curvatures, hyperboloid_jet
from .kernels import BACKEND
from .rng import stream_id, trial_rng
from .symfunc import fact_i_error, fact_ii_error, newton_expansion_residual, sigma, sigma_all

SCHEMA_VERSION = 1
COMMANDS = ("verify-identities", "verify-prop21", "verify-determinants", "verify-lemmas",
            "counterexample", "curvature", "solve", "sphere")
IDENTITY_TOL = 1e-10
DETERMINANT_TOL = 1e-9
LEMMAS = ("guan17", "guan18", "leR", "combination", "ratio")
MAX_REPORTED_VIOLATIONS = 50


@dataclass
class RunConfig:
    command: str
    seed: int = 0
    samples: int = 100
    dims: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    out: str = None

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.samples <= 0:
            raise ConfigError("samples must be positive")
        low = 2 if self.command in ("solve", "curvature") else 3
        bad = [d for d in self.dims if d < low]
        if bad:
            raise ConfigError(f"dims must be >= {low} for {self.command}, got {bad}")


class Report:
    def __init__(self, columns):
        self.columns = list(columns)
        self.rows = []
        self.violations = []
        self.thresholds = {}
        self.info = {}

    def add(self, row, violation=False, **detail):
        self.rows.append(row)
        if violation:
            self.violations.append({"row": len(self.rows), **detail})


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    return v


def write_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(report.columns)
        for row in report.rows:
            w.writerow([_fmt(row.get(c)) for c in report.columns])


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _dims(cfg, default):
    return cfg.dims or list(default)


def cmd_verify_identities(cfg):
    rep = Report(["n", "trial", "check", "max_rel_err", "ok"])
    for n in _dims(cfg, (3, 4, 5, 6, 7, 8)):
        sid = stream_id(f"identities:{n}")
        for j in range(cfg.samples):
            rng = trial_rng(cfg.seed, j, sid)
            x = rng.standard_normal(n)
            H = rng.standard_normal((n, n))
            errs = {}
            for c in keyineq.check_identities(x):
                errs[c.name] = max(errs.get(c.name, 0.0), c.rel_err)
            s = sigma_all(x)
            errs["newton"] = max(abs(newton_expansion_residual(k, x, i)) / max(np.max(np.abs(s)), 1e-300)
                                 for k in range(1, n + 1) for i in range(n))
            errs["fact_i"] = max(fact_i_error(k, x) for k in {2, n - 1})
            errs["fact_ii"] = max(fact_ii_error(k, x, H) for k in {2, n - 1})
            for name in sorted(errs):
                ok = errs[name] <= IDENTITY_TOL
                rep.add({"n": n, "trial": j, "check": name, "max_rel_err": errs[name], "ok": ok},
                        not ok, trial=j, kappa=x.tolist(), params={"check": name},
                        lhs=errs[name], rhs=IDENTITY_TOL)
    rep.thresholds["tolerance"] = IDENTITY_TOL
    return rep


def _regime_index(x, delta, rng):
    cand = [i for i in range(x.size) if x[i] >= delta * x[0]]
    return cand[int(rng.integers(len(cand)))]


def cmd_verify_prop21(cfg):
    p = cfg.params
    delta, eps, K_max = p["delta"], p["eps"], p["K_max"]
    rep = Report(["n", "trial", "i", "kappa", "K_star", "min_eig_2K", "psd_2K"])
    for n in _dims(cfg, (4, 5)):
        kstars = []
        spec = ConeSpec(n, n - 1)
        pick = stream_id(f"prop21-index:{n}")
        for j, cv in enumerate(sample_gamma_k(spec, cfg.samples, cfg.seed)):
            x = cv.values
            i = _regime_index(x, delta, trial_rng(cfg.seed, j, pick))
            K = keyineq.find_K_threshold(x, i, eps, K_max)
            if K is None:
                rep.add({"n": n, "trial": j, "i": i, "kappa": x, "K_star": None,
                         "min_eig_2K": None, "psd_2K": False}, True, trial=j, kappa=x.tolist(),
                        params={"n": n, "i": i}, lhs=None, rhs=None)
                continue
            kstars.append(K)
            r2 = keyineq.build_prop21_form(x, i, 2 * K, eps)
            rep.add({"n": n, "trial": j, "i": i, "kappa": x, "K_star": K,
                     "min_eig_2K": r2.min_eig, "psd_2K": r2.psd}, not r2.psd, trial=j,
                    kappa=x.tolist(), params={"n": n, "i": i, "K": 2 * K},
                    lhs=r2.min_eig, rhs=-r2.tol * r2.scale)
        rep.thresholds[f"K_star_max_n{n}"] = max(kstars) if kstars else None
    return rep


def cmd_verify_determinants(cfg):
    frac = cfg.params["near_boundary"]
    rep = Report(["n", "trial", "excluded", "kappa", "minor_max_rel_err", "cofactor_max_rel_err",
                  "min_eig_a", "min_eig_a2", "ok"])
    for n in _dims(cfg, (3, 4, 5, 6, 7)):
        spec = ConeSpec(n, n - 1)
        for j, cv in enumerate(sample_gamma_k(spec, cfg.samples, cfg.seed, near_boundary_fraction=frac)):
            x = cv.values
            for i in range(n):
                m_err = c_err = 0.0
                if n >= 3 and n <= 7:
                    H = keyineq.hadamard_matrix(x, i)
                    for idx in keyineq.admissible_minor_tuples(n, i):
                        sub = H.submatrix(idx, idx)
                        ref = float(np.linalg.det(sub))
                        val = keyineq.principal_minor_formula(x, idx, i)
                        m_err = max(m_err, abs(val - ref) / max(_det_scale(sub), 1e-300))
                    for idx, drop in keyineq.admissible_cofactor_tuples(n, i):
                        rows = list(idx[:-1])
                        cols = [c for c in idx if c != drop]
                        sub = H.submatrix(rows, cols)
                        ref = float(np.linalg.det(sub))
                        val = keyineq.cofactor_formula(x, idx, drop, i)
                        c_err = max(c_err, abs(val - ref) / max(_det_scale(sub), 1e-300))
                sc = keyineq.schur_psd_check(x, i)
                ok = m_err <= DETERMINANT_TOL and c_err <= DETERMINANT_TOL and sc.psd_a and sc.psd_a2
                rep.add({"n": n, "trial": j, "excluded": i, "kappa": x, "minor_max_rel_err": m_err,
                         "cofactor_max_rel_err": c_err, "min_eig_a": sc.min_eig_a,
                         "min_eig_a2": sc.min_eig_a2, "ok": ok}, not ok, trial=j, kappa=x.tolist(),
                        params={"n": n, "excluded": i}, lhs=min(sc.min_eig_a, sc.min_eig_a2), rhs=None)
    rep.thresholds["determinant_tolerance"] = DETERMINANT_TOL
    rep.thresholds["psd_tolerance"] = keyineq.PSD_TOL
    return rep


def _det_scale(M):
    # Hadamard-type bound: product of row norms
    return float(np.prod(np.linalg.norm(M, axis=1)))


def _lemma_row(lemma, n, j, tr, regime=""):
    return {"lemma": lemma, "n": n, "trial": j, "regime": regime, "kappa": tr.kappa,
            "lhs": tr.lhs, "rhs": tr.rhs, "scale": tr.scale, "log_scale": tr.log_scale,
            "hypotheses_met": tr.hypotheses_met, "satisfied": tr.satisfied}


def cmd_verify_lemmas(cfg):
    p = cfg.params
    wanted = p["lemmas"]
    rep = Report(["lemma", "n", "trial", "regime", "kappa", "lhs", "rhs", "scale", "log_scale",
                  "hypotheses_met", "satisfied"])

    def record(lemma, n, trials, regime=""):
        for j, tr in enumerate(trials):
            bad = tr.hypotheses_met and not tr.satisfied
            if lemma == "combination" and tr.extra.get("form_psd") is False:
                bad = True
            rep.add(_lemma_row(lemma, n, j, tr, regime), bad, trial=j, kappa=tr.kappa.tolist(),
                    params={"lemma": lemma, "n": n, **{k: v for k, v in tr.aux.items()}},
                    lhs=tr.lhs, rhs=tr.rhs)

    for n in _dims(cfg, (4,)):
        if "guan17" in wanted:
            record("guan17", n, ev.sweep_guan_17(n, n - 1, 1, cfg.samples, cfg.seed))
        if "guan18" in wanted:
            trials = ev.sweep_guan_18(n, n - 1, 1, cfg.samples, cfg.seed, p["delta_guan"])
            record("guan18", n, trials)
            stars = [t.extra["delta_star"] for t in trials]
            rep.thresholds[f"guan18_delta_star_min_n{n}"] = None if None in stars else min(stars)
        if "leR" in wanted:
            record("leR", n, ev.sweep_leR(n, cfg.samples, cfg.seed, p["eps_T"], p["delta_T"],
                                          p["kappa1_min"]))
            sid = stream_id(f"leR-thr:{n}")
            ths = []
            for j in range(min(cfg.samples, p["threshold_samples"])):
                x, i = ev.sample_small_index(n, p["delta_T"], trial_rng(cfg.seed, j, sid))
                ths.append(ev.leR_threshold(x, i, p["eps_T"], p["delta_T"], s_min=1e-3))
            rep.thresholds[f"leR_kappa1_star_n{n}"] = None if None in ths else max(ths)
        if "combination" in wanted:
            for regime in p["regimes"]:
                th = ev.discover_combination_thresholds(n, regime, p["delta"],
                                                        p["threshold_samples"], cfg.seed, eps=p["eps"])
                k1 = max(th.kappa_1, p["kappa1_min"])
                rep.thresholds[f"combination_{regime}_n{n}"] = {
                    "K": th.K, "kappa_1_star": th.kappa_1, "kappa_1_used": k1,
                    "uncertified": th.uncertified}
                record("combination", n, ev.sweep_combination(n, regime, cfg.samples, cfg.seed,
                                                              p["delta"], th.K, k1), regime)
        if "ratio" in wanted:
            spec = ConeSpec(n, n - 1)
            eq = 0
            for j, cv in enumerate(sample_gamma_k(spec, cfg.samples, cfg.seed)):
                rb = min_eig_ratio_bound(cv)
                eq += rb.equality
                rep.add({"lemma": "ratio", "n": n, "trial": j, "regime": "", "kappa": cv.values,
                         "lhs": 1.0 / (n - 1), "rhs": rb.ratio, "scale": 1.0, "log_scale": 0.0,
                         "hypotheses_met": True, "satisfied": rb.holds}, not rb.holds, trial=j,
                        kappa=cv.values.tolist(), params={"lemma": "ratio", "n": n},
                        lhs=1.0 / (n - 1), rhs=rb.ratio)
            rep.thresholds[f"ratio_equality_cases_n{n}"] = eq
    return rep


def cmd_counterexample(cfg):
    p = cfg.params
    t_user, K_user = p["t"], p["K"]
    rep = Report(["t", "K", "poly", "det", "min_eig", "witness_value"])
    ts = sorted({1.0, 2.0, 5.0, 10.0, 20.0, float(t_user)})
    neg_ts = []
    for t in ts:
        rows = keyineq.counterexample_sweep(t, K_max=p["K_max"])
        for r in rows:
            rep.add(r.as_dict())
        if all(r.min_eig < 0 for r in rows):
            neg_ts.append(t)
    rep.info["poly_value"] = float(keyineq.counterexample_poly(K_user, t_user))
    rep.info["poly_at"] = {"K": K_user, "t": t_user}
    rep.info["sigma2"] = {str(t): keyineq.sigma2_check(t) for t in ts}
    rep.thresholds["t_negative_for_all_K"] = neg_ts
    if not neg_ts:
        rep.violations.append({"row": None, "message": "no t with a negative eigenvalue for every K"})
    return rep


def _parse_json_arg(s, what):
    try:
        return np.asarray(json.loads(s), dtype=float)
    except (json.JSONDecodeError, ValueError, TypeError) as exc:
        raise ConfigError(f"cannot parse {what}: {exc}") from exc


def cmd_curvature(cfg):
    p = cfg.params
    sig = p["signature"]
    rep = Report(["point", "kappa", "sigma_n_minus_1"])
    jets = []
    if p["du"] is not None or p["d2u"] is not None:
        if p["du"] is None or p["d2u"] is None:
            raise ConfigError("--du and --d2u go together")
        du = _parse_json_arg(p["du"], "--du")
        jets.append(GraphJet(np.zeros(du.size), 0.0, du, _parse_json_arg(p["d2u"], "--d2u")))
    else:
        n = _dims(cfg, (3,))[0]
        sid = stream_id(f"curvature:{n}")
        for j in range(cfg.samples):
            rng = trial_rng(cfg.seed, j, sid)
            x = rng.standard_normal(n)
            x *= 3.0 * rng.uniform() ** (1.0 / n) / np.linalg.norm(x)
            jets.append(hyperboloid_jet(x))
    for j, jet in enumerate(jets):
        try:
            k = curvatures(jet, sig).values
        except NotSpacelikeError as exc:
            raise ConfigError(str(exc)) from exc
        rep.add({"point": jet.point, "kappa": k, "sigma_n_minus_1": sigma(jet.n - 1, k)})
    return rep


def cmd_solve(cfg):
    p = cfg.params
    if not p["problem"]:
        raise ConfigError("solve needs --problem")
    prob = solver.load_problem(p["problem"])
    rep = Report(["t", "iter", "residual", "damping", "min_margin", "min_spacelike"])
    out = Path(cfg.out)
    try:
        st = solver.solve_continuation(prob, p["t_steps"], tol=p["tol"], max_iter=p["max_iter"])
    except SolverError as exc:
        rep.violations.append({"row": None, "message": str(exc), "diagnostics": exc.diagnostics})
        rep.info["converged"] = False
        return rep
    for r in st.log:
        if "t" in r:
            rep.add(r)
    grid = out.with_suffix(".grid")
    solver.write_grid(grid, st.u, prob)
    rep.info.update(converged=True, grid=str(grid), log=solver.convergence_log(st, prob))
    if prob.exact is not None:
        rep.info["max_error"] = solver.solution_error(st, prob)
    rep.thresholds["residual_norm"] = st.residual_norm
    return rep


def cmd_sphere(cfg):
    p = cfg.params
    n = _dims(cfg, (3,))[0]
    k = p["k"] if p["k"] is not None else n - 1
    f = solver.radial_from_expr(p["f"], n)
    br = solver.sphere_barrier_check(f, p["r1"], p["r2"], k, n)
    rep = Report(["n", "k", "r1", "r2", "cond1", "cond2", "max_slope", "r_star", "degenerate_plateau"])
    row = {"n": n, "k": k, "r1": p["r1"], "r2": p["r2"], "cond1": br.cond1, "cond2": br.cond2,
           "max_slope": br.max_slope, "r_star": None, "degenerate_plateau": None}
    if br.cond1 and br.cond2:
        try:
            sol = solver.sphere_solve(f, p["r1"], p["r2"], k, n)
            row.update(r_star=sol.r, degenerate_plateau=sol.degenerate_plateau)
        except SigmaHessError as exc:
            rep.violations.append({"row": 1, "message": str(exc)})
    else:
        rep.violations.append({"row": 1, "message": "barrier conditions fail"})
    rep.add(row)
    return rep


HANDLERS = {
    "verify-identities": cmd_verify_identities,
    "verify-prop21": cmd_verify_prop21,
    "verify-determinants": cmd_verify_determinants,
    "verify-lemmas": cmd_verify_lemmas,
    "counterexample": cmd_counterexample,
    "curvature": cmd_curvature,
    "solve": cmd_solve,
    "sphere": cmd_sphere,
}


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------

def run(cfg: RunConfig):
    """Execute one command; returns ``(exit_status, summary_dict)``."""
    cfg.validate()
    if cfg.out is None:
        cfg.out = cfg.command
    start = time.perf_counter()
    rep = HANDLERS[cfg.command](cfg)
    runtime = int(round(1000 * (time.perf_counter() - start)))
    out = Path(cfg.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    csv_path = out.with_suffix(".csv")
    write_csv(csv_path, rep)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": cfg.command,
        "seed": cfg.seed,
        "samples": cfg.samples,
        "dims": cfg.dims,
        "params": cfg.params,
        "backend": BACKEND,
        "rows": len(rep.rows),
        "violation_count": len(rep.violations),
        "violations": rep.violations[:MAX_REPORTED_VIOLATIONS],
        "thresholds": rep.thresholds,
        "csv": str(csv_path),
        "runtime_ms": runtime,
        **rep.info,
    }
    with open(out.with_suffix(".json"), "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return (1 if rep.violations else 0), summary


def _int_list(s):
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from exc


def _str_list(s):
    return [v.strip() for v in s.split(",") if v.strip()]


def build_parser():
    ap = argparse.ArgumentParser(prog="sigmahess", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--seed", type=int, default=0, help="root seed for every random draw")
    ap.add_argument("--samples", type=int, default=None, help="trials per dimension")
    ap.add_argument("--dims", type=_int_list, default=[], help="comma-separated dimensions n")
    ap.add_argument("--out", default=None, help="output prefix for <out>.json / <out>.csv")
    g = ap.add_argument_group("verification parameters")
    g.add_argument("--delta", type=float, default=0.1, help="ratio kappa_i/kappa_1 for the K search and the regimes")
    g.add_argument("--eps", type=float, default=0.1, help="epsilon of the quadratic form")
    g.add_argument("--K-max", dest="K_max", type=float, default=2.0 ** 40, help="top of the K grid")
    g.add_argument("--near-boundary", dest="near_boundary", type=float, default=0.2,
                   help="fraction of cone samples pushed to the boundary")
    g.add_argument("--lemmas", type=_str_list, default=list(LEMMAS),
                   help=f"subset of {','.join(LEMMAS)}")
    g.add_argument("--regimes", type=_str_list, default=["positive_i"],
                   help=f"subset of {','.join(ev.REGIMES)}")
    g.add_argument("--eps-T", dest="eps_T", type=float, default=0.25)
    g.add_argument("--delta-T", dest="delta_T", type=float, default=1 / 400)
    g.add_argument("--delta-guan", dest="delta_guan", type=float, default=1 / 16)
    g.add_argument("--kappa1-min", dest="kappa1_min", type=float, default=1e3)
    g.add_argument("--threshold-samples", dest="threshold_samples", type=int, default=200)
    g.add_argument("--t", type=float, default=10.0, help="counterexample parameter t")
    g.add_argument("--K", type=float, default=1.0, help="K at which the polynomial is reported")
    c = ap.add_argument_group("curvature")
    c.add_argument("--signature", choices=solver.SIGNATURES, default="minkowski")
    c.add_argument("--du", default=None, help="gradient as JSON list")
    c.add_argument("--d2u", default=None, help="Hessian as JSON nested list")
    s = ap.add_argument_group("solvers")
    s.add_argument("--problem", default=None, help="problem JSON file")
    s.add_argument("--t-steps", dest="t_steps", type=int, default=4)
    s.add_argument("--tol", type=float, default=solver.TOL_NEWTON)
    s.add_argument("--max-iter", dest="max_iter", type=int, default=50)
    s.add_argument("--f", default="n*rho**(-n)", help="radial right-hand side in rho")
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--r1", type=float, default=0.5)
    s.add_argument("--r2", type=float, default=2.0)
    return ap


DEFAULT_SAMPLES = {"verify-identities": 1000, "verify-prop21": 200, "verify-determinants": 100,
                   "verify-lemmas": 1000, "counterexample": 1, "curvature": 1000, "solve": 1,
                   "sphere": 1}

PARAMS = {
    "verify-identities": (),
    "verify-prop21": ("delta", "eps", "K_max"),
    "verify-determinants": ("near_boundary",),
    "verify-lemmas": ("delta", "eps", "lemmas", "regimes", "eps_T", "delta_T", "delta_guan",
                      "kappa1_min", "threshold_samples"),
    "counterexample": ("t", "K", "K_max"),
    "curvature": ("signature", "du", "d2u"),
    "solve": ("problem", "t_steps", "tol", "max_iter"),
    "sphere": ("f", "k", "r1", "r2"),
}


def config_from_args(ns):
    params = {k: getattr(ns, k) for k in PARAMS[ns.command]}
    if ns.command == "counterexample" and ns.K_max == 2.0 ** 40:
        params["K_max"] = 2.0 ** 60
    if ns.command == "verify-lemmas":
        bad = [x for x in params["lemmas"] if x not in LEMMAS]
        bad += [x for x in params["regimes"] if x not in ev.REGIMES]
        if bad:
            raise ConfigError(f"unknown lemma or regime names {bad}")
    samples = ns.samples if ns.samples is not None else DEFAULT_SAMPLES[ns.command]
    return RunConfig(ns.command, ns.seed, samples, ns.dims, params, ns.out)


def main(argv=None):
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        cfg = config_from_args(ns)
        status, summary = run(cfg)
    except (ConfigError, OSError) as exc:
        print(f"sigmahess: configuration error: {exc}", file=sys.stderr)
        return 2
    print(f"{summary['command']}: {summary['rows']} rows, {summary['violation_count']} violations "
          f"-> {summary['csv']}")
    return status


if __name__ == "__main__":
    sys.exit(main())
