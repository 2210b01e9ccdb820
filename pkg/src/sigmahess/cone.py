"""Garding cones Gamma_k = {sigma_1 > 0, ..., sigma_k > 0} and cone sampling."""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NotInConeError, SamplerExhausted
from .rng import stream_id, trial_rng
from .symfunc import CurvatureVector, as_array, sigma_all

BOUNDARY_MARGIN = 1e-3


@dataclass(frozen=True)
class ConeSpec:
    n: int
    k: int

    def __post_init__(self):
        if self.n < 1 or not (1 <= self.k <= self.n):
            raise ValueError(f"need 1 <= k <= n, got n={self.n}, k={self.k}")


def _order(spec, x):
    if isinstance(spec, ConeSpec):
        if spec.n != x.size:
            raise ValueError(f"cone dimension {spec.n} does not match vector length {x.size}")
        return spec.k
    return int(spec)


def in_gamma_k(kappa, spec) -> bool:
    """Strict membership: sigma_m(kappa) > 0 for m = 1..k."""
    x = as_array(kappa)
    k = _order(spec, x)
    s = sigma_all(x)
    return bool(np.all(s[1:k + 1] > 0))


def gamma_margin(kappa, spec) -> float:
    """Scale-invariant cone margin ``min_m sigma_m(kappa) / |kappa|^m``.

    Positive exactly when ``in_gamma_k`` holds; zero on the cone boundary.
    """
    x = as_array(kappa)
    k = _order(spec, x)
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        return 0.0
    s = sigma_all(x)
    m = np.arange(1, k + 1)
    return float(np.min(s[1:k + 1] / norm ** m))


class RatioBound(NamedTuple):
    ratio: float
    holds: bool
    equality: bool


def min_eig_ratio_bound(kappa) -> RatioBound:
    """Smallest-eigenvalue bound in Gamma_{n-1}: ``-kappa_n < kappa_1 / (n-1)``.

    Returns ``lambda = -kappa_n / kappa_1``, whether the strict bound holds and
    whether the comparison landed exactly on equality (reported separately).
    """
    x = as_array(kappa)
    n = x.size
    if np.any(np.diff(x) > 0):
        raise NotInConeError("curvatures must be sorted in descending order")
    if not x[0] > 0:
        raise NotInConeError("largest curvature must be positive")
    if not in_gamma_k(x, n - 1):
        raise NotInConeError(f"{x.tolist()} is not in Gamma_{n - 1}")
    ratio = -x[-1] / x[0]
    bound = 1.0 / (n - 1)
    return RatioBound(float(ratio), bool(ratio < bound), bool(ratio == bound))


def _push_to_boundary(x, k, margin=BOUNDARY_MARGIN, max_iter=200):
    # lowering the last coordinate lowers sigma_1..sigma_k inside Gamma_k
    lo, step = 0.0, max(1.0, float(np.max(np.abs(x))))
    hi = step

    def shifted(s):
        y = x.copy()
        y[-1] -= s
        return y

    while in_gamma_k(shifted(hi), k):
        hi *= 2.0
        if hi > 1e12 * step:
            raise SamplerExhausted("could not leave the cone by shrinking the last coordinate")
    for _ in range(max_iter):
        y = shifted(lo)
        if gamma_margin(y, k) < margin:
            return y
        mid = 0.5 * (lo + hi)
        if in_gamma_k(shifted(mid), k):
            lo = mid
        else:
            hi = mid
    raise SamplerExhausted("boundary bisection did not reach the requested margin")


def sample_one(spec: ConeSpec, rng, near_boundary=False, max_tries=10_000):
    for _ in range(max_tries):
        x = rng.standard_normal(spec.n) + 1.0
        if in_gamma_k(x, spec.k):
            if near_boundary:
                x = _push_to_boundary(x, spec.k)
            return CurvatureVector.sorted(x)
    raise SamplerExhausted(f"no Gamma_{spec.k} sample in {max_tries} draws (n={spec.n})")


def sample_gamma_k(spec: ConeSpec, count, seed, near_boundary_fraction=0.0, max_tries=10_000):
    """Deterministic list of ``count`` sorted vectors in ``Gamma_k``.

    The first ``round(count * near_boundary_fraction)`` samples are pushed
    toward ``sigma_k = 0`` until their ``gamma_margin`` drops below 1e-3.
    Sample ``j`` depends only on ``(seed, j)``.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    if not 0.0 <= near_boundary_fraction <= 1.0:
        raise ValueError("near_boundary_fraction must lie in [0, 1]")
    n_boundary = int(round(count * near_boundary_fraction))
    sid = stream_id(f"gamma:{spec.n}:{spec.k}")
    return [
        sample_one(spec, trial_rng(seed, j, sid), near_boundary=j < n_boundary, max_tries=max_tries)
        for j in range(count)
    ]
