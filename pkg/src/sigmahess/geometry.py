"""Principal curvatures of graphs ``x_{n+1} = u(x)`` from their 2-jets.

Orientation conventions:

* Euclidean graphs use the upward unit normal (positive last component). With
  this choice a convex function has positive curvatures, so the upper
  hemisphere ``u = sqrt(1 - |x|^2)`` has kappa = (-1, ..., -1) and the lower
  one has kappa = (1, ..., 1).
* Minkowski (spacelike) graphs use the future-directed normal; the hyperboloid
  ``u = sqrt(1 + |x|^2)`` has kappa = (1, ..., 1).

The shape operator ``g^{-1} h`` is diagonalized through the symmetric form
``L^{-1} h L^{-T}`` with ``g = L L^T``, so eigenvalues are real by
construction.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NonUnitNormalError, NotSpacelikeError
from .symfunc import CurvatureVector, eigvals_sym

SPACELIKE_TOL = 1e-8
UNIT_TOL = 1e-12
SYM_TOL = 1e-12


class Signature(str, Enum):
    EUCLIDEAN = "euclidean"
    MINKOWSKI = "minkowski"


@dataclass(frozen=True)
class GraphJet:
    """Value, gradient and Hessian of ``u`` at ``point``."""

    point: np.ndarray
    u: float
    du: np.ndarray
    d2u: np.ndarray

    def __post_init__(self):
        du = np.asarray(self.du, dtype=float).reshape(-1)
        d2u = np.asarray(self.d2u, dtype=float)
        n = du.size
        if d2u.shape != (n, n):
            raise ValueError(f"d2u must be {n}x{n}, got {d2u.shape}")
        scale = max(1.0, float(np.max(np.abs(d2u))))
        if np.max(np.abs(d2u - d2u.T)) > SYM_TOL * scale:
            raise ValueError("d2u is not symmetric")
        point = np.asarray(self.point, dtype=float).reshape(-1)
        if point.size != n:
            raise ValueError("point and du differ in dimension")
        object.__setattr__(self, "point", point)
        object.__setattr__(self, "du", du)
        object.__setattr__(self, "d2u", 0.5 * (d2u + d2u.T))
        object.__setattr__(self, "u", float(self.u))

    @property
    def n(self):
        return self.du.size

    @classmethod
    def at_origin(cls, du, d2u, u=0.0):
        du = np.asarray(du, dtype=float)
        return cls(np.zeros(du.size), u, du, d2u)


@dataclass(frozen=True)
class CurvatureData:
    kappa: CurvatureVector
    signature: Signature

    @property
    def values(self):
        return self.kappa.values


def spacelike_margin(du) -> float:
    """``1 - |du|``; positive iff the graph is strictly spacelike there."""
    return 1.0 - float(np.linalg.norm(np.asarray(du, dtype=float)))


def _shape_eigs(g, h):
    L = np.linalg.cholesky(g)
    Linv = np.linalg.inv(L)
    S = Linv @ h @ Linv.T
    return eigvals_sym(0.5 * (S + S.T))


def _check_spacelike(du):
    if spacelike_margin(du) <= SPACELIKE_TOL:
        raise NotSpacelikeError(f"|du| = {np.linalg.norm(du):.12g} is not below 1 - {SPACELIKE_TOL:g}")


def minkowski_forms(jet: GraphJet):
    """``(g, h)`` with ``g = I - du du^T``, ``h = d2u / sqrt(1 - |du|^2)``."""
    _check_spacelike(jet.du)
    p = jet.du
    g = np.eye(jet.n) - np.outer(p, p)
    h = jet.d2u / np.sqrt(1.0 - p @ p)
    return g, h


def euclidean_forms(jet: GraphJet):
    """``(g, h)`` with ``g = I + du du^T``, ``h = d2u / sqrt(1 + |du|^2)``."""
    p = jet.du
    g = np.eye(jet.n) + np.outer(p, p)
    h = jet.d2u / np.sqrt(1.0 + p @ p)
    return g, h


def curvatures_minkowski(jet: GraphJet) -> CurvatureData:
    """Principal curvatures of a spacelike graph in Minkowski space.

    Raises
    ------
    NotSpacelikeError
        If ``|du| > 1 - 1e-8``.
    """
    g, h = minkowski_forms(jet)
    return CurvatureData(CurvatureVector.sorted(_shape_eigs(g, h)), Signature.MINKOWSKI)


def curvatures_euclidean(jet: GraphJet) -> CurvatureData:
    """Principal curvatures of a Euclidean graph (upward normal)."""
    g, h = euclidean_forms(jet)
    return CurvatureData(CurvatureVector.sorted(_shape_eigs(g, h)), Signature.EUCLIDEAN)


def curvatures(jet: GraphJet, signature="minkowski") -> CurvatureData:
    if Signature(signature) is Signature.MINKOWSKI:
        return curvatures_minkowski(jet)
    return curvatures_euclidean(jet)


def upward_normal(du):
    """Unit upward normal ``(-du, 1) / sqrt(1 + |du|^2)`` of a Euclidean graph."""
    du = np.asarray(du, dtype=float)
    v = np.append(-du, 1.0)
    return v / np.linalg.norm(v)


def support_function(position, normal) -> float:
    """Euclidean ``<X, nu>`` for a unit normal ``nu``."""
    X = np.asarray(position, dtype=float).reshape(-1)
    nu = np.asarray(normal, dtype=float).reshape(-1)
    if X.shape != nu.shape:
        raise ValueError("position and normal differ in dimension")
    if abs(float(np.linalg.norm(nu)) - 1.0) > UNIT_TOL:
        raise NonUnitNormalError(f"|normal| = {np.linalg.norm(nu)!r}")
    return float(X @ nu)


def hyperboloid_jet(x):
    """2-jet of ``u = sqrt(1 + |x|^2)`` at ``x``."""
    x = np.asarray(x, dtype=float)
    u = float(np.sqrt(1.0 + x @ x))
    du = x / u
    d2u = (np.eye(x.size) - np.outer(x, x) / u ** 2) / u
    return GraphJet(x, u, du, d2u)


def sphere_cap_jet(x, lower=False):
    """2-jet of ``u = +-sqrt(1 - |x|^2)`` at ``|x| < 1``."""
    x = np.asarray(x, dtype=float)
    w = float(np.sqrt(1.0 - x @ x))
    du = -x / w
    d2u = -(np.eye(x.size) + np.outer(x, x) / w ** 2) / w
    if lower:
        return GraphJet(x, -w, -du, -d2u)
    return GraphJet(x, w, du, d2u)
