import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from sigmahess.errors import NonUnitNormalError, NotSpacelikeError
from sigmahess.geometry import (GraphJet, curvatures, hyperboloid_jet, sphere_cap_jet,
                                spacelike_margin, support_function, upward_normal)
from sigmahess.symfunc import sigma


def test_flat_graph():
    jet = GraphJet.at_origin(np.zeros(3), np.zeros((3, 3)))
    for sig in ("euclidean", "minkowski"):
        np.testing.assert_array_equal(curvatures(jet, sig).values, 0.0)


def test_paraboloid_at_origin():
    jet = GraphJet.at_origin(np.zeros(2), np.diag([2.0, 0.5]))
    np.testing.assert_allclose(curvatures(jet, "euclidean").values, [2.0, 0.5])
    np.testing.assert_allclose(curvatures(jet, "minkowski").values, [2.0, 0.5])


def test_hyperboloid_unit_curvatures():
    rng = np.random.default_rng(0)
    for _ in range(50):
        jet = hyperboloid_jet(rng.uniform(-3, 3, 3))
        k = curvatures(jet, "minkowski").values
        np.testing.assert_allclose(k, 1.0, atol=1e-12)
        assert sigma(2, k) == pytest.approx(3.0, abs=1e-11)


def test_sphere_caps():
    x = np.array([0.3, -0.2])
    np.testing.assert_allclose(curvatures(sphere_cap_jet(x), "euclidean").values, -1.0, atol=1e-13)
    np.testing.assert_allclose(curvatures(sphere_cap_jet(x, lower=True), "euclidean").values,
                               1.0, atol=1e-13)


def test_not_spacelike():
    jet = GraphJet.at_origin([1.0, 0.0], np.eye(2))
    with pytest.raises(NotSpacelikeError):
        curvatures(jet, "minkowski")
    curvatures(jet, "euclidean")
    assert spacelike_margin([0.6, 0.8]) == pytest.approx(0.0)


def test_jet_validation():
    with pytest.raises(ValueError):
        GraphJet.at_origin([0.0, 0.0], [[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        GraphJet.at_origin([0.0, 0.0], np.eye(3))


def _random_jet(rng, n, max_slope):
    du = rng.standard_normal(n)
    du *= rng.uniform(0, max_slope) / np.linalg.norm(du)
    A = rng.standard_normal((n, n))
    return GraphJet.at_origin(du, A + A.T)


@pytest.mark.parametrize("sig,sgn", [("euclidean", 1.0), ("minkowski", -1.0)])
def test_generalized_eigen_oracle(sig, sgn):
    """Curvatures are the eigenvalues of the pencil (h, g)."""
    rng = np.random.default_rng(1)
    for _ in range(40):
        jet = _random_jet(rng, 4, 0.9)
        p = jet.du
        g = np.eye(4) + sgn * np.outer(p, p)
        h = jet.d2u / np.sqrt(1.0 + sgn * p @ p)
        want = np.sort(scipy.linalg.eigh(h, g, eigvals_only=True))[::-1]
        np.testing.assert_allclose(curvatures(jet, sig).values, want, atol=1e-10)


@given(st.integers(0, 2 ** 32 - 1))
def test_rotation_invariance(seed):
    rng = np.random.default_rng(seed)
    jet = _random_jet(rng, 3, 0.8)
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    rot = GraphJet.at_origin(Q @ jet.du, Q @ jet.d2u @ Q.T)
    for sig in ("euclidean", "minkowski"):
        np.testing.assert_allclose(curvatures(rot, sig).values, curvatures(jet, sig).values,
                                   atol=1e-9 * (1 + np.abs(jet.d2u).max()))


def test_support_function():
    nu = upward_normal([0.0, 0.0])
    assert support_function([1.0, 2.0, 3.0], nu) == 3.0
    x = np.array([0.3, 0.4])
    jet = sphere_cap_jet(x)
    X = np.append(x, jet.u)
    # unit sphere: position equals the outward normal, support function 1
    assert support_function(X, upward_normal(jet.du)) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(NonUnitNormalError):
        support_function([1.0, 0.0], [1.0, 1.0])
