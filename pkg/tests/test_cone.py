import numpy as np
import pytest
from hypothesis import given, strategies as st

from sigmahess.cone import (ConeSpec, gamma_margin, in_gamma_k, min_eig_ratio_bound,
                            sample_gamma_k)
from sigmahess.errors import NotInConeError


def test_membership_examples():
    assert in_gamma_k((1, 1, 1), 3)
    assert in_gamma_k((3, 2, 1, -0.5), ConeSpec(4, 3))
    assert not in_gamma_k((3, 2, 0, -1), 3)


def test_margin_examples():
    assert gamma_margin((1, 1, 1), 2) == pytest.approx(1.0)
    assert gamma_margin((-1, -1, -1), 1) < 0
    # sigma_2 = 0 with sigma_1 > 0: (1, 1, -1/2)
    assert gamma_margin((1.0, 1.0, -0.5), 2) == pytest.approx(0.0, abs=1e-15)
    assert not in_gamma_k((1.0, 1.0, -0.5), 2)
    assert gamma_margin((0.0, 0.0), 1) == 0.0


def test_cone_spec_validation():
    with pytest.raises(ValueError):
        ConeSpec(3, 4)
    with pytest.raises(ValueError):
        in_gamma_k((1, 2), ConeSpec(3, 2))


def test_ratio_bound_examples():
    rb = min_eig_ratio_bound((3, 2, 1, -0.5))
    assert rb.ratio == pytest.approx(1 / 6) and rb.holds and not rb.equality
    rb = min_eig_ratio_bound((1, 1, 1, 1))
    assert rb.ratio == -1.0 and rb.holds


def test_ratio_bound_rejects_bad_input():
    with pytest.raises(NotInConeError):
        min_eig_ratio_bound((1, 2, 3))
    with pytest.raises(NotInConeError):
        min_eig_ratio_bound((3, 2, 0, -1))
    with pytest.raises(NotInConeError):
        min_eig_ratio_bound((0, 0, -1))


def test_sampler_examples():
    spec = ConeSpec(5, 4)
    xs = sample_gamma_k(spec, 10, 7)
    assert len(xs) == 10 and all(in_gamma_k(x, spec) for x in xs)
    assert all(x.sorted_desc for x in xs)
    again = sample_gamma_k(spec, 10, 7)
    assert all(np.array_equal(a.values, b.values) for a, b in zip(xs, again))
    edge = sample_gamma_k(spec, 20, 3, near_boundary_fraction=1.0)
    assert all(0 < gamma_margin(x, spec) < 1e-3 for x in edge)


def test_sampler_prefix_stable():
    spec = ConeSpec(4, 3)
    a = sample_gamma_k(spec, 5, 11)
    b = sample_gamma_k(spec, 12, 11)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))


def test_sampler_arguments():
    with pytest.raises(ValueError):
        sample_gamma_k(ConeSpec(3, 2), 0, 1)
    with pytest.raises(ValueError):
        sample_gamma_k(ConeSpec(3, 2), 3, 1, near_boundary_fraction=1.5)


@given(st.integers(0, 2 ** 32 - 1), st.integers(3, 7), st.floats(1e-3, 1e3))
def test_cone_scaling_and_shift(seed, n, t):
    spec = ConeSpec(n, n - 1)
    x = sample_gamma_k(spec, 1, seed)[0].values
    assert in_gamma_k(t * x, spec)
    assert in_gamma_k(x + t * np.ones(n), spec)


def test_lemma_bound_on_samples():
    for n in range(3, 8):
        for cv in sample_gamma_k(ConeSpec(n, n - 1), 300, 5, near_boundary_fraction=0.2):
            assert min_eig_ratio_bound(cv).holds
