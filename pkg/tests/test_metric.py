import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aeann.errors import InvalidInputError, InvalidParameterError
from aeann.metric import (BoundedInstanceParams, Dataset, is_beta_bounded, lp_distance, lp_norm,
                          pairwise_distance_stats)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_lp_norm_examples():
    assert lp_norm([0, 0, 0], 4) == 0
    assert lp_norm([3, 4], 2) == 5
    # 2**(1/4) to 40 digits from mpmath
    assert lp_norm([1, 1], 4) == pytest.approx(1.189207115002721066717, rel=1e-15)


def test_lp_norm_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        lp_norm([1.0, np.nan], 3)
    with pytest.raises(InvalidInputError):
        lp_norm([np.inf], 3)


def test_lp_distance_examples():
    x = np.array([0.3, -1.2, 5.0])
    assert lp_distance(x, x, 3) == 0
    assert lp_distance([0, 0], [1, 1], 4) == pytest.approx(2 ** 0.25, rel=1e-15)
    assert lp_distance([0, 0], [3, 4], 2) == 5


def test_lp_distance_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        lp_distance([1, 2], [1, 2, 3], 2)


def test_metric_axioms_random_triples():
    rng = np.random.default_rng(0)
    for p in (2, 3, 4, 8):
        for _ in range(250):
            x, y, z = rng.standard_normal((3, 6)) * 10.0 ** rng.integers(-2, 3, size=(3, 1))
            dxy, dyx = lp_distance(x, y, p), lp_distance(y, x, p)
            assert dxy >= 0
            assert dxy == dyx
            assert lp_distance(x, z, p) <= (dxy + lp_distance(y, z, p)) * (1 + 1e-12)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 8), elements=finite),
       st.floats(-1e3, 1e3, allow_nan=False), st.sampled_from([2.0, 3.0, 4.0, 8.0]))
def test_norm_homogeneity(x, t, p):
    # products in the subnormal range lose the information the identity needs
    assume(np.all((np.abs(t * x) >= 1e-290) | (x == 0) | (t == 0)))
    assert lp_norm(t * x, p) == pytest.approx(abs(t) * lp_norm(x, p), rel=1e-12, abs=1e-300)


def test_norm_zero_iff_zero():
    assert lp_norm([0.0, 1e-300], 2) > 0


def _brute_stats(X, p):
    n = len(X)
    ds = [lp_distance(X[i], X[j], p) for i, j in itertools.product(range(n), repeat=2) if i != j]
    return min(ds), max(ds), math.fsum(d * d for d in ds)


def test_pairwise_stats_examples():
    s = pairwise_distance_stats(Dataset([[1.0, 2.0], [1.0, 2.0]], 4))
    assert s == {"min": 0.0, "max": 0.0, "sum_sq": 0.0}
    s = pairwise_distance_stats(Dataset([[0.0, 0.0], [1.0, 1.0]], 4))
    assert s["min"] == pytest.approx(2 ** 0.25, rel=1e-15)
    assert s["max"] == pytest.approx(2 ** 0.25, rel=1e-15)
    assert s["sum_sq"] == pytest.approx(2 * math.sqrt(2), rel=1e-15)


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0, 8.0])
def test_pairwise_stats_match_double_loop(p, rng):
    X = rng.standard_normal((10, 5)) * 3
    lo, hi, sq = _brute_stats(X, p)
    s = pairwise_distance_stats(Dataset(X, p))
    assert s["min"] == pytest.approx(lo, rel=1e-14)
    assert s["max"] == pytest.approx(hi, rel=1e-14)
    assert s["sum_sq"] == pytest.approx(sq, rel=1e-10)


def test_pairwise_stats_include_self():
    s = pairwise_distance_stats(Dataset([[0.0], [2.0]], 2), include_self=True)
    assert s["min"] == 0 and s["max"] == 2


def test_pairwise_stats_needs_two_points():
    with pytest.raises(InvalidInputError):
        pairwise_distance_stats(Dataset([[1.0, 2.0]], 2))


def test_beta_bounded_examples(small_instance):
    bp = BoundedInstanceParams(1.0, 10.0, 18.0)
    assert not is_beta_bounded(Dataset([[0.0, 0], [0, 0], [5, 0]], 2), bp)
    assert is_beta_bounded(Dataset([[0.0, 0], [1.0, 0]], 2), bp)
    assert is_beta_bounded(Dataset([[0.0, 0], [180.0, 0]], 2), bp)
    assert not is_beta_bounded(Dataset([[0.0, 0], [180.0001, 0]], 2), bp)
    inst = small_instance
    P = inst.dataset
    bp = BoundedInstanceParams(1.0, inst.c_approx, inst.beta)
    assert is_beta_bounded(P, bp)
    lo, hi, _ = _brute_stats(P.points[:60], P.p_exp)
    assert 1.0 <= lo and hi <= bp.max_distance


def test_bounded_params_validation():
    for args in [(0, 2, 1), (1, 1, 1), (1, 2, 0.5)]:
        with pytest.raises(InvalidParameterError):
            BoundedInstanceParams(*args)


def test_dataset_validation():
    with pytest.raises(InvalidParameterError):
        Dataset(np.zeros((3, 2)), 1.5)
    with pytest.raises(InvalidInputError):
        Dataset(np.array([[0.0, np.nan]]), 3)
    with pytest.raises(InvalidInputError):
        Dataset(np.zeros(4), 3)
