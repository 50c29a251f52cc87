import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coupledvi import sets as cs


def all_sets():
    return [
        cs.whole_space(2),
        cs.box([-1.0, -0.5], [1.0, 2.0]),
        cs.ball([0.5, -0.5], 1.5),
        cs.weighted_linf([2.0, 0.0]),
        cs.halfspaces([[1.0, 1.0], [-1.0, 0.0]], [1.0, 2.0]),
        cs.product(cs.box([0.0], [1.0]), cs.ball([0.0], 3.0)),
        cs.halfspaces([[1.0, 1.0]], [1.0]).restrict_to_ball(2.0),
    ]


def test_projection_examples():
    np.testing.assert_allclose(cs.box([-1, -1], [1, 1]).project([2.0, 0.5]), [1.0, 0.5])
    np.testing.assert_allclose(cs.ball([0, 0], 1.0).project([3.0, 4.0]), [0.6, 0.8])
    np.testing.assert_allclose(cs.weighted_linf([2.0]).project([-5.0]), [-2.0])


def test_invalid_sets_rejected():
    with pytest.raises(ValueError):
        cs.box([1.0], [0.0])
    with pytest.raises(ValueError):
        cs.weighted_linf([-1.0])
    with pytest.raises(cs.EmptySetError):
        cs.halfspaces([[1.0], [-1.0]], [-1.0, -1.0])


def test_boundedness():
    assert not cs.whole_space(3).is_bounded
    assert cs.box([0], [1]).is_bounded and cs.weighted_linf([0.0]).is_bounded
    assert not cs.halfspaces([[1.0, 0.0]], [0.0]).is_bounded
    assert cs.whole_space(2).restrict_to_ball(1.0).is_bounded


points = st.lists(st.floats(-50, 50, allow_nan=False), min_size=2, max_size=2)


@settings(max_examples=80, deadline=None)
@given(points, points, st.integers(0, 6))
def test_projection_nonexpansive_and_idempotent(x, y, k):
    S = all_sets()[k]
    x, y = np.array(x), np.array(y)
    px, py = S.project(x), S.project(y)
    assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-8
    assert S.contains(px)
    np.testing.assert_allclose(S.project(px), px, atol=1e-9)


def test_projection_batched(rng):
    S = cs.ball([0.0, 0.0], 1.0)
    X = rng.standard_normal((5, 3, 2)) * 3
    P = S.project(X)
    assert P.shape == X.shape
    np.testing.assert_allclose(P[2, 1], S.project(X[2, 1]))


def test_samples_are_feasible(rng):
    for S in all_sets():
        pts = S.sample(rng, 50, radius=4.0)
        assert pts.shape == (50, 2)
        assert np.all(S.contains(pts))
        assert np.all(S.contains(S.extremes(4.0)))
