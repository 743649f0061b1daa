"""Unordered Q-tuples: metric, barycenter, retraction, collapse, geodesics."""
import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aqlab.aq import (AqPoint, HalfAqPoint, card, collapse, diameter_separation, eta, geodesic_interpolate,
                      matched_sq, metric_g, min_sep, optimal_matching, retract, support_dist, with_zero)

coords = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def same_q_pair(draw, max_q=5, max_n=3):
    q = draw(st.integers(1, max_q))
    n = draw(st.integers(1, max_n))
    a = draw(arrays(float, (q, n), elements=coords))
    b = draw(arrays(float, (q, n), elements=coords))
    return a, b


def brute(a, b):
    return math.sqrt(min(((a - b[list(p)]) ** 2).sum() for p in itertools.permutations(range(len(a)))))


# ----------------------------------------------------------------- examples

def test_metric_identity_case():
    assert metric_g(AqPoint.from_array([0.0, 0.0]), AqPoint.from_array([0.0, 0.0])) == 0.0


def test_metric_two_pairings():
    s = AqPoint.from_array([0.0, 2.0])
    t = AqPoint.from_array([1.0, 3.0])
    assert metric_g(s, t) == pytest.approx(math.sqrt(2), abs=1e-15)


def test_metric_matches_permutation_enumeration():
    rng = np.random.default_rng(7)
    for _ in range(50):
        a, b = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
        assert metric_g(a, b) == pytest.approx(brute(a, b), abs=1e-12)


def test_metric_cardinality_mismatch():
    with pytest.raises(ValueError, match="cardinality mismatch"):
        metric_g(AqPoint.from_array([0.0]), AqPoint.from_array([0.0, 1.0]))


def test_barycenter_examples():
    assert eta(AqPoint.from_array([1.0, 3.0])) == pytest.approx([2.0])
    assert eta(AqPoint.from_pairs([([1.5, -2.0], 4)])) == pytest.approx([1.5, -2.0])
    assert eta(AqPoint.from_array([[0, 0], [3, 0], [0, 3]])) == pytest.approx([1.0, 1.0])


def test_diameter_separation_examples():
    assert diameter_separation(AqPoint.from_array([0.0, 0.0, 3.0])) == (3.0, 3.0)
    assert diameter_separation(AqPoint.from_pairs([([2.0], 3)])) == (0.0, math.inf)
    assert diameter_separation(AqPoint.from_array([0.0, 1.0, 5.0])) == (5.0, 1.0)


def test_support_distance_examples():
    assert support_dist(AqPoint.from_array([0.0, 4.0]), 1.0) == 1.0
    assert support_dist(AqPoint.from_pairs([([1.0, 2.0], 3)]), [1.0, 2.0]) == 0.0


def test_retract_inside_ball_is_identity():
    t = AqPoint.from_array([0.0, 4.0])
    s = AqPoint.from_array([0.1, 4.2])
    assert retract(t, 0.5, s) == s
    assert retract(t, 0.5, t) == t


def test_retract_concrete_case():
    t = AqPoint.from_array([0.0, 4.0])
    o = retract(t, 0.5, AqPoint.from_array([0.0, 2.0]))
    assert metric_g(o, t) <= 0.5 + 1e-15
    assert support_dist(o, 0.0) == 0.0


def test_retract_radius_too_large():
    with pytest.raises(ValueError, match="radius too large for separation"):
        retract(AqPoint.from_array([0.0, 4.0]), 1.0, AqPoint.from_array([0.0, 2.0]))


def test_collapse_merges_close_pair():
    t = AqPoint.from_array([0.0, 0.01, 1.0])
    S, beta = collapse(t, 0.1)
    assert list(S.mult) == [2, 1]
    assert S.pts[0, 0] == pytest.approx(0.005)
    assert diameter_separation(S)[1] == pytest.approx(0.995)
    assert metric_g(S, t) <= 0.1 * diameter_separation(S)[1]
    assert beta > 0 and diameter_separation(S)[1] >= beta * diameter_separation(t)[0] - 1e-15


def test_collapse_separated_returns_input():
    t = AqPoint.from_array([0.0, 1.0, 2.5])
    S, beta = collapse(t, 0.1)
    assert S == t
    assert beta == pytest.approx(1.0 / 2.5)


def test_collapse_nothing_to_do():
    with pytest.raises(ValueError, match="nothing to collapse"):
        collapse(AqPoint.from_pairs([([1.0], 3)]), 0.1)


def test_geodesic_examples():
    s, t = AqPoint.from_array([0.0, 4.0]), AqPoint.from_array([1.0, 5.0])
    assert geodesic_interpolate(s, t, 0.0) == s
    assert geodesic_interpolate(s, t, 1.0) == t
    assert geodesic_interpolate(AqPoint.from_array([0.0]), AqPoint.from_array([2.0]), 0.5) == AqPoint.from_array([1.0])
    assert geodesic_interpolate(s, t, 0.5) == AqPoint.from_array([0.5, 4.5])


def test_half_point_cardinality():
    HalfAqPoint(AqPoint.from_array([0.0, 1.0]), AqPoint.from_array([2.0]))
    with pytest.raises(ValueError):
        HalfAqPoint(AqPoint.from_array([0.0]), AqPoint.from_array([2.0]))


def test_from_pairs_rejects_nonpositive_multiplicity():
    with pytest.raises(ValueError):
        AqPoint.from_pairs([([0.0], 0)])


def test_batch_helpers():
    V = np.array([[[0.0], [0.0], [1.0]], [[0.0], [2.0], [4.0]]])
    assert list(card(V, 1e-12)) == [2, 3]
    assert list(min_sep(V)) == [0.0, 2.0]
    W = with_zero(np.ones((4, 2, 3)))
    assert W.shape == (4, 3, 3) and not W[:, 2].any()


# ------------------------------------------------------------- properties

@given(same_q_pair())
def test_metric_equals_brute_force(pair):
    a, b = pair
    assert metric_g(a, b) == pytest.approx(brute(a, b), rel=1e-9, abs=1e-9)


@given(same_q_pair())
def test_batch_matching_equals_assignment(pair):
    a, b = pair
    assert math.sqrt(float(matched_sq(a[None], b[None])[0])) == pytest.approx(metric_g(a, b), rel=1e-9, abs=1e-9)


@given(same_q_pair(), arrays(float, (5, 3), elements=coords))
def test_metric_axioms(pair, c):
    a, b = pair
    c = c[: a.shape[0], : a.shape[1]]
    assert metric_g(a, a) == 0.0
    assert metric_g(a, b) == pytest.approx(metric_g(b, a), abs=1e-12)
    assert metric_g(a, c) <= metric_g(a, b) + metric_g(b, c) + 1e-9


@given(same_q_pair())
def test_barycenter_lipschitz(pair):
    a, b = pair
    q = a.shape[0]
    assert np.linalg.norm(eta(a) - eta(b)) <= metric_g(a, b) / math.sqrt(q) + 1e-9


@given(same_q_pair(), arrays(float, (3,), elements=coords))
def test_support_distance_is_one_lipschitz_in_the_metric(pair, x):
    a, b = pair
    x = x[: a.shape[1]]
    A, B = AqPoint.from_array(a), AqPoint.from_array(b)
    assert abs(support_dist(A, x) - support_dist(B, x)) <= metric_g(a, b) + 1e-9


@given(same_q_pair(), st.floats(0, 1))
def test_geodesic_splits_distance(pair, lam):
    a, b = pair
    mid = geodesic_interpolate(a, b, lam)
    d = metric_g(a, b)
    assert metric_g(a, mid) == pytest.approx(lam * d, rel=1e-7, abs=1e-7)
    assert metric_g(mid, b) == pytest.approx((1 - lam) * d, rel=1e-7, abs=1e-7)


@given(same_q_pair())
def test_optimal_matching_is_a_permutation(pair):
    a, b = pair
    sigma, cost = optimal_matching(a, b)
    assert sorted(sigma) == list(range(len(a)))
    assert cost == pytest.approx(((a - b[sigma]) ** 2).sum(), abs=1e-9)


@given(arrays(float, (4, 2), elements=coords))
def test_serialization_round_trip(a):
    t = AqPoint.from_array(a)
    assert AqPoint.from_json(t.to_json()) == t
    assert t.q == 4 and (t + t).q == 8


@given(st.lists(st.integers(-6, 6), min_size=2, max_size=4, unique=True),
       arrays(float, (4,), elements=st.floats(-1, 1)), st.floats(0.05, 0.95))
def test_retraction_contract(centers, noise, frac):
    t = AqPoint.from_array(3.0 * np.array(centers, dtype=float))
    _, sep = diameter_separation(t)
    r = frac * sep / 4
    s = AqPoint.from_array(t.expanded()[:, 0] + noise[: t.q] * sep)
    s2 = AqPoint.from_array(t.expanded()[:, 0] - noise[: t.q] * sep / 3)
    o = retract(t, r, s)
    assert metric_g(o, t) <= r + 1e-12
    if metric_g(s, t) <= r:
        assert o == s
    o2 = retract(t, r, s2)
    assert metric_g(o, o2) <= metric_g(s, s2) + 1e-9
