import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.special import logsumexp

from mta.errors import NotInteriorError, ValidationError
from mta.shocks import DiscreteShocks, GumbelIID, discretize
from mta.surplus import (
    EULER_GAMMA,
    argmax_choice,
    check_ccp,
    choice_probs,
    count_ties,
    logit_ccp,
    logit_gstar,
    logit_oracle_w0,
    logit_surplus,
    surplus_value,
)

finite = st.floats(-20, 20, allow_nan=False, allow_infinity=False)


@pytest.fixture(scope="module")
def gumbel_big():
    return discretize(GumbelIID(), 100_000, 42)


def test_single_zero_shock_gives_max():
    assert surplus_value([0.3, -2.0, 1.7], DiscreteShocks(np.zeros((1, 3)))) == 1.7


def test_logit_surplus_at_zero(gumbel_big):
    assert surplus_value([0, 0], gumbel_big) == pytest.approx(np.log(2) + EULER_GAMMA, abs=0.02)


def test_logit_choice_probs_at_zero(gumbel_big):
    np.testing.assert_allclose(choice_probs([0, 0], gumbel_big), [0.5, 0.5], atol=0.01)


@pytest.mark.parametrize("w, eps, expected", [((1, 0), (0, 0), 0), ((0, 0), (0, 0), 0), ((0, 2), (1, 0), 1)])
def test_argmax_examples(w, eps, expected):
    assert argmax_choice(w, eps) == expected


def test_dominant_payoff():
    sh = DiscreteShocks(np.random.default_rng(0).uniform(-1, 1, (50, 2)))
    np.testing.assert_array_equal(choice_probs([1e6, 0], sh), [1.0, 0.0])


def test_dimension_mismatch():
    sh = DiscreteShocks(np.zeros((2, 3)))
    with pytest.raises(ValidationError):
        surplus_value([0, 0], sh)
    with pytest.raises(ValidationError):
        argmax_choice([0, 0, 0], [0, 0])


def test_ties_counted_and_broken_low():
    sh = DiscreteShocks(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.5]]))
    assert count_ties([0, 0], sh) == 1
    np.testing.assert_array_equal(choice_probs([0, 0], sh), [2 / 3, 1 / 3])


def test_logit_oracle_examples():
    np.testing.assert_allclose(logit_oracle_w0([0.5, 0.5]), [-1.27036, -1.27036], atol=1e-5)
    third = logit_oracle_w0(np.full(3, 1 / 3))
    np.testing.assert_allclose(third, -np.log(3) - EULER_GAMMA, atol=1e-15)
    np.testing.assert_allclose(third, -1.67584, atol=5e-5)
    with pytest.raises(NotInteriorError, match="CCP not interior"):
        logit_oracle_w0([1.0, 0.0])


def test_logit_gstar_examples():
    assert logit_gstar([0.5, 0.5]) == pytest.approx(np.log(0.5) - EULER_GAMMA)
    assert logit_gstar(np.full(3, 1 / 3)) == pytest.approx(-np.log(3) - EULER_GAMMA)
    with pytest.raises(NotInteriorError):
        logit_gstar([1.0, 0.0])


@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6))
def test_logit_oracle_closes_loop(raw):
    p = np.array(raw) / np.sum(raw)
    p[-1] = 1 - p[:-1].sum()
    w0 = logit_oracle_w0(p)
    assert abs(logit_surplus(w0)) <= 1e-12
    np.testing.assert_allclose(logit_ccp(w0), p, atol=1e-12)
    # independent closed form of the conjugate
    assert logit_gstar(p) == pytest.approx(float(p @ w0) - logit_surplus(w0), abs=1e-12)


def test_check_ccp():
    check_ccp([0.25, 0.75])
    with pytest.raises(ValidationError):
        check_ccp([0.5, 0.6])
    with pytest.raises(ValidationError):
        check_ccp([-0.1, 1.1])
    with pytest.raises(NotInteriorError):
        check_ccp([0.0, 1.0], interior=True)


def shock_sets(max_S=30, max_m=4):
    return st.tuples(st.integers(1, max_S), st.integers(2, max_m), st.integers(0, 2**31)).map(
        lambda t: DiscreteShocks(np.random.default_rng(t[2]).normal(size=(t[0], t[1])))
    )


@settings(max_examples=60, deadline=None)
@given(sh=shock_sets(), seed=st.integers(0, 2**31), t=st.floats(0, 1))
def test_surplus_is_convex(sh, seed, t):
    rng = np.random.default_rng(seed)
    w1, w2 = rng.normal(size=(2, sh.n_actions)) * 3
    mid = surplus_value(t * w1 + (1 - t) * w2, sh)
    assert mid <= t * surplus_value(w1, sh) + (1 - t) * surplus_value(w2, sh) + 1e-12


@settings(max_examples=60, deadline=None)
@given(sh=shock_sets(), seed=st.integers(0, 2**31), K=st.sampled_from([-3.0, -0.5, 0.25, 1.0, 8.0]))
def test_translation(sh, seed, K):
    # dyadic shifts keep the floating-point sums exact
    w = np.round(np.random.default_rng(seed).normal(size=sh.n_actions), 3)
    pts = np.round(sh.points * 8) / 8
    d = DiscreteShocks(pts)
    assert surplus_value(w + K, d) - surplus_value(w, d) == pytest.approx(K, abs=1e-12)
    np.testing.assert_array_equal(choice_probs(w + K, d), choice_probs(w, d))


@settings(max_examples=40, deadline=None)
@given(sh=shock_sets(max_S=20), seed=st.integers(0, 2**31))
def test_gradient_matches_choice_probs(sh, seed):
    w = np.random.default_rng(seed).normal(size=sh.n_actions)
    v = sh.points + w
    top2 = np.sort(v, axis=1)[:, -2:]
    assume((top2[:, 1] - top2[:, 0]).min() > 1e-4)
    h = 1e-6
    grad = np.empty(sh.n_actions)
    for y in range(sh.n_actions):
        e = np.zeros(sh.n_actions)
        e[y] = h
        grad[y] = (surplus_value(w + e, sh) - surplus_value(w - e, sh)) / (2 * h)
    np.testing.assert_allclose(grad, choice_probs(w, sh), atol=1e-8)


@given(arrays(float, st.integers(2, 6), elements=finite))
def test_logit_surplus_formula(w):
    assert logit_surplus(w) == pytest.approx(logsumexp(w) + EULER_GAMMA)
