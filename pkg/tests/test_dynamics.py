import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hkdyn import (
    UNBOUNDED,
    InfluenceFunction,
    NeighborhoodSpec,
    OpinionState,
    hk_step,
    neighbors,
    range_stats,
    weighted_step,
)

from conftest import random_state

opinion_lists = st.lists(st.floats(-2, 2, allow_nan=False), min_size=1, max_size=40)
gammas = st.floats(0.01, 1.0)


def test_state_invariants():
    with pytest.raises(ValueError):
        OpinionState(0, [])
    with pytest.raises(ValueError):
        OpinionState(0, [0.1, math.nan])
    s = OpinionState(0, [0.1, 0.2])
    with pytest.raises(ValueError):
        s.opinions[0] = 1.0


def test_neighbors_examples():
    s = OpinionState(0, [0, 0.15, 0.31])
    g = NeighborhoodSpec(0.2)
    assert neighbors(s, 1, g) == {0, 1, 2}
    assert neighbors(s, 0, g) == {0, 1}
    assert neighbors(s, 2, UNBOUNDED) == {0, 1, 2}
    with pytest.raises(IndexError):
        neighbors(s, 3, g)


def test_neighbors_closed_ball():
    s = OpinionState(0, [0.0, 0.25])
    assert neighbors(s, 0, NeighborhoodSpec(0.25)) == {0, 1}


def test_hk_step_examples():
    out = hk_step(OpinionState(0, [0, 0.1, 0.5]), NeighborhoodSpec(0.2))
    np.testing.assert_allclose(out.opinions, [0.05, 0.05, 0.5], atol=1e-15)
    assert out.step == 1
    same = hk_step(OpinionState(0, [0.3, 0.3, 0.3]), NeighborhoodSpec(0.5))
    np.testing.assert_array_equal(same.opinions, [0.3, 0.3, 0.3])
    pair = hk_step(OpinionState(0, [0.2, 0.35]), NeighborhoodSpec(0.2))
    assert pair.opinions[0] == pair.opinions[1] == pytest.approx(0.275)


def test_hk_step_needs_finite_gamma():
    with pytest.raises(ValueError):
        hk_step(OpinionState(0, [0.0]), UNBOUNDED)


def test_weighted_step_example():
    out = weighted_step(OpinionState(0, [0, 0.1]), NeighborhoodSpec(0.2), InfluenceFunction.exp_sq())
    # Hand evaluation: each agent moves by e^{-0.01} * 0.1 / 2 toward the other.
    pull = 0.05 * math.exp(-0.01)
    np.testing.assert_allclose(out.opinions, [pull, 0.1 - pull], rtol=0, atol=1e-16)
    np.testing.assert_allclose(out.opinions, [0.049502, 0.050498], atol=1e-6)


def test_weighted_no_interaction_beyond_gamma():
    s = OpinionState(0, [0, 0.5])
    out = weighted_step(s, NeighborhoodSpec(0.2), InfluenceFunction.exp_abs())
    np.testing.assert_array_equal(out.opinions, s.opinions)


def test_weighted_divides_by_count_not_weight_sum():
    s = OpinionState(0, [0.0, 0.2])
    f = InfluenceFunction.table([0, 1], [1, 0])  # f(0.2) = 0.8
    out = weighted_step(s, NeighborhoodSpec(0.5), f)
    assert out.opinions[0] == pytest.approx(0.8 * 0.2 / 2)


@pytest.mark.parametrize("seed", range(20))
def test_weighted_constant_one_is_hk_bit_exact(seed):
    s = random_state(seed)
    g = NeighborhoodSpec(float(np.random.default_rng(seed).uniform(0.01, 0.5)))
    assert np.array_equal(weighted_step(s, g, InfluenceFunction.constant_one()).opinions, hk_step(s, g).opinions)


def test_range_stats():
    assert range_stats(OpinionState(0, [0.2, 0.7, 0.5])) == (0.2, 0.7)
    assert range_stats(OpinionState(0, [0.4])) == (0.4, 0.4)


@settings(max_examples=200, deadline=None)
@given(opinion_lists, gammas, st.sampled_from(["EXP_SQ", "EXP_ABS", "EXP_SQRT", "CONSTANT_ONE"]))
def test_one_step_monotone_extremes(xs, gamma, fam):
    s = OpinionState(0, xs)
    out = weighted_step(s, NeighborhoodSpec(gamma), InfluenceFunction(fam))
    m0, M0 = range_stats(s)
    m1, M1 = range_stats(out)
    assert m1 >= m0 - 1e-12
    assert M1 <= M0 + 1e-12


@settings(max_examples=100, deadline=None)
@given(opinion_lists)
def test_unbounded_positive_influence_contracts_range(xs):
    s = OpinionState(0, xs)
    out = weighted_step(s, UNBOUNDED, InfluenceFunction.exp_abs())
    m0, M0 = range_stats(s)
    m1, M1 = range_stats(out)
    if M0 - m0 > 1e-9:
        assert M1 - m1 < M0 - m0


def test_step_does_not_mutate_input():
    s = OpinionState(0, [0.1, 0.2, 0.25])
    before = s.opinions.copy()
    hk_step(s, NeighborhoodSpec(0.2))
    np.testing.assert_array_equal(s.opinions, before)
