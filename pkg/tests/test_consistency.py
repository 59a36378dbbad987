from dataclasses import replace

import numpy as np
import pytest

from msgames.consistency import (
    GroupStageGame,
    calibrate_iterative,
    check_consistency,
    compute_consistent_costs,
    group_stage_equilibrium,
)
from msgames.errors import AssumptionViolation, ContractError
from msgames.generators import GenSpec, generate
from msgames.model import build_game, flatten
from msgames.solvers import direct_linear_equilibrium


def hand_game(b_G=(4.0, 4.0)):
    # two singleton groups, v = 1 both ways; flat equilibrium x* = (2, 4)
    # (the flat benefit of an agent is its own b plus its group's b_G)
    b = np.array([2.0, 10.0]) - np.asarray(b_G)
    g = build_game([[[0], [1]]], None, np.array([[0, 1.0], [1.0, 0]]), b=b, c=1.5)
    return replace(g, utility=replace(g.utility, group_b=(np.asarray(b_G),)))


def with_group_b(g, seed):
    util = replace(g.utility, group_b=(np.random.default_rng(seed).random(g.population(2)),))
    return replace(g, utility=util)


def test_group_stage_examples():
    assert np.allclose(group_stage_equilibrium(GroupStageGame(np.zeros((2, 2)), [2, 2], [1, 1])), [1, 1])
    assert np.allclose(group_stage_equilibrium(GroupStageGame(np.zeros((1, 1)), [3.0], [1.5])), [1.0])
    V = np.array([[0, 1.0], [1.0, 0]])
    assert np.allclose(group_stage_equilibrium(GroupStageGame(V, [1, 1], [1, 1])), [1, 1])


def test_group_stage_singular():
    V = np.array([[0, 2.0], [2.0, 0]])
    with pytest.raises(AssumptionViolation, match="Assumption 1"):
        group_stage_equilibrium(GroupStageGame(V, [1, 1], [1, 1]))


def test_consistent_costs_examples():
    V = np.array([[0, 1.0], [1.0, 0]])
    assert np.allclose(compute_consistent_costs([2.0, 4.0], [[0], [1]], V, 0.0), [1, 0.25])
    assert np.allclose(compute_consistent_costs([0.5, 0.5, 1.0], [[0, 1], [2]], np.zeros((2, 2)), [2, 2]), [1, 1])
    with pytest.raises(ContractError, match="undefined for group 1"):
        compute_consistent_costs([1.0, 0.0], [[0], [1]], V, 0.0)


def test_zero_group_benefit_is_singular():
    # with b_G = 0 the aggregates are a null vector of 2 diag(c*) - V
    g = hand_game((0.0, 0.0))
    with pytest.raises(AssumptionViolation):
        check_consistency(g)


def test_hand_game_verdicts():
    g = hand_game()
    assert np.allclose(direct_linear_equilibrium(flatten(g)), [2, 4])
    v = check_consistency(g)
    assert v.consistent and v.max_gap <= 1e-10
    assert np.allclose(v.c_star, [2, 0.75])
    bad = check_consistency(g, 2 * v.c_star)
    assert not bad.consistent and bad.max_gap > 1e-8
    assert set(v.to_dict()) == {"c_star", "max_gap", "consistent"}


def test_single_group_degenerate():
    g = build_game([[[0, 1]]], None, np.zeros((1, 1)), b=[1.0, 1.0], c=1.0)
    v = check_consistency(g, c_group=[1.0])
    # group stage gives 0, the flat aggregate is 1
    assert v.group_equilibrium[0] == 0 and not v.consistent


@pytest.mark.parametrize("seed", range(4))
def test_round_trip_generated(seed):
    g = with_group_b(generate(GenSpec((6, 5), p_exist=0.4, seed=seed)), seed)
    v = check_consistency(g)
    assert v.max_gap <= 1e-10


@pytest.mark.parametrize("s1,s2", [(1, 1), (5, 5), (None, 1)])
def test_calibrate_hand_game(s1, s2):
    res = calibrate_iterative(hand_game(), s1=s1, s2=s2)
    assert res.converged
    assert np.allclose(res.c_group, [2, 0.75], atol=1e-6)
    assert np.allclose(res.x, [2, 4], atol=1e-6)


def test_calibrate_generated_limits_agree():
    g = with_group_b(generate(GenSpec((5, 4), p_exist=0.4, seed=3)), 3)
    c_star = check_consistency(g).c_star
    x_star = direct_linear_equilibrium(flatten(g))
    a = calibrate_iterative(g, 1, 1)
    b = calibrate_iterative(g, 5, 5)
    for r in (a, b):
        assert r.converged
        assert np.max(np.abs(r.c_group - c_star)) <= 1e-6
        assert np.max(np.abs(r.x - x_star)) <= 1e-6


def test_calibrate_decoupled_one_round():
    g = build_game([[[0, 1], [2, 3]]], None, np.zeros((2, 2)), b=np.ones(4), c=1.0)
    g = replace(g, utility=replace(g.utility, group_b=(np.array([1.0, 2.0]),)))
    res = calibrate_iterative(g, s1=None, s2=1)
    assert res.converged
    # one round moves everything, the next one only confirms
    assert res.rounds <= 3


def test_rejects_non_linear_or_three_levels():
    with pytest.raises(ContractError):
        check_consistency(generate(GenSpec((2, 2, 2), seed=0)))
    with pytest.raises(ContractError):
        check_consistency(generate(GenSpec((3, 3), utility_family="nonlinear", seed=0)))
