import numpy as np
import pytest
from scipy import sparse

from msgames.errors import ContractError, StructureError
from msgames.generators import GenSpec, generate
from msgames.model import (
    ActionBox,
    AgentRef,
    StrategyProfile,
    aggregate,
    build_game,
    flat_constant,
    flat_utility,
    flatten,
    new_profile,
    refresh_aggregates,
    utilities,
    utility,
    validate,
)

from conftest import two_groups_game


def chain3():
    # leaves (0,1),(2,3) -> level-2 agents 0,1 -> one level-3 group
    return build_game(
        partitions=[[[0, 1], [2, 3]], [[0, 1]]],
        within=None,
        top=np.zeros((1, 1)),
        b=np.ones(4),
        c=1.0,
    )


def test_aggregate_sum_and_zero():
    g = build_game([[[0, 1, 2]]], None, np.zeros((1, 1)), b=np.ones(3), c=1.0)
    assert aggregate(g, new_profile(g, [1, 2, 3]), AgentRef(2, 0)) == 6
    g2 = build_game([[[0, 1]]], None, np.zeros((1, 1)), b=np.ones(2), c=1.0)
    assert aggregate(g2, new_profile(g2, [0, 0]), AgentRef(2, 0)) == 0


def test_aggregate_recursive_chain():
    g = chain3()
    p = new_profile(g, [1, 1, 1, 1])
    assert aggregate(g, p, AgentRef(3, 0)) == 4


def test_aggregate_unknown_group():
    g = chain3()
    p = new_profile(g, np.ones(4))
    with pytest.raises(StructureError):
        aggregate(g, p, AgentRef(4, 0))
    with pytest.raises(StructureError):
        aggregate(g, p, AgentRef(2, 5))


def test_refresh_idempotent_and_direct_sum():
    g = generate(GenSpec((3, 4, 5), seed=1))
    x = np.random.default_rng(0).random(g.n)
    p = refresh_aggregates(StrategyProfile(x.copy()), g)
    first = [a.copy() for a in p.aggregates]
    refresh_aggregates(p, g)
    for a, b in zip(first, p.aggregates):
        assert np.array_equal(a, b)
    for l in (2, 3):
        anc = g.ancestor_map(1, l)
        direct = np.array([x[anc == k].sum() for k in range(g.population(l))])
        assert np.allclose(p.level(l), direct, rtol=0, atol=1e-12)


def test_refresh_constant_groups_of_three():
    g = build_game([[[0, 1, 2], [3, 4, 5]]], None, np.zeros((2, 2)), b=np.ones(6), c=1.0)
    p = new_profile(g, np.ones(6))
    assert np.all(p.level(2) == 3)


def test_aggregate_linear():
    g = generate(GenSpec((4, 3), seed=2))
    r = np.random.default_rng(1)
    x, z = r.random(g.n), r.random(g.n)
    ref = AgentRef(2, 1)
    lhs = aggregate(g, new_profile(g, 2 * x + 3 * z), ref)
    rhs = 2 * aggregate(g, new_profile(g, x), ref) + 3 * aggregate(g, new_profile(g, z), ref)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_utility_examples():
    g = build_game([], None, np.zeros((1, 1)), b=[1.0], c=0.5)
    assert utility(g, new_profile(g, [1.0]), 0) == pytest.approx(0.5)
    g0 = build_game([], None, np.zeros((2, 2)), b=[1.0, 2.0], c=1.0)
    assert np.all(utilities(g0, new_profile(g0, [0, 0])) == 0)
    ge = build_game([], None, np.zeros((2, 2)), b=[1.0, 2.0], c=1.0, kappa=0.1)
    assert np.allclose(utilities(ge, new_profile(ge, [0, 0])), -1.0)
    # two groups of one, v12 = v21 = 1
    g2 = build_game([[[0], [1]]], None, np.array([[0, 1.0], [1.0, 0]]), b=[1.0, 1.0], c=1.0)
    assert utility(g2, new_profile(g2, [2.0, 3.0]), 0) == pytest.approx(4.0)


def test_utility_rejects_non_leaf():
    g = chain3()
    with pytest.raises(ContractError):
        utility(g, new_profile(g), AgentRef(2, 0))


def test_flatten_block_example():
    w, v = 0.3, 0.7
    flat = flatten(two_groups_game(w, v))
    expect = np.array([[0, w, v, v], [w, 0, v, v], [v, v, 0, w], [v, v, w, 0]])
    assert np.array_equal(flat.W.toarray(), expect)


def test_flatten_single_group_is_within():
    inner = sparse.random(5, 5, density=0.5, random_state=1).toarray()
    np.fill_diagonal(inner, 0)
    g = build_game([[list(range(5))]], [[inner]], np.zeros((1, 1)), b=np.ones(5), c=1.0)
    assert np.array_equal(flatten(g).W.toarray(), inner)


@pytest.mark.parametrize("branching,family", [((4, 5), "linear"), ((3, 3, 4), "nonlinear"), ((2, 3, 2, 3), "mixed")])
def test_utility_equivalence_with_flat(branching, family):
    g = generate(GenSpec(branching, p_exist=0.4, utility_family=family, seed=3))
    flat = flatten(g)
    for s in range(5):
        x = np.random.default_rng(s).random(g.n) * 3
        ms = utilities(g, new_profile(g, x))
        fl = flat_utility(flat, x) + flat_constant(g, x)
        assert np.allclose(ms, fl, rtol=1e-12, atol=1e-12)


def test_flatten_multilevel_blocks():
    g = generate(GenSpec((2, 2, 2), p_exist=1.0, seed=0))
    W = flatten(g).W.toarray()
    V3 = g.top_adjacency.toarray()
    # leaves 0..3 sit under level-3 agent 0, leaves 4..7 under agent 1
    assert np.all(W[:4, 4:] == V3[0, 1])
    assert np.all(W[4:, :4] == V3[1, 0])


def test_validate():
    assert validate(generate(GenSpec((5, 5), seed=0))) == []
    g = build_game([[[0, 1]]], None, np.zeros((1, 1)), b=[1.0, 1.0], c=[1.0, 0.0])
    assert "nonpositive quadratic cost" in [v.code for v in validate(g)]
    g = build_game([[[0, 1]]], None, np.zeros((1, 1)), b=[1.0, 1.0, 1.0], c=1.0)
    assert "partition not covering" in [v.code for v in validate(g)]
    g = build_game([], None, np.zeros((2, 2)), b=[1.0, 1.0], c=1.0, box=ActionBox(np.zeros(2), np.array([1.0, np.inf])))
    assert "unbounded box" in [v.code for v in validate(g)]
