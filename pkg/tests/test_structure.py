import numpy as np
import pytest

from msgames.errors import ContractError
from msgames.generators import GenSpec, generate
from msgames.model import flatten, make_flat
from msgames.structure import Failure, detect_structure

from conftest import two_groups_game


def _perturbed(flat, i, j, delta):
    W = flat.W.toarray()
    W[i, j] += delta
    return make_flat(W, flat.b, flat.c)


def test_block_example_recovered_with_zero_tol():
    w, v = 0.3, 0.7
    flat = flatten(two_groups_game(w, v))
    g = detect_structure(flat, tol=0.0)
    assert not isinstance(g, Failure)
    assert [list(x) for x in g.levels[0].groups] == [[0, 1], [2, 3]]
    assert np.array_equal(g.top_adjacency.toarray(), [[0, v], [v, 0]])


def test_random_asymmetric_fails():
    r = np.random.default_rng(0)
    W = r.random((8, 8))
    np.fill_diagonal(W, 0)
    res = detect_structure(make_flat(W, np.ones(8), 5.0))
    assert isinstance(res, Failure)


def test_perturbed_entry_named():
    tol = 1e-9
    flat = flatten(two_groups_game(0.3, 0.7))
    res = detect_structure(_perturbed(flat, 1, 3, 2 * tol), partition=[[0, 1], [2, 3]], tol=tol)
    assert isinstance(res, Failure)
    assert res.groups is not None and set(res.groups) == {0, 1}
    assert res.agent in (1, 3)


@pytest.mark.parametrize("seed", range(5))
def test_round_trip_true_partition(seed):
    g = generate(GenSpec((6, 5), p_exist=0.5, seed=seed))
    parts = [list(map(int, x)) for x in g.levels[0].groups]
    h = detect_structure(flatten(g), partition=parts, tol=0.0)
    assert not isinstance(h, Failure)
    assert np.array_equal(h.top_adjacency.toarray(), g.top_adjacency.toarray())
    for a, b in zip(h.levels[0].within_group_adjacency, g.levels[0].within_group_adjacency):
        assert np.array_equal(a.toarray(), b.toarray())


def test_discovery_on_generated():
    g = generate(GenSpec((5, 6), p_exist=0.6, seed=11))
    h = detect_structure(flatten(g))
    assert not isinstance(h, Failure)
    assert [list(x) for x in h.levels[0].groups] == [list(x) for x in g.levels[0].groups]
    assert np.array_equal(h.top_adjacency.toarray(), g.top_adjacency.toarray())


def test_bad_partition_and_tol():
    flat = flatten(two_groups_game())
    with pytest.raises(ContractError):
        detect_structure(flat, partition=[[0, 1], [1, 2, 3]])
    with pytest.raises(ContractError):
        detect_structure(flat, tol=-1.0)
