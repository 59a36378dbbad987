import numpy as np
import pytest
from scipy import sparse

from msgames.analysis import (
    certify_uniqueness,
    gamma_matrix,
    is_p_matrix,
    is_sdd,
    is_wcdd,
    pseudo_gradient,
    spectral_radius,
    svi_assemble,
    upsilon_matrix,
)
from msgames.errors import CertificateError, ContractError
from msgames.generators import GenSpec, generate
from msgames.model import flat_utility, flatten, make_flat


def small_flat(n, seed, kappa=0.0, density=0.5, c_scale=1.0):
    r = np.random.default_rng(seed)
    W = (r.random((n, n)) < density) * r.random((n, n))
    np.fill_diagonal(W, 0)
    c = c_scale * (0.2 + r.random(n))
    return make_flat(W, r.random(n), c, kappa=kappa)


def test_pseudo_gradient_examples():
    f = make_flat(np.zeros((1, 1)), [1.0], 0.5)
    assert pseudo_gradient(f, np.array([1.0]))[0] == 0
    f = small_flat(4, 0)
    assert np.array_equal(pseudo_gradient(f, np.zeros(4)), -f.b)


@pytest.mark.parametrize("family", ["linear", "nonlinear", "mixed"])
def test_pseudo_gradient_finite_differences(family):
    g = generate(GenSpec((3, 2), p_exist=0.6, utility_family=family, seed=5))
    flat = flatten(g)
    r = np.random.default_rng(0)
    h = 1e-6
    for _ in range(20):
        x = r.random(flat.n) * 2
        F = pseudo_gradient(flat, x)
        for i in range(flat.n):
            e = np.zeros(flat.n)
            e[i] = h
            fd = -(flat_utility(flat, x + e, i) - flat_utility(flat, x - e, i)) / (2 * h)
            assert abs(F[i] - fd) < 1e-6


def test_upsilon_examples():
    f = make_flat(np.array([[0, 0.5], [0.5, 0]]), [1.0, 1.0], 1.0)
    assert np.allclose(upsilon_matrix(f).toarray(), [[2, -0.5], [-0.5, 2]])
    f = make_flat(np.zeros((3, 3)), np.ones(3), [1.0, 2.0, 3.0])
    assert np.allclose(upsilon_matrix(f).toarray(), np.diag([2, 4, 6]))
    f = make_flat(np.zeros((2, 2)), np.ones(2), 1.0, kappa=0.1, lo=0.0)
    assert np.allclose(upsilon_matrix(f).diagonal(), 2.01)


def test_gamma_examples():
    G = gamma_matrix(np.array([[2, -0.5], [-0.5, 2]]))
    assert np.allclose(G.toarray(), [[0, 0.25], [0.25, 0]])
    assert gamma_matrix(np.diag([1.0, 3.0])).nnz == 0
    assert spectral_radius(G)[0] == pytest.approx(0.25, abs=1e-10)
    with pytest.raises(CertificateError):
        gamma_matrix(np.array([[0.0, 1.0], [1.0, 1.0]]))


def test_linear_upsilon_independent_of_box():
    f = small_flat(6, 3)
    assert np.array_equal(upsilon_matrix(f, lo=0.0).toarray(), upsilon_matrix(f, lo=-5.0).toarray())


def test_is_p_matrix_examples():
    assert is_p_matrix(np.eye(4))
    assert not is_p_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ContractError, match="sufficient conditions"):
        is_p_matrix(np.eye(17))


def test_sdd_implies_p_matrix_random():
    r = np.random.default_rng(7)
    for _ in range(100):
        M = r.normal(size=(5, 5))
        np.fill_diagonal(M, np.abs(M).sum(axis=1) + r.random(5) + 1e-3)
        assert is_sdd(M)
        assert is_p_matrix(M)


def test_wcdd_chain():
    # row 0 strictly dominant, rows 1 and 2 weakly dominant and chained to it
    M = np.array([[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
    assert not is_sdd(M) and is_wcdd(M)
    assert is_p_matrix(M)
    # no chain: row 2 only links to itself
    M2 = np.array([[2.0, 0.0, 0.0], [0.0, 1.0, -1.0], [0.0, -1.0, 1.0]])
    assert not is_wcdd(M2)


def test_power_iteration_matches_dense():
    r = np.random.default_rng(11)
    for n in range(2, 17):
        A = r.random((n, n)) * (r.random((n, n)) < 0.6)
        rho, ok = spectral_radius(A)
        assert ok
        assert rho == pytest.approx(max(abs(np.linalg.eigvals(A))), abs=1e-8)


def test_certificate_zero_adjacency():
    c = certify_uniqueness(make_flat(np.zeros((4, 4)), np.ones(4), 1.0))
    assert c.sdd and c.wcdd and c.p_gamma and c.spectral_radius_gamma == 0
    assert c.p_upsilon_exact is True
    d = c.to_dict()
    assert set(d) >= {"rho_gamma", "sdd", "wcdd", "p_gamma", "p_upsilon_exact", "n"}


def test_certificate_generated_range():
    c = certify_uniqueness(generate(GenSpec((30, 30), seed=4)))
    assert c.p_gamma and 0.7 <= c.spectral_radius_gamma <= 0.8
    assert c.p_upsilon_exact is None


def test_implication_chain_random():
    r = np.random.default_rng(3)
    for t in range(200):
        n = int(r.integers(2, 9))
        f = small_flat(n, t, density=0.5, c_scale=float(r.uniform(0.1, 1.5)))
        c = certify_uniqueness(f)
        if c.sdd:
            assert c.wcdd
        if c.wcdd:
            assert c.p_upsilon_exact


def test_svi_assemble():
    from msgames.model import build_game

    g = build_game([[[0, 1], [2]]], None, np.zeros((2, 2)), b=np.ones(3), c=1.0)
    svi = svi_assemble(g)
    assert np.array_equal(svi.A.toarray(), [[-1, -1, 0], [0, 0, -1]])
    x = np.array([1.0, 2.0, 3.0])
    y = -(svi.A @ x)
    assert np.array_equal(y, [3, 3]) and svi.residual(x, y) == 0


@pytest.mark.parametrize("family", ["linear", "nonlinear", "mixed"])
def test_svi_operators_match_flat_gradient(family):
    g = generate(GenSpec((4, 5), p_exist=0.5, utility_family=family, seed=9))
    svi = svi_assemble(g)
    x = np.random.default_rng(0).random(g.n)
    y = -(svi.A @ x)
    parent = g.ancestor_map(1, 2)
    lhs = svi.f(x) + svi.g(y)[parent]
    assert np.allclose(lhs, pseudo_gradient(flatten(g), x), rtol=0, atol=1e-12)
    with pytest.raises(ContractError):
        svi_assemble(generate(GenSpec((2, 2, 2), seed=0)))


def test_sparse_input_accepted():
    U = sparse.csr_matrix(np.array([[2.0, -0.5], [-0.5, 2.0]]))
    assert is_sdd(U) and is_p_matrix(U)


def test_power_iteration_large_matches_dense():
    r = np.random.default_rng(12)
    A = sparse.random(400, 400, density=0.02, random_state=3) + sparse.eye(400, k=1)
    rho, ok = spectral_radius(A)
    assert ok
    assert rho == pytest.approx(max(abs(np.linalg.eigvals(A.toarray()))), abs=1e-7)


def test_nilpotent_gamma_has_zero_radius():
    assert spectral_radius(np.array([[0.0, 0.0], [1.24, 0.0]]))[0] == 0.0
    # a long Jordan-like chain defeats power iteration; the bound stays far below the row sum
    n = 300
    rho, ok = spectral_radius(sparse.eye(n, k=1) * 0.9, max_iter=2000)
    assert not ok and rho < 0.9
