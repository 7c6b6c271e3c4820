import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from softcache.catalog import ContentCatalog, UtilityGraph, make_random_U, make_uniform_catalog
from softcache.errors import ConstraintViolation, InvalidParameter, NotApplicable, WrongCase
from softcache.placement import (AccessModel, PlacementVector, analytic_gain_case1,
                                 base_miss_rate, femto_hit_probability, g_base, g_sch1, g_sch2,
                                 grad_base, grad_sch1, grad_sch2, hessian_case1, hessian_case2,
                                 integerize, interior_bounds, kkt_residual, load_placement,
                                 p_miss, project_capped_simplex, save_placement, save_report,
                                 solve_baseline, solve_u_aware_case1, solve_u_aware_case2)

E = math.e
unit = AccessModel.from_product(1.0)


def _cat(p):
    return ContentCatalog(p)


def _random_instance(rng, K, L=1.5, case=1, c=0.5):
    cat = ContentCatalog(rng.dirichlet(np.ones(K)) + 1e-3)
    U = make_random_U(cat, min(L, K - 1), case=case, c=c if case == 2 else 1.0,
                      seed=int(rng.integers(2**31)), symmetrize=bool(rng.integers(2)))
    return cat, U


def _integer_placements(K, M, C):
    for n in itertools.product(range(M + 1), repeat=K):
        if sum(n) <= M * C:
            yield np.array(n, dtype=float)


# -- objectives -------------------------------------------------------------

def test_p_miss_examples():
    assert p_miss(0, unit) == 1.0
    assert p_miss(1, unit) == pytest.approx(math.exp(-1), abs=1e-12)
    assert p_miss(4, AccessModel.from_product(0.5)) == pytest.approx(math.exp(-2), abs=1e-12)


def test_g_base_examples():
    assert g_base(_cat([0.5, 0.5]), [0, 0], unit) == 0
    assert g_base(_cat([1.0]), [1], unit) == pytest.approx(1 - 1 / E, abs=1e-12)
    assert g_base(_cat([0.75, 0.25]), [2, 0], unit) == pytest.approx(0.75 * (1 - E ** -2),
                                                                     abs=1e-12)


def test_g_base_matches_scalar_sum(rng):
    for _ in range(20):
        K = int(rng.integers(1, 9))
        p = rng.dirichlet(np.ones(K))
        n = rng.uniform(0, 4, K)
        a = rng.uniform(0.05, 2)
        ref = math.fsum(p[i] * (1 - math.exp(-a * n[i])) for i in range(K))
        assert g_base(_cat(p), n, a) == pytest.approx(ref, abs=1e-13)


def test_placement_vector_constraints():
    PlacementVector([1, 1], M=2, C=1)
    with pytest.raises(ConstraintViolation):
        PlacementVector([3, 0], M=2, C=5)
    with pytest.raises(ConstraintViolation):
        PlacementVector([2, 1], M=2, C=1)
    with pytest.raises(ConstraintViolation):
        PlacementVector([-0.5, 1], M=2, C=1)
    with pytest.raises(ConstraintViolation):
        g_base(_cat([0.5, 0.5]), [-1, 0], unit)


def test_g_sch1_diagonal_graph_equals_base(rng):
    cat = _cat(rng.dirichlet(np.ones(6)))
    n = rng.uniform(0, 3, 6)
    assert g_sch1(cat, UtilityGraph.empty(6), n, 0.7) == pytest.approx(g_base(cat, n, 0.7),
                                                                       abs=1e-15)


def test_g_sch1_complete_pair_shares_exponent():
    U = UtilityGraph([[1], [0]])
    for n in ([2.0, 0.0], [0.5, 1.5], [1.0, 1.0]):
        assert g_sch1(_cat([0.9, 0.1]), U, n, 0.4) == pytest.approx(1 - math.exp(-0.8),
                                                                   abs=1e-15)


def test_g_sch1_three_contents():
    U = UtilityGraph([[2], [], []])
    v = g_sch1(_cat([0.5, 0.3, 0.2]), U, [1, 1, 0], unit)
    assert v == pytest.approx(0.8 * (1 - 1 / E), abs=1e-12)
    assert v == pytest.approx(0.505696, abs=1e-6)


def test_g_sch2_two_contents():
    U = UtilityGraph([[1], [0]], case=2, c=0.5)
    v = g_sch2(_cat([0.5, 0.5]), U, [1, 0], unit)
    ref = 0.5 * (1 - 1 / E) + 0.5 * 0.5 * 1 * (1 - 1 / E)
    assert v == pytest.approx(ref, abs=1e-12)
    assert v == pytest.approx(0.474091, abs=1e-6)


def test_wrong_case_is_rejected():
    U1 = UtilityGraph([[1], [0]])
    U2 = U1.with_case(2, 0.5)
    cat = _cat([0.5, 0.5])
    with pytest.raises(WrongCase):
        g_sch1(cat, U2, [1, 0], unit)
    with pytest.raises(WrongCase):
        g_sch2(cat, U1, [1, 0], unit)


@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 8))
def test_g_sch2_limits(seed, K):
    rng = np.random.default_rng(seed)
    cat, U = _random_instance(rng, K)
    n = rng.uniform(0, 3, K)
    a = rng.uniform(0.05, 2)
    near_one = g_sch2(cat, U.with_case(2, 1 - 1e-12), n, a)
    assert near_one == pytest.approx(g_sch1(cat, U, n, a), abs=1e-10)
    empty = UtilityGraph.empty(K, case=2, c=0.3)
    assert g_sch2(cat, empty, n, a) == pytest.approx(g_base(cat, n, a), abs=1e-15)


@given(seed=st.integers(0, 2**32 - 1), K=st.integers(2, 8))
def test_adding_an_edge_never_lowers_g_sch1(seed, K):
    rng = np.random.default_rng(seed)
    cat, U = _random_instance(rng, K)
    n = rng.uniform(0, 3, K)
    i, j = rng.choice(K, 2, replace=False)
    assert g_sch1(cat, U.add_edges([(i, j)]), n, 0.6) >= g_sch1(cat, U, n, 0.6) - 1e-15


# -- gradients and curvature ------------------------------------------------

def _fd_grad(f, n, h):
    g = np.zeros_like(n)
    for k in range(n.size):
        e = np.zeros_like(n)
        e[k] = h
        g[k] = (f(n + e) - f(n - e)) / (2 * h)
    return g


@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 10))
def test_gradients_match_central_differences(seed, K):
    rng = np.random.default_rng(seed)
    M = 4
    cat, U = _random_instance(rng, K, L=2)
    U2 = U.with_case(2, float(rng.uniform(0.05, 0.95)))
    a = float(rng.uniform(0.05, 1.5))
    n = rng.uniform(0.5, M - 0.5, K)
    h = 1e-6 * M
    for f, g in ((lambda x: g_base(cat, x, a), grad_base(cat, n, a)),
                 (lambda x: g_sch1(cat, U, x, a), grad_sch1(cat, U, n, a)),
                 (lambda x: g_sch2(cat, U2, x, a), grad_sch2(cat, U2, n, a))):
        fd = _fd_grad(f, n, h)
        assert np.linalg.norm(fd - g) <= 1e-5 * np.linalg.norm(g)


def test_hessian_single_content():
    cat = _cat([1.0])
    U = UtilityGraph.empty(1, case=2, c=0.3)
    H = hessian_case2(cat, U, [1.5], 0.8)
    assert H.shape == (1, 1)
    assert H[0, 0] == pytest.approx(-(0.8 ** 2) * math.exp(-0.8 * 1.5), rel=1e-14)


def test_hessian_zero_popularity_gives_zero_matrix():
    class Zero:
        popularity = np.zeros(3)
        K = 3
    U = UtilityGraph([[1], [2], [0]], case=2, c=0.5)
    assert not np.any(hessian_case2(Zero(), U, [1, 1, 1], 1.0))


@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 8))
def test_hessian_matches_differenced_gradient(seed, K):
    rng = np.random.default_rng(seed)
    cat, U = _random_instance(rng, K, L=2, case=2, c=float(rng.uniform(0.05, 0.95)))
    a = float(rng.uniform(0.05, 1.5))
    n = rng.uniform(0.2, 3.8, K)
    H = hessian_case2(cat, U, n, a)
    assert np.allclose(H, H.T, rtol=0, atol=1e-15)
    h = 1e-6 * 4
    fd = np.column_stack([(grad_sch2(cat, U, n + h * e, a) - grad_sch2(cat, U, n - h * e, a))
                          / (2 * h) for e in np.eye(K)])
    scale = np.abs(H).max()
    assert np.all(np.abs(fd - H) <= 1e-5 * np.abs(H) + 1e-9 * scale)


@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 12))
def test_case2_quadratic_form_is_nonpositive(seed, K):
    rng = np.random.default_rng(seed)
    cat, U = _random_instance(rng, K, L=3, case=2, c=float(rng.uniform(0.01, 0.99)))
    H = hessian_case2(cat, U, rng.uniform(0, 4, K), float(rng.uniform(0.05, 2)))
    z = rng.normal(size=(200, K)) * rng.uniform(0.1, 10, size=(200, 1))
    q = np.einsum('ij,jk,ik->i', z, H, z)
    assert np.all(q <= 1e-9 * np.sum(z * z, axis=1))


def test_hessian_case1_is_case2_at_c_one(rng):
    cat, U = _random_instance(rng, 6, L=2)
    n = rng.uniform(0, 3, 6)
    H1 = hessian_case1(cat, U, n, 0.9)
    H2 = hessian_case2(cat, U.with_case(2, 0.5), n, 0.9, c=1.0)
    np.testing.assert_allclose(H1, H2, rtol=1e-14, atol=0)


# -- water-filling ------------------------------------------------------------

def test_baseline_symmetric_pair():
    pv, rep = solve_baseline(_cat([0.5, 0.5]), unit, M=2, C=1)
    np.testing.assert_allclose(pv.n, [1, 1], atol=1e-12)


def test_baseline_interior_pair():
    pv, rep = solve_baseline(_cat([2 / 3, 1 / 3]), unit, M=2, C=1)
    ref = [1 + math.log(2) / 2, 1 - math.log(2) / 2]
    np.testing.assert_allclose(pv.n, ref, atol=1e-10)
    np.testing.assert_allclose(pv.n, [1.346574, 0.653426], atol=1e-6)
    assert base_miss_rate(2, unit, rep.rho) == pytest.approx(1 - g_base(_cat([2 / 3, 1 / 3]),
                                                                        pv, unit), abs=1e-12)


def test_baseline_slack_capacity_fills_every_content():
    pv, rep = solve_baseline(_cat([0.7, 0.2, 0.1]), unit, M=4, C=3)
    np.testing.assert_array_equal(pv.n, [4, 4, 4])
    assert rep.rho == 0
    assert rep.objective_value == pytest.approx(1 - math.exp(-4), abs=1e-15)


def test_baseline_single_content_boundary():
    # one content, M = 3, C = 1: N = M and rho sits at the upper threshold
    pv, rep = solve_baseline(_cat([1.0]), unit, M=3, C=1)
    assert pv.n[0] == pytest.approx(3, abs=1e-12)
    assert 1 - g_base(_cat([1.0]), pv, unit) == pytest.approx(math.exp(-3), abs=1e-15)


def test_base_miss_rate_vanishes_with_rho():
    assert base_miss_rate(10, unit, 0.0) == 0.0
    assert base_miss_rate(10, unit, 1e-300) < 1e-298


@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 6), M=st.integers(1, 4))
def test_baseline_beats_integer_enumeration(seed, K, M):
    rng = np.random.default_rng(seed)
    cat = ContentCatalog(rng.dirichlet(np.ones(K) * 0.7) + 1e-4)
    model = AccessModel.from_product(float(rng.uniform(0.05, 2.5)))
    pv, rep = solve_baseline(cat, model, M, 1)
    best = max(g_base(cat, n, model) for n in _integer_placements(K, M, 1))
    assert rep.objective_value >= best - 1e-12
    assert rep.kkt_residual <= 1e-8
    assert abs(pv.n.sum() - min(M, K * M)) <= 1e-9 * M


@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 6), M=st.integers(1, 4))
def test_largest_remainder_rounding_loses_at_most_5_percent(seed, K, M):
    rng = np.random.default_rng(seed)
    cat = ContentCatalog(rng.dirichlet(np.ones(K) * 0.7) + 1e-4)
    model = AccessModel.from_product(float(rng.uniform(0.05, 2.5)))
    pv, rep = solve_baseline(cat, model, M, 1)
    rounded = g_base(cat, integerize(pv), model)
    assert rounded >= 0.95 * rep.objective_value


@given(seed=st.integers(0, 2**32 - 1), K=st.integers(2, 40))
def test_interior_miss_rate_identity(seed, K):
    rng = np.random.default_rng(seed)
    p = rng.uniform(1, 1.5, K)
    cat = ContentCatalog(p)
    model = AccessModel.from_product(float(rng.uniform(0.2, 1.0)))
    M, C = 200, 1
    pv, rep = solve_baseline(cat, model, M, C)
    lower, upper = interior_bounds(model.lam_t, M, rep.rho)
    assert np.all((cat.popularity > lower) & (cat.popularity < upper))
    assert abs(base_miss_rate(K, model, rep.rho) - (1 - g_base(cat, pv, model))) <= 1e-9


def test_kkt_residual_zero_at_optimum_and_positive_elsewhere():
    cat = _cat([0.6, 0.3, 0.1])
    pv, rep = solve_baseline(cat, unit, 3, 1)
    assert rep.kkt_residual <= 1e-12
    n = np.array([1.0, 1.0, 1.0])
    assert kkt_residual(grad_base(cat, n, unit), n, 3, 3) > 1e-3


# -- capped-simplex projection ---------------------------------------------

@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 30))
def test_projection_is_feasible_and_optimal(seed, K):
    rng = np.random.default_rng(seed)
    upper = float(rng.uniform(0.5, 5))
    budget = float(rng.uniform(0, upper * K))
    x = rng.normal(0, 3, K)
    y, tau = project_capped_simplex(x, upper, budget)
    assert np.all(y >= -1e-12) and np.all(y <= upper + 1e-12)
    assert y.sum() <= budget + 1e-9
    # variational inequality: (x - y) . (z - y) <= 0 for feasible z
    for _ in range(20):
        z = rng.uniform(0, upper, K)
        if z.sum() > budget:
            z *= budget / z.sum()
        assert np.dot(x - y, z - y) <= 1e-9


# -- U-aware solvers --------------------------------------------------------

def test_u_aware_diagonal_matches_baseline(rng):
    cat = ContentCatalog(rng.dirichlet(np.ones(30)) + 1e-3)
    model = AccessModel(1 / 3000, 300)
    base = solve_baseline(cat, model, 10, 3)[1].objective_value
    v1 = solve_u_aware_case1(cat, UtilityGraph.empty(30), model, 10, 3)[1].objective_value
    v2 = solve_u_aware_case2(cat, UtilityGraph.empty(30, case=2, c=0.5), model, 10, 3)[1]
    assert v1 == pytest.approx(base, abs=1e-6)
    assert v2.objective_value == pytest.approx(base, abs=1e-6)


def test_u_aware_mutual_pair_saturates_capacity():
    U = UtilityGraph([[1], [0]])
    for p in ([0.5, 0.5], [0.9, 0.1]):
        pv, rep = solve_u_aware_case1(_cat(p), U, unit, M=3, C=1)
        assert rep.objective_value == pytest.approx(1 - math.exp(-3), abs=1e-9)
        assert pv.n.sum() == pytest.approx(3, abs=1e-9)


def test_u_aware_case2_tends_to_case1(rng):
    cat, U = _random_instance(rng, 12, L=3)
    model = AccessModel.from_product(0.4)
    v1 = solve_u_aware_case1(cat, U, model, 5, 2)[1].objective_value
    v2 = solve_u_aware_case2(cat, U.with_case(2, 1 - 1e-9), model, 5, 2)[1].objective_value
    assert v2 == pytest.approx(v1, abs=1e-6)


@given(seed=st.integers(0, 2**32 - 1))
def test_u_aware_case1_beats_enumeration(seed):
    rng = np.random.default_rng(seed)
    cat, U = _random_instance(rng, 4, L=float(rng.uniform(0, 3)))
    pv, rep = solve_u_aware_case1(cat, U, unit, M=3, C=1)
    best = max(g_sch1(cat, U, n, unit) for n in _integer_placements(4, 3, 1))
    assert rep.objective_value >= best - 1e-9
    assert rep.converged and rep.kkt_residual <= 1e-8


@given(seed=st.integers(0, 2**32 - 1))
def test_u_aware_case2_beats_enumeration(seed):
    rng = np.random.default_rng(seed)
    cat, U = _random_instance(rng, 4, L=float(rng.uniform(0, 3)), case=2, c=0.5)
    pv, rep = solve_u_aware_case2(cat, U, unit, M=3, C=1)
    best = max(g_sch2(cat, U, n, unit) for n in _integer_placements(4, 3, 1))
    assert rep.objective_value >= best - 1e-9
    assert rep.converged and rep.kkt_residual <= 1e-8


@given(seed=st.integers(0, 2**32 - 1), K=st.integers(2, 40))
def test_policy_dominance(seed, K):
    rng = np.random.default_rng(seed)
    cat, U = _random_instance(rng, K, L=float(rng.uniform(0, 5)))
    model = AccessModel.from_product(float(rng.uniform(0.05, 1.0)))
    M, C = int(rng.integers(1, 8)), int(rng.integers(1, 4))
    base = solve_baseline(cat, model, M, C)[0]
    n1 = solve_u_aware_case1(cat, U, model, M, C)[0]
    U2 = U.with_case(2, 0.5)
    n2 = solve_u_aware_case2(cat, U2, model, M, C)[0]
    assert g_sch1(cat, U, n1, model) >= g_sch1(cat, U, base, model) - 1e-6
    assert g_sch1(cat, U, base, model) >= g_base(cat, base, model) - 1e-12
    assert g_sch2(cat, U2, n2, model) >= g_sch2(cat, U2, base, model) - 1e-6
    assert g_sch2(cat, U2, base, model) >= g_base(cat, base, model) - 1e-12


def test_u_aware_solver_is_deterministic(rng):
    cat, U = _random_instance(rng, 50, L=4)
    model = AccessModel.from_product(0.3)
    a = solve_u_aware_case1(cat, U, model, 6, 4)
    b = solve_u_aware_case1(cat, U, model, 6, 4)
    assert np.array_equal(a[0].n, b[0].n) and a[1] == b[1]


# -- closed-form gain -------------------------------------------------------

def test_gain_diagonal_graph_is_one():
    cat = _cat([0.4, 0.35, 0.25])
    rho = solve_baseline(cat, unit, 30, 1)[1].rho
    assert analytic_gain_case1(cat, UtilityGraph.empty(3), unit, rho) == pytest.approx(1, abs=1e-12)


def test_gain_uniform_popularity_corollary():
    K = 12
    cat = make_uniform_catalog(K)
    U = UtilityGraph([[(i + 1) % K, (i - 1) % K] for i in range(K)])
    model = AccessModel.from_product(0.5)
    rho = solve_baseline(cat, model, 50, 1)[1].rho
    expected = (K * rho / model.lam_t) ** -(3 - 1)
    assert analytic_gain_case1(cat, U, model, rho) == pytest.approx(expected, rel=1e-9)
    assert expected >= 1


def test_gain_three_contents_matches_direct_ratio():
    cat = _cat([0.5, 0.3, 0.2])
    U = UtilityGraph([[1], [2], [0]])
    pv, rep = solve_baseline(cat, unit, 20, 1)
    p, n = cat.popularity, pv.n
    direct = np.sum(p * np.exp(-n)) / np.sum(p * np.exp(-(U.indicator() @ n)))
    assert analytic_gain_case1(cat, U, unit, rep.rho, M=20) == pytest.approx(direct, abs=1e-9)


def test_gain_preconditions():
    cat = _cat([0.5, 0.3, 0.2])
    with pytest.raises(NotApplicable):
        analytic_gain_case1(cat, UtilityGraph([[1], [], []]), unit, 0.1)
    with pytest.raises(NotApplicable):
        analytic_gain_case1(cat, UtilityGraph([[1], [2], [0]], case=2, c=0.5), unit, 0.1)
    with pytest.raises(NotApplicable):
        analytic_gain_case1(cat, UtilityGraph.empty(3), unit, 0.0)
    with pytest.raises(NotApplicable):
        analytic_gain_case1(cat, UtilityGraph.empty(3), unit, 1e-6, M=2)


# -- integerization, femto-caching and files -------------------------------

def test_integerize_examples():
    pv = PlacementVector([2, 0, 1], M=3, C=1)
    assert integerize(pv).n.tolist() == [2, 0, 1]
    assert integerize(PlacementVector([1.6, 0.4], M=2, C=1)).n.tolist() == [2, 0]
    fr = integerize(PlacementVector([7.6, 0.4], M=10, C=1), mode='fractional')
    assert fr.n.tolist() == [7, 0]
    np.testing.assert_allclose(fr.partial, [0.6, 0.4])
    with pytest.raises(InvalidParameter):
        integerize(pv, mode='ceil')


@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 30), M=st.integers(1, 10),
       C=st.integers(1, 6))
def test_integerize_round_is_feasible(seed, K, M, C):
    rng = np.random.default_rng(seed)
    n = rng.uniform(0, M, K)
    if n.sum() > M * C:
        n = project_capped_simplex(n, M, M * C)[0]
    out = integerize(PlacementVector(n, M, C))
    assert out.is_integer()
    assert np.all(out.n >= 0) and np.all(out.n <= M) and out.n.sum() <= M * C
    assert np.all(np.abs(out.n - n) < 1 + 1e-12)


def test_femto_examples():
    U = UtilityGraph([[1], [0], []])
    x = np.zeros((2, 3))
    assert femto_hit_probability(x, U, [0, 1], 0) == 0
    x[1, 0] = 1
    assert femto_hit_probability(x, U, [0, 1], 0) == 1
    x = np.zeros((2, 3))
    x[1, 1] = 1
    assert femto_hit_probability(x, U, [0, 1], 0) == 1
    assert femto_hit_probability(x, U, [0], 0) == 0
    assert femto_hit_probability(x, U, [0, 1], 2) == 0


def test_placement_and_report_files(tmp_path):
    cat = _cat([0.6, 0.3, 0.1])
    pv, rep = solve_baseline(cat, unit, 3, 1)
    save_placement(tmp_path / 'p.csv', pv, integerize(pv))
    assert (tmp_path / 'p.csv').read_text().splitlines()[0] == \
        'content_index,n_continuous,n_integer'
    back = load_placement(tmp_path / 'p.csv', 3, 1)
    np.testing.assert_allclose(back.n, pv.n, rtol=1e-15)
    ints = load_placement(tmp_path / 'p.csv', 3, 1, column='n_integer')
    assert ints.n.tolist() == integerize(pv).n.tolist()
    save_report(tmp_path / 'r.json', rep, policy='base')
    rec = json.loads((tmp_path / 'r.json').read_text())
    assert {'objective', 'rho', 'iterations', 'kkt_residual', 'policy'} <= set(rec)
