import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linprog

from mogro.errors import InvalidInput
from mogro.numerics import RngStream
from mogro.pareto import (WeightDistribution, accumulate_regret, effective_pareto_front, effective_pareto_gap,
                          effective_pareto_gaps, epfi_ball_proxy, epfi_exact_estimate, pareto_fairness_variance,
                          pareto_front, pareto_gap, pareto_gaps, regularity_indices, simplex_grid,
                          solve_maxmin, weighted_optimum)


def linprog_gap(mu, i):
    """max_{w, s} s  s.t.  sum_j w_j mu_j,m - mu_i,m >= s,  w in simplex (j != i)."""
    others = np.delete(mu, i, axis=0)
    K, M = others.shape
    c = np.zeros(K + 1)
    c[-1] = -1
    A_ub = np.hstack([-others.T, np.ones((M, 1))])
    b_ub = -mu[i]
    A_eq = np.hstack([np.ones((1, K)), np.zeros((1, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1], bounds=[(0, None)] * K + [(None, None)])
    return max(0.0, -res.fun)


def brute_pareto_gap(mu, i):
    best = 0.0
    for j in range(len(mu)):
        if j != i:
            best = max(best, float(np.min(mu[j] - mu[i])))
    return best


tables = st.integers(2, 7).flatmap(
    lambda K: st.integers(1, 3).flatmap(lambda M: arrays(float, (K, M), elements=st.floats(0, 1))))


def test_worked_example():
    mu = np.array([[1, 0], [0, 1], [0.3, 0.3]])
    assert pareto_front(mu) == [0, 1, 2]
    assert effective_pareto_front(mu) == [0, 1]
    g = effective_pareto_gap(mu, 2)
    assert g.effective_gap == pytest.approx(0.2, abs=1e-9)
    assert g.pareto_gap == 0.0
    assert np.allclose(g.witness_weight, [0.5, 0.5, 0.0], atol=1e-9)


def test_known_gaps():
    mu = np.array([[1, 0], [0, 1], [0.3, 0.3], [0.2, 0.1]])
    assert np.allclose(pareto_gaps(mu), [0, 0, 0, 0.1])
    assert np.allclose(effective_pareto_gaps(mu), [0, 0, 0.2, 0.35])


def test_single_arm_and_bad_index():
    assert effective_pareto_gap(np.array([[0.4, 0.2]]), 0).effective_gap == 0.0
    with pytest.raises(InvalidInput):
        pareto_gap(np.eye(2), 5)


@settings(max_examples=150, deadline=None)
@given(tables)
def test_lp_matches_linprog(mu):
    for i in range(len(mu)):
        assert effective_pareto_gap(mu, i).effective_gap == pytest.approx(linprog_gap(mu, i), abs=1e-8)


@settings(max_examples=150, deadline=None)
@given(tables)
def test_gap_invariants(mu):
    pg, eg = pareto_gaps(mu), effective_pareto_gaps(mu)
    assert np.all(pg >= 0) and np.all(eg >= pg - 1e-12)
    assert np.allclose(pg, [brute_pareto_gap(mu, i) for i in range(len(mu))])
    front, eff = pareto_front(mu), effective_pareto_front(mu)
    assert set(eff) <= set(front) and eff
    # shifting every arm by the same vector leaves gaps unchanged
    assert np.allclose(effective_pareto_gaps(mu + 0.25), eg, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(tables)
def test_effective_front_contains_scalarized_optima(mu):
    eff = set(effective_pareto_front(mu))
    for w in simplex_grid(mu.shape[1], 6):
        s = mu @ w
        if np.sum(s >= s.max() - 1e-12) == 1:  # unique optimum
            assert int(np.argmax(s)) in eff


def test_solve_maxmin_matching_pennies():
    val, w = solve_maxmin(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    assert val == pytest.approx(0.0, abs=1e-12) and np.allclose(w, [0.5, 0.5])


def test_weighted_optimum_lowest_index_tie():
    assert weighted_optimum(np.array([[1, 0], [1, 0]]), [1, 0]) == 0


def test_accumulate_regret():
    pr, epr = accumulate_regret([0, 0.1, 0], [0.2, 0.1, 0.3])
    assert np.allclose(pr, [0, 0.1, 0.1]) and np.allclose(epr, [0.2, 0.3, 0.6])


def test_epfi_exact_constant_optimal_arm():
    mu = np.array([[1, 0], [0, 1], [0.3, 0.3]])
    # always pulling arm 0 is ε-optimal only for weights with w_1 large enough
    v, meta = epfi_exact_estimate([0] * 10, mu, 0.1, return_meta=True)
    assert v == 0.0 and meta["method"] == "grid"
    # alternating the two front arms: every weight is served half the time at least
    assert epfi_exact_estimate([0, 1] * 5, mu, 0.1) == pytest.approx(0.5)


def test_epfi_stacked_tables_equal_fixed():
    mu = np.array([[1, 0], [0, 1], [0.6, 0.6]])
    arms = [0, 1, 2, 2, 1]
    assert epfi_exact_estimate(arms, np.stack([mu] * 5), 0.1) == epfi_exact_estimate(arms, mu, 0.1)


def test_epfi_high_m_uses_samples():
    mu = np.eye(4)
    v, meta = epfi_exact_estimate([0, 1, 2, 3], mu, 0.1, rng=RngStream(0, 0), return_meta=True)
    assert meta["method"] == "dirichlet-sample" and meta["n_weights"] >= 10_000
    assert 0 <= v <= 1


def test_ball_proxy_and_variance():
    mu = np.array([[1, 0], [0, 1], [0.95, 0.02]])
    assert epfi_ball_proxy([0, 0, 1, 2], mu, 0.1) == pytest.approx(0.25)
    assert pareto_fairness_variance([0, 0, 1, 1], [0, 1]) == 0.0
    assert pareto_fairness_variance([0, 0, 0, 1], [0, 1]) == pytest.approx(1.0)


def test_simplex_grid():
    g = simplex_grid(3, 4)
    assert len(g) == 15 and np.allclose(g.sum(axis=1), 1)
    assert len({tuple(r) for r in g}) == 15


def test_regularity_indices_point_mass():
    theta = np.eye(2)
    phi, psi = regularity_indices(WeightDistribution.point_mass((1.0, 0.0)), theta, 0.05, 500, RngStream(0, 0))
    assert phi == 0.0
    phi, _ = regularity_indices(WeightDistribution.dirichlet((1.0, 1.0)), theta, 0.3, 4000, RngStream(0, 0))
    # P(w_1 > 1 - 0.3/sqrt(2)) for uniform w_1 on [0,1]
    assert phi == pytest.approx(0.3 / np.sqrt(2), abs=0.03)


def test_brute_force_grid_matches_lp_small():
    # independent oracle over all mixtures of two arms at step 1e-3
    rng = np.random.default_rng(4)
    for _ in range(20):
        mu = rng.random((4, 2))
        for i in range(4):
            best = 0.0
            others = [j for j in range(4) if j != i]
            for a, b in itertools.combinations(others, 2):
                lam = np.linspace(0, 1, 1001)[:, None]
                mix = lam * mu[a] + (1 - lam) * mu[b]
                best = max(best, float(np.max(np.min(mix - mu[i], axis=1))))
            assert effective_pareto_gap(mu, i).effective_gap == pytest.approx(best, abs=2e-3)
