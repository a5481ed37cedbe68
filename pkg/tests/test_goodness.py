import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mogro.errors import InvalidConfig
from mogro.goodness import (B_branches, GoodnessReport, compute_B, distance_bound, distance_bound_xmax,
                            estimate_q_gamma, lambda_inc, lambda_of, psi_cap, t0_bound, verify_goodness)
from mogro.instances import ContextSampler, Instance, build_lowerbound_family
from mogro.numerics import RngStream


def test_lambda_of():
    assert lambda_of(np.eye(2)) == pytest.approx(0.5)
    assert lambda_of([[1.0, 0.0]]) == pytest.approx(0.0)
    assert lambda_of(np.eye(4)) == pytest.approx(0.25)
    # span-restricted: one objective in a 1-D feature span
    assert lambda_of([[1.0, 0.0, 0.0]], span_basis=[[1.0, 0.0, 0.0]]) == pytest.approx(1.0)


def test_psi_examples():
    assert psi_cap(0.5, 1.0) == pytest.approx(0.16609, abs=1e-5)
    assert psi_cap(0.5, 0.999) == pytest.approx(0.12183, abs=1e-5)
    lam = 0.5
    a, c = math.sqrt(lam ** 2 / 9 - lam ** 4 / 324), 1 - lam ** 2 / 18
    root = c / math.sqrt(a * a + c * c)
    assert psi_cap(lam, root) == pytest.approx(0.0, abs=1e-12)


@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_psi_positive_iff_gamma_above_threshold(lam, gamma):
    thr = 1 - lam ** 2 / 18
    if abs(gamma - thr) > 1e-9:
        assert (psi_cap(lam, gamma) > 0) == (gamma > thr)


def test_lambda_inc_examples():
    assert lambda_inc(0.5, 0.0, 1.0, 0.7, 3) == pytest.approx(0.5 * 0.7 * 3)
    a = psi_cap(0.5, 0.999)
    assert lambda_inc(0.5, a, 0.999, 1.0, 2) == pytest.approx(0.33333, abs=1e-5)
    base = lambda_inc(0.4, 0.01, 0.99, 0.5, 2)
    assert lambda_inc(0.4, 0.01, 0.99, 0.5, 2, "stochastic", q_gamma=0.3) == pytest.approx(0.3 * base)
    assert lambda_inc(0.4, 0.01, 0.99, 0.5, 2, "projection", lambda1=0.4) == pytest.approx(base)
    # x_max = 1, gamma = 1 reduces to the base formula at the same alpha
    assert lambda_inc(0.4, 0.01, 1.0, 1, 2, "x_max", x_max=1.0) == pytest.approx(lambda_inc(0.4, 0.01, 1.0, 1, 2))
    assert lambda_inc(0.4, 0.01, 0.99, 1, 2, "lL", l=1.0, L=1.0) == pytest.approx(lambda_inc(0.4, 0.01, 0.99, 1, 2))
    with pytest.raises(InvalidConfig):
        lambda_inc(0.4, 0.01, 0.99, 1, 2, "bogus")


@pytest.mark.parametrize("lam", [0.2, 0.5, 0.9])
def test_lambda_inc_bracket_at_psi(lam):
    gamma = 1 - lam ** 2 / 18 + 1e-3
    a = psi_cap(lam, gamma)
    assert a > 0
    assert lambda_inc(lam, a, gamma, 1.0, 1) >= lam / 3 - 1e-6


def test_compute_B():
    b1, b2 = B_branches(0.1, 0.1, 5, 1000)
    # independent evaluation of both branches
    assert b1 == pytest.approx(2 * 0.1 / 0.1 * math.sqrt(2 * 5 * 1000 * math.log(5 * 1000 ** 2)))
    assert b2 == pytest.approx(16 * (2.5 * math.log(1 + 400) + math.log(1000)))
    assert b1 == pytest.approx(785.5, abs=0.5) and b2 == pytest.approx(350.3, abs=0.5)
    assert compute_B(0.1, 0.1, 5, 1000) == pytest.approx(350.3, abs=0.5)
    # branch 2 scales as σ²
    assert B_branches(0.2, 0.1, 5, 1000)[1] == pytest.approx(4 * b2)
    lo1, lo2 = B_branches(0.05, 0.1, 5, 1000)
    assert lo2 < lo1  # branch 2 active at both σ = 0.05 and σ = 0.1
    assert compute_B(0.1, 0.1, 5, 1000) == pytest.approx(4 * compute_B(0.05, 0.1, 5, 1000))


@given(st.floats(0.01, 1), st.floats(0.01, 1), st.integers(1, 20), st.integers(2, 10 ** 5))
def test_B_branch_selection(sigma, alpha, d, T):
    b1, b2 = B_branches(sigma, alpha, d, T)
    assert compute_B(sigma, alpha, d, T) == min(b1, b2) > 0
    assert B_branches(sigma, alpha, d, T + 1)[0] > b1


def test_t0_bound_examples():
    assert t0_bound(3, np.eye(2)) == 6
    assert t0_bound(0.5, np.eye(2)) == 2
    with pytest.raises(InvalidConfig):
        t0_bound(3, [[1, 0], [2, 0]])


@given(st.floats(0.01, 50))
def test_t0_bound_doubling(B):
    S = np.array([[1.0, 0.0], [0.6, 0.8]])
    assert t0_bound(2 * B, S) <= 2 * t0_bound(B, S) + len(S)


def _simulate_t0(B, S):
    V = np.zeros((S.shape[1], S.shape[1]))
    t = 0
    while np.linalg.eigvalsh(V)[0] < B:
        V += np.outer(S[t % len(S)], S[t % len(S)])
        t += 1
    return t


@given(st.floats(0.05, 30))
def test_t0_bound_is_upper_bound(B):
    S = np.array([[1.0, 0.0], [0.6, 0.8]])
    assert _simulate_t0(B, S) <= t0_bound(B, S)


def test_floor_form_is_not_an_upper_bound():
    # orthonormal S, B = 3.5: four sweeps are needed, floor(3.5)*2 = 6 < 8
    S = np.eye(2)
    assert _simulate_t0(3.5, S) == 8
    assert math.floor(3.5 / 1.0) * 2 == 6
    assert t0_bound(3.5, S) == 8


def test_verify_goodness_examples():
    inst = Instance(features=np.eye(2), objectives=np.eye(2))
    rep = verify_goodness(inst, 0.95, 0.1, 10_000, RngStream(0, 0))
    assert rep.verified
    assert rep.worst_margin >= math.sqrt(1 - 0.1 ** 2) - 1e-9
    assert not rep.assumption3_satisfied and not rep.alpha_capped
    miss = Instance(features=[[1.0, 0.0]], objectives=np.eye(2))
    assert not verify_goodness(miss, 0.3, 0.1, 10_000, RngStream(0, 0)).verified
    fam = build_lowerbound_family(2, 0.1)
    assert verify_goodness(fam.instance(0), 1 - 1e-6, 1e-4, 10_000, RngStream(0, 0)).verified
    with pytest.raises(InvalidConfig):
        verify_goodness(inst, 0.9, 0.0)


def test_verify_goodness_caps_alpha_and_report_fields():
    inst = Instance(features=np.eye(2), objectives=np.eye(2), sigma=0.1)
    rep = verify_goodness(inst, 0.999, 0.5, 10_000, RngStream(0, 0), T=1000)
    assert rep.alpha_capped and rep.alpha <= psi_cap(0.5, 0.999) + 1e-12
    assert rep.lambda_inc > 0 and rep.B > 0 and rep.T0_bound >= 2
    d = rep.to_dict()
    for key in ("lambda", "gamma", "alpha", "alpha_capped", "verified", "n_directions_tested",
                "worst_margin", "q_gamma_hat", "lambda_inc", "B", "T0_bound"):
        assert key in d
    assert isinstance(GoodnessReport(**{**rep.__dict__}).to_json(), str)


def test_verify_goodness_subspace():
    X = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    inst = Instance(features=X, objectives=[[0.8, 0.0, 0.6], [0.0, 0.8, 0.6]])
    rep = verify_goodness(inst, 0.9, 0.05, 10_000, RngStream(0, 0))
    assert rep.subspace and rep.verified and rep.lam > 0


def test_verify_goodness_monotone():
    inst = Instance(features=[[1, 0], [0.8, 0.6], [0, 1]], objectives=[[0.9, 0.43589], [0.2, 0.9798]])
    gs, als = (0.6, 0.8, 0.9), (0.05, 0.1, 0.2)
    res = {(g, a): verify_goodness(inst, g, a, 10_000, RngStream(4, 0)).verified for g in gs for a in als}
    for (g, a), ok in res.items():
        if ok:
            assert all(res[(g2, a2)] for g2 in gs for a2 in als if g2 <= g and a2 <= a)


def _mc_distance(alpha, gamma, n, rng, x_max=None):
    """Max over sampled (β, x) of ‖x − θ‖ (or ‖θ − x/γ‖ when x_max is given) for θ = e1 in d=3."""
    g = rng.gen
    theta = np.array([1.0, 0.0, 0.0])
    u = g.standard_normal((n, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    beta = theta + alpha * u * g.random((n, 1)) ** (1 / 3)
    bd = beta / np.linalg.norm(beta, axis=1, keepdims=True)
    # x = c·bd + s·perp with c ≥ γ (cosine with β direction)
    perp = g.standard_normal((n, 3))
    perp -= np.sum(perp * bd, axis=1, keepdims=True) * bd
    perp /= np.linalg.norm(perp, axis=1, keepdims=True)
    if x_max is None:
        c = gamma + (1 - gamma) * g.random((n, 1))
        x = c * bd + np.sqrt(1 - c * c) * perp
        return float(np.max(np.linalg.norm(x - theta, axis=1)))
    r = x_max * np.sqrt(g.random((n, 1)))
    c = np.minimum(r, gamma + (r - gamma) * g.random((n, 1)))
    ok = (r >= gamma).ravel()
    x = c * bd + np.sqrt(np.maximum(r * r - c * c, 0)) * perp
    return float(np.max(np.linalg.norm(theta - x[ok] / gamma, axis=1)))


def test_distance_bounds_hold_by_monte_carlo():
    rng = RngStream(5, 5)
    for alpha, gamma in [(0.05, 0.99), (0.1, 0.995), (0.02, 0.9999)]:
        assert _mc_distance(alpha, gamma, 20_000, rng) <= distance_bound(alpha, gamma) + 1e-9
        assert _mc_distance(alpha, gamma, 20_000, rng, x_max=1.2) <= distance_bound_xmax(alpha, gamma, 1.2) + 1e-9


def test_q_gamma_circle():
    inst = Instance(features=np.zeros((1, 2)), objectives=np.eye(2))
    q = estimate_q_gamma(ContextSampler("uniform-sphere"), inst, 0.9, 20_000, 10, RngStream(1, 2))
    assert q == pytest.approx(math.acos(0.9) / math.pi, abs=0.01)


def test_q_gamma_fixed_cases():
    arms = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], dtype=float)
    good = Instance(features=arms, objectives=np.eye(2))
    assert estimate_q_gamma(ContextSampler("fixed"), good, 0.7, 100, 1000, RngStream(0, 0)) == 1.0
    same = Instance(features=np.tile([1.0, 0.0], (3, 1)), objectives=np.eye(2))
    q = estimate_q_gamma(ContextSampler("fixed"), same, 0.5, 100, 1000, RngStream(0, 0), directions=[[-1.0, 0.0]])
    assert q == 0.0
