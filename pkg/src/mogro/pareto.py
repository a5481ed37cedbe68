"""Pareto and effective-Pareto optimality, regret and fairness metrics.

A reward table is a ``(K, M)`` array whose row ``i`` is the expected reward
vector of arm ``i``. Arm indices are 0-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .errors import InvalidInput
from .numerics import RngStream, draw_dirichlet

OPTIMAL_TOL = 1e-9


def as_table(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.ndim == 1:
        mu = mu[:, None]
    if mu.ndim != 2 or mu.shape[0] < 1 or mu.shape[1] < 1:
        raise InvalidInput(f"reward table must be (K, M) with K, M >= 1, got {mu.shape}")
    if not np.all(np.isfinite(mu)):
        raise InvalidInput("reward table has non-finite entries")
    return mu


def reward_table(features, objectives) -> np.ndarray:
    """Expected rewards ``mu[i, m] = x_i . theta_m``."""
    return np.asarray(features, dtype=float) @ np.asarray(objectives, dtype=float).T


@dataclass(frozen=True)
class GapResult:
    pareto_gap: float
    effective_gap: float
    witness_weight: np.ndarray | None = None


def dominated_mask(mu) -> np.ndarray:
    """``mask[i]`` is True when some other row weakly dominates row ``i`` with a strict gain."""
    mu = as_table(mu)
    ge = np.all(mu[:, None, :] >= mu[None, :, :], axis=2)  # ge[j, i]: mu_j >= mu_i
    gt = np.any(mu[:, None, :] > mu[None, :, :], axis=2)
    return np.any(ge & gt, axis=0)


def pareto_front(mu) -> list[int]:
    return [int(i) for i in np.flatnonzero(~dominated_mask(mu))]


def pareto_gaps(mu) -> np.ndarray:
    """Pareto suboptimality gap of every arm."""
    mu = as_table(mu)
    K = mu.shape[0]
    # margin[j, i] = min_m (mu_j,m - mu_i,m)
    margin = np.min(mu[:, None, :] - mu[None, :, :], axis=2)
    margin[np.arange(K), np.arange(K)] = -np.inf
    return np.maximum(0.0, margin.max(axis=0)) if K > 1 else np.zeros(1)


def pareto_gap(mu, i: int) -> float:
    mu = as_table(mu)
    _check_arm(mu, i)
    return float(pareto_gaps(mu)[i])


def _check_arm(mu, i):
    if not 0 <= i < mu.shape[0]:
        raise InvalidInput(f"arm index {i} out of range for K={mu.shape[0]}")


def solve_maxmin(A, max_iter: int = 10_000) -> tuple[float, np.ndarray]:
    """Value and maximizing strategy of ``max_{w in simplex} min_m (A^T w)_m``.

    ``A`` is ``(K, M)``. The game is shifted to have positive payoffs and the
    column player's LP ``max 1^T q s.t. A' q <= 1, q >= 0`` is solved with a
    dense tableau simplex (Bland's rule). The row strategy is read off the
    slack duals of the final tableau.
    """
    A = np.asarray(A, dtype=float)
    K, M = A.shape
    shift = 1.0 - float(A.min())
    Ap = A + shift
    T = np.zeros((K + 1, M + K + 1))
    T[:K, :M] = Ap
    T[:K, M:M + K] = np.eye(K)
    T[:K, -1] = 1.0
    T[K, :M] = -1.0
    basis = list(range(M, M + K))
    tol = 1e-12
    for _ in range(max_iter):
        neg = np.flatnonzero(T[K, :-1] < -tol)
        if neg.size == 0:
            break
        col = int(neg[0])
        colv = T[:K, col]
        pos = colv > tol
        if not pos.any():  # cannot happen: Ap > 0 bounds q
            raise RuntimeError("unbounded max-min LP")
        ratios = np.full(K, np.inf)
        ratios[pos] = T[:K, -1][pos] / colv[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best * (1 + 1e-12) + 1e-15)
        row = int(min(ties, key=lambda r: basis[r]))
        T[row] /= T[row, col]
        for r in range(K + 1):
            if r != row and T[r, col] != 0.0:
                T[r] -= T[r, col] * T[row]
        basis[row] = col
    else:
        raise RuntimeError("simplex iteration limit reached")
    y = np.maximum(T[K, M:M + K], 0.0)
    w = y / y.sum()
    value = float(np.min(A.T @ w))
    return value, w


def effective_pareto_gap(mu, i: int) -> GapResult:
    """Largest uniform margin by which a mixture of arms beats arm ``i`` on every objective."""
    mu = as_table(mu)
    _check_arm(mu, i)
    value, w = solve_maxmin(mu - mu[i])
    pg = pareto_gap(mu, i)
    eg = max(0.0, value)
    # the LP optimum is never below a single-arm witness; guard rounding
    eg = max(eg, pg)
    return GapResult(pareto_gap=pg, effective_gap=eg, witness_weight=w if eg > OPTIMAL_TOL else None)


def effective_pareto_gaps(mu) -> np.ndarray:
    mu = as_table(mu)
    return np.array([effective_pareto_gap(mu, i).effective_gap for i in range(mu.shape[0])])


def effective_pareto_front(mu) -> list[int]:
    """Arms with zero effective gap (at tolerance 1e-9) that are also Pareto optimal."""
    mu = as_table(mu)
    front = set(pareto_front(mu))
    return [i for i in range(mu.shape[0]) if i in front and effective_pareto_gap(mu, i).effective_gap <= OPTIMAL_TOL]


def weighted_optimum(mu, w) -> int:
    """Lowest-index maximizer of ``w . mu_i``."""
    mu = as_table(mu)
    w = np.asarray(w, dtype=float)
    if w.shape != (mu.shape[1],):
        raise InvalidInput(f"weight has shape {w.shape}, expected ({mu.shape[1]},)")
    return int(np.argmax(mu @ w))


def accumulate_regret(pareto_gaps_seq, effective_gaps_seq) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative Pareto regret PR(t) and effective Pareto regret EPR(t)."""
    pr = np.cumsum(np.asarray(pareto_gaps_seq, dtype=float))
    epr = np.cumsum(np.asarray(effective_gaps_seq, dtype=float))
    return pr, epr


@dataclass(frozen=True)
class WeightDistribution:
    """Dirichlet(alpha) on the objective simplex, or a point mass at ``point``."""

    alpha: tuple[float, ...] | None = None
    point: tuple[float, ...] | None = None

    @classmethod
    def dirichlet(cls, alpha) -> "WeightDistribution":
        return cls(alpha=tuple(float(a) for a in np.atleast_1d(alpha)))

    @classmethod
    def point_mass(cls, w) -> "WeightDistribution":
        return cls(point=tuple(float(a) for a in w))

    @property
    def M(self) -> int:
        return len(self.alpha if self.alpha is not None else self.point)

    def sample(self, rng: RngStream) -> np.ndarray:
        if self.point is not None:
            return np.array(self.point)
        return draw_dirichlet(rng, self.alpha)

    def sample_many(self, rng: RngStream, n: int) -> np.ndarray:
        if self.point is not None:
            return np.tile(np.array(self.point), (n, 1))
        return draw_dirichlet(rng, self.alpha, size=n)


def simplex_grid(M: int, resolution: int) -> np.ndarray:
    """All weights with coordinates in {0, 1/r, ..., 1} summing to one."""
    if M == 1:
        return np.ones((1, 1))
    pts = []
    for combo in combinations_with_replacement(range(M), resolution):
        counts = np.bincount(combo, minlength=M)
        pts.append(counts / resolution)
    return np.array(pts)


def min_grid_resolution(M: int, n_min: int = 100) -> int:
    r = 1
    while M > 1 and _grid_size(M, r) < n_min:
        r += 1
    return r


def _grid_size(M, r):
    from math import comb
    return comb(r + M - 1, M - 1)


def epfi_weights(M: int, resolution: int | None = None, rng: RngStream | None = None,
                 n_samples: int = 10_000) -> tuple[np.ndarray, dict]:
    """Weights over which the infimum in the fairness index is approximated."""
    if M <= 3:
        r = resolution if resolution is not None else min_grid_resolution(M)
        W = simplex_grid(M, r)
        return W, {"method": "grid", "resolution": r, "n_weights": len(W)}
    if rng is None:
        rng = RngStream(0, 0)
    W = draw_dirichlet(rng, np.ones(M), size=max(n_samples, 10_000))
    return W, {"method": "dirichlet-sample", "resolution": len(W), "n_weights": len(W)}


def epfi_exact_estimate(arms, tables, epsilon: float, resolution: int | None = None,
                        rng: RngStream | None = None, return_meta: bool = False):
    """Approximate effective Pareto fairness index of an arm sequence.

    ``tables`` is one ``(K, M)`` table (fixed features) or a ``(T, K, M)``
    stack with one table per round.
    """
    if epsilon <= 0:
        raise InvalidInput("epsilon must be positive")
    arms = np.asarray(arms, dtype=int)
    tables = np.asarray(tables, dtype=float)
    M = tables.shape[-1]
    W, meta = epfi_weights(M, resolution, rng)
    T = len(arms)
    if T == 0:
        value = 0.0
    elif tables.ndim == 2:
        scores = tables @ W.T  # (K, W)
        ok = (scores.max(axis=0) - scores) < epsilon
        counts = np.bincount(arms, minlength=tables.shape[0])
        value = float(np.min(counts @ ok) / T)
    else:
        hits = np.zeros(len(W))
        for start in range(0, T, 256):
            tb = tables[start:start + 256]
            a = arms[start:start + 256]
            scores = tb @ W.T  # (b, K, W)
            chosen = scores[np.arange(len(a)), a]
            hits += np.sum((scores.max(axis=1) - chosen) < epsilon, axis=0)
        value = float(hits.min() / T)
    return (value, meta) if return_meta else value


def epfi_ball_proxy(arms, table, epsilon: float) -> float:
    """Worst-case, over effective-front arms, fraction of rounds whose pick is
    within sup-norm ``epsilon`` of that arm in reward space."""
    if epsilon <= 0:
        raise InvalidInput("epsilon must be positive")
    table = as_table(table)
    arms = np.asarray(arms, dtype=int)
    if len(arms) == 0:
        return 0.0
    front = effective_pareto_front(table)
    counts = np.bincount(arms, minlength=table.shape[0])
    best = np.inf
    for a in front:
        close = np.max(np.abs(table - table[a]), axis=1) < epsilon
        best = min(best, counts[close].sum() / len(arms))
    return float(best)


def pareto_fairness_variance(arms, front) -> float:
    """Population variance of pull counts over the arms in ``front``."""
    front = list(front)
    if not front:
        return 0.0
    arms = np.asarray(arms, dtype=int)
    counts = np.array([np.sum(arms == i) for i in front], dtype=float)
    return float(np.mean((counts - counts.mean()) ** 2))


def regularity_indices(distribution: WeightDistribution, objectives, epsilon: float,
                       n_samples: int, rng: RngStream, n_anchors: int = 200) -> tuple[float, float]:
    """Monte-Carlo estimates of the two regularity indices of a weight distribution.

    ``phi`` is the smallest probability that the weighted objective lands
    within ``epsilon`` of a single objective. ``psi`` replaces the objectives
    by ``n_anchors`` anchor weights (the simplex vertices plus Dirichlet(1)
    draws); taking a minimum over finitely many anchors biases it upward.
    """
    theta = np.asarray(objectives, dtype=float)
    M = theta.shape[0]
    W = distribution.sample_many(rng, n_samples)
    tw = W @ theta
    phi = min(float(np.mean(np.linalg.norm(tw - theta[m], axis=1) < epsilon)) for m in range(M))
    anchors = [np.eye(M)[m] for m in range(M)]
    anchor_rng = rng.child("anchors")
    while len(anchors) < n_anchors:
        anchors.append(draw_dirichlet(anchor_rng, np.ones(M)))
    psi = 1.0
    for a in anchors:
        psi = min(psi, float(np.mean(np.linalg.norm(tw - a @ theta, axis=1) < epsilon)))
    return phi, psi
