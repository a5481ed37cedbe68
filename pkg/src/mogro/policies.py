"""Arm-selection rules: the MOGRO family and the three baselines.

Every policy shares one estimator and one exploration gate: arms of the
exploration set are pulled in round-robin order until the minimum
eigenvalue of the Gram matrix (restricted to the feature span for
``mogro_general``) reaches ``B``. Only the greedy rule differs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, InvalidConfig, InvalidInput
from .numerics import (RngStream, draw_dirichlet, least_squares_solve, min_eigenvalue,
                       orthonormal_basis, restricted_min_eigenvalue)
from .pareto import pareto_front

POLICY_KINDS = ("mogro_rw", "mogro_rr", "mogro_general", "epsilon_greedy", "ucb", "thompson")

EXPLORING, GREEDY = "exploring", "greedy"


@dataclass
class PolicyConfig:
    kind: str
    B: float | str = 1.0
    dirichlet_alpha: tuple[float, ...] | None = None  # None means all ones
    epsilon: float = 0.1
    ucb_beta_scale: float = 1.0
    ts_scale: float = 1.0
    ts_samples: int = 10
    alpha: float | None = None
    gamma: float | None = None
    fixed_weight: tuple[float, ...] | None = None
    name: str | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise InvalidConfig(f"unknown policy kind '{self.kind}' (expected one of {POLICY_KINDS})")
        if isinstance(self.B, str):
            if self.B != "theoretical":
                raise InvalidConfig(f"B must be a number or 'theoretical', got '{self.B}'")
        elif not self.B > 0:
            raise InvalidConfig("B must be positive")
        if self.kind == "epsilon_greedy" and not 0 <= self.epsilon <= 1:
            raise InvalidConfig("epsilon must lie in [0, 1]")
        if self.kind == "ucb" and self.ucb_beta_scale < 0:
            raise InvalidConfig("ucb_beta_scale must be >= 0")
        if self.kind == "thompson" and (self.ts_scale < 0 or self.ts_samples < 1):
            raise InvalidConfig("ts_scale must be >= 0 and ts_samples >= 1")
        if self.dirichlet_alpha is not None:
            self.dirichlet_alpha = tuple(float(a) for a in self.dirichlet_alpha)
            if any(not a > 0 for a in self.dirichlet_alpha):
                raise InvalidConfig("dirichlet_alpha entries must be positive")

    @property
    def label(self) -> str:
        return self.name or self.kind


@dataclass
class EstimatorState:
    d: int
    M: int
    explore_set: list[int]
    B: float
    V: np.ndarray = None
    b: np.ndarray = None  # (d, M): column m is sum of x * y_m
    theta_hat: np.ndarray = None  # (M, d)
    t: int = 0
    explore_cursor: int = 0
    phase: str = EXPLORING
    span_basis: np.ndarray | None = None  # orthonormal rows; None means all of R^d
    t0: int | None = None
    history: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.explore_set:
            raise InvalidConfig("exploration set is empty")
        if self.V is None:
            self.V = np.zeros((self.d, self.d))
        if self.b is None:
            self.b = np.zeros((self.d, self.M))
        if self.theta_hat is None:
            self.theta_hat = np.zeros((self.M, self.d))

    def gate_eigenvalue(self) -> float:
        if self.span_basis is None:
            return min_eigenvalue(self.V)
        return restricted_min_eigenvalue(self.V, self.span_basis)

    def refresh(self) -> None:
        self.theta_hat = least_squares_solve(self.V, self.b).T


def new_state(config: PolicyConfig, d: int, M: int, explore_set, B: float, features=None) -> EstimatorState:
    """Fresh estimator. ``features`` fixes the span for ``mogro_general``."""
    basis = None
    if config.kind == "mogro_general" and features is not None:
        X = np.asarray(features, dtype=float)
        r = int(np.linalg.matrix_rank(X))
        if r < d:
            # explore_set spans the feature span, so its rows give the basis
            basis = orthonormal_basis(X[list(explore_set)], d).T
    return EstimatorState(d=d, M=M, explore_set=list(explore_set), B=float(B), span_basis=basis)


def _weight(config: PolicyConfig, M: int, rng: RngStream) -> np.ndarray:
    if config.fixed_weight is not None:
        return np.asarray(config.fixed_weight, dtype=float)
    return draw_dirichlet(rng, config.dirichlet_alpha if config.dirichlet_alpha is not None else np.ones(M))


def rr_objective(t: int, M: int) -> int:
    """0-based objective targeted at round t (t mod M, with 0 read as M)."""
    m = t % M
    return (M if m == 0 else m) - 1


def policy_step(state: EstimatorState, config: PolicyConfig, contexts, rng: RngStream) -> tuple[int, dict]:
    X = np.asarray(contexts, dtype=float)
    if X.ndim != 2 or X.shape[1] != state.d:
        raise InvalidInput(f"contexts must be (K, {state.d}), got {X.shape}")
    t = state.t + 1
    eig = state.gate_eigenvalue()
    if state.phase == EXPLORING and eig >= state.B:
        state.phase = GREEDY
        state.t0 = state.t
        state.refresh()
    rec = {"t": t, "phase": state.phase, "min_eig": eig, "weight": None}
    if state.phase == EXPLORING:
        arm = state.explore_set[state.explore_cursor]
        state.explore_cursor = (state.explore_cursor + 1) % len(state.explore_set)
        return int(arm), rec
    kind = config.kind
    if kind in ("mogro_rw", "mogro_general"):
        w = _weight(config, state.M, rng)
        scores = X @ (state.theta_hat.T @ w)
        rec["weight"] = w
        arm = int(np.argmax(scores))
    elif kind == "mogro_rr":
        m = rr_objective(t, state.M)
        rec["objective"] = m
        arm = int(np.argmax(X @ state.theta_hat[m]))
    elif kind == "epsilon_greedy":
        arm = baseline_epsilon_greedy_step(state, config, X, rng)
    elif kind == "ucb":
        arm = baseline_ucb_step(state, config, X, rng)
    else:
        arm, rec["weight"] = baseline_thompson_step(state, config, X, rng, return_weight=True)
    return arm, rec


def observe(state: EstimatorState, x, y) -> EstimatorState:
    x = np.asarray(x, dtype=float)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != (state.d,) or y.shape != (state.M,):
        raise InvalidInput(f"observe: x {x.shape}, y {y.shape} do not match d={state.d}, M={state.M}")
    state.V += np.outer(x, x)
    state.b += np.outer(x, y)
    state.t += 1
    if state.phase == GREEDY:
        state.refresh()
    return state


def _uniform_pick(items, rng: RngStream) -> int:
    return int(items[int(rng.gen.integers(len(items)))])


def baseline_epsilon_greedy_step(state, config, contexts, rng) -> int:
    """Uniform arm w.p. ε, else a uniform member of the empirical Pareto front."""
    X = np.asarray(contexts, dtype=float)
    if rng.gen.random() < config.epsilon:
        return int(rng.gen.integers(X.shape[0]))
    return _uniform_pick(pareto_front(X @ state.theta_hat.T), rng)


def ucb_indices(state: EstimatorState, config: PolicyConfig, contexts) -> np.ndarray:
    X = np.asarray(contexts, dtype=float)
    try:
        Vinv = np.linalg.inv(state.V)
    except np.linalg.LinAlgError:
        raise ContractViolation("UCB needs a nonsingular Gram matrix") from None
    width = np.sqrt(np.maximum(0.0, np.einsum("ij,jk,ik->i", X, Vinv, X)))
    bonus = config.ucb_beta_scale * math.sqrt(math.log(1 + state.t + 1)) * width
    return X @ state.theta_hat.T + bonus[:, None]


def baseline_ucb_step(state, config, contexts, rng) -> int:
    return _uniform_pick(pareto_front(ucb_indices(state, config, contexts)), rng)


def baseline_thompson_step(state, config, contexts, rng, return_weight: bool = False):
    """Random-weight Thompson sampling, optimistic over ``ts_samples`` draws."""
    X = np.asarray(contexts, dtype=float)
    w = draw_dirichlet(rng, np.ones(state.M))
    if config.ts_scale == 0:
        opt = X @ state.theta_hat.T
    else:
        evals, evecs = np.linalg.eigh(state.V)
        if evals[0] <= 0:
            raise ContractViolation("Thompson sampling needs a nonsingular Gram matrix")
        root = evecs / np.sqrt(evals)  # root @ root.T = V^-1
        z = rng.gen.standard_normal((state.M, config.ts_samples, state.d))
        draws = state.theta_hat[:, None, :] + config.ts_scale * z @ root.T  # (M, S, d)
        opt = np.max(np.einsum("kd,msd->kms", X, draws), axis=2)
    arm = int(np.argmax(opt @ w))
    return (arm, w) if return_weight else arm
