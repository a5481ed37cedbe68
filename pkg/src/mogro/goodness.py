"""Structural checks on an instance and the analysis constants derived from them."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidConfig
from .instances import ContextSampler, Instance, sample_context_set
from .numerics import (RngStream, draw_uniform_ball, draw_uniform_sphere, min_eigenvalue,
                       restricted_min_eigenvalue, spanning_subset)

LAMBDA_INC_VARIANTS = ("base", "x_max", "lL", "projection", "stochastic")


@dataclass
class GoodnessReport:
    lam: float
    gamma: float
    alpha: float
    alpha_requested: float
    alpha_capped: bool
    psi: float
    verified: bool
    n_directions_tested: int
    worst_margin: float
    lambda_inc: float
    B: float | None
    T0_bound: int | None
    variant: str = "base"
    gamma_threshold: float = 0.0
    assumption3_satisfied: bool = False
    subspace: bool = False
    q_gamma_hat: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _avg_outer(objectives) -> np.ndarray:
    T = np.atleast_2d(np.asarray(objectives, dtype=float))
    return T.T @ T / T.shape[0]


def lambda_of(objectives, span_basis=None) -> float:
    """λ_min of the averaged objective outer products.

    With ``span_basis`` the minimum is taken over unit vectors in that span only.
    """
    A = _avg_outer(objectives)
    if span_basis is not None:
        return max(0.0, restricted_min_eigenvalue(A, span_basis))
    return max(0.0, min_eigenvalue(A))


def psi_cap(lam: float, gamma: float) -> float:
    return (math.sqrt(lam ** 2 / 9 - lam ** 4 / 324) * gamma
            - (1 - lam ** 2 / 18) * math.sqrt(max(0.0, 1 - gamma ** 2)))


def distance_bound(alpha: float, gamma: float) -> float:
    """Largest ‖x − θ‖ for unit θ, β within α of θ and unit x with x·β/‖β‖ ≥ γ."""
    inner = 2 + 2 * alpha * math.sqrt(max(0.0, 1 - gamma ** 2)) - 2 * gamma * math.sqrt(max(0.0, 1 - alpha ** 2))
    return math.sqrt(max(0.0, inner))


def distance_bound_xmax(alpha: float, gamma: float, x_max: float) -> float:
    """Bound on ‖θ − x/γ‖ when ‖x‖ ≤ x_max."""
    r = x_max / gamma
    inner = 1 + r * r + 2 * alpha * math.sqrt(max(0.0, r * r - 1)) - 2 * math.sqrt(max(0.0, 1 - alpha ** 2))
    return math.sqrt(max(0.0, inner))


def gamma_threshold(lam: float, variant: str = "base", x_max: float = 1.0, L: float = 1.0) -> float:
    """Smallest γ the chosen λ_inc variant is designed for."""
    if variant == "x_max":
        return (x_max / lam) * math.sqrt(2 * math.sqrt(1 + lam ** 2) - 2) if lam > 0 else math.inf
    if variant == "lL":
        return 1 - lam ** 2 / (8 * L ** 4)
    return 1 - lam ** 2 / 18


def lambda_inc(lam: float, alpha: float, gamma: float, phi_hat: float, M: int,
               variant: str = "base", **extras) -> float:
    """Per-round lower bound on the expected growth of λ_min(V_t)."""
    if variant not in LAMBDA_INC_VARIANTS:
        raise InvalidConfig(f"unknown lambda_inc variant '{variant}'")
    scale = phi_hat * M
    if variant == "x_max":
        x_max = float(extras["x_max"])
        inner = (gamma ** 2 + x_max ** 2 + 2 * alpha * math.sqrt(max(0.0, x_max ** 2 - gamma ** 2))
                 - 2 * gamma ** 2 * math.sqrt(max(0.0, 1 - alpha ** 2)))
        return (lam * gamma ** 2 - 2 * x_max * math.sqrt(max(0.0, inner))) * scale
    if variant == "lL":
        l, L = float(extras["l"]), float(extras["L"])
        a = alpha / l
        inner = 2 + 2 * a * math.sqrt(max(0.0, 1 - gamma ** 2)) - 2 * gamma * math.sqrt(max(0.0, 1 - a * a))
        return (lam / L ** 2 - 2 * math.sqrt(max(0.0, inner))) * scale
    if variant == "projection":
        lam = float(extras.get("lambda1", lam))
    base = (lam - 2 * distance_bound(alpha, gamma)) * scale
    if variant == "stochastic":
        return base * float(extras["q_gamma"])
    return base


def compute_B(sigma: float, alpha: float, d: int, T: int) -> float:
    b1, b2 = B_branches(sigma, alpha, d, T)
    return min(b1, b2)


def B_branches(sigma: float, alpha: float, d: int, T: int) -> tuple[float, float]:
    if sigma <= 0 or alpha <= 0 or d < 1 or T < 2:
        raise InvalidConfig("compute_B needs sigma > 0, alpha > 0, d >= 1, T >= 2")
    b1 = (2 * sigma / alpha) * math.sqrt(2 * d * T * math.log(d * T * T))
    b2 = (16 * sigma ** 2 / alpha ** 2) * ((d / 2) * math.log(1 + 2 * T / d) + math.log(T))
    return b1, b2


def t0_bound(B: float, explore_features) -> int:
    """Upper bound on exploration rounds: ⌈B/λ_S⌉·|S|, at least one sweep.

    λ_S is taken over the span of S, so S may span a proper subspace.
    """
    S = np.atleast_2d(np.asarray(explore_features, dtype=float))
    if B <= 0:
        raise InvalidConfig("B must be positive")
    rank = np.linalg.matrix_rank(S)
    if rank < S.shape[0]:
        raise InvalidConfig("exploration set is rank deficient")
    G = S.T @ S
    lam_S = restricted_min_eigenvalue(G, S) if rank < S.shape[1] else min_eigenvalue(G)
    return max(1, math.ceil(B / lam_S - 1e-12)) * S.shape[0]


def _ball_samples(rng: RngStream, center, Q, alpha, n):
    r = Q.shape[1]
    u = np.array([draw_uniform_ball(rng, r) for _ in range(n)])
    return center + alpha * (u @ Q.T)


def verify_goodness(instance: Instance, gamma: float, alpha: float, n_directions: int = 10_000,
                    rng: RngStream | None = None, *, phi_hat: float = 1.0, T: int = 1000,
                    variant: str = "base") -> GoodnessReport:
    """Monte-Carlo γ-goodness check on balls of radius α around each objective.

    α is first lowered to ψ(λ, γ) when that is positive and smaller. When
    ψ ≤ 0 the requested α is tested as given and the report flags that the
    γ threshold of the analysis is not met.
    """
    if not 0 < gamma <= 1:
        raise InvalidConfig(f"gamma={gamma} must lie in (0, 1]")
    if not alpha > 0:
        raise InvalidConfig(f"alpha={alpha} must be positive")
    rng = rng or RngStream(0, 0)
    X = instance.features
    d = instance.d
    rank = int(np.linalg.matrix_rank(X))
    subspace = rank < d
    if subspace:
        Q = np.linalg.qr(X[spanning_subset(X)].T)[0]
        centers = instance.objectives @ Q @ Q.T
        lam = lambda_of(instance.objectives, span_basis=Q.T)
    else:
        Q = np.eye(d)
        centers = instance.objectives
        lam = lambda_of(instance.objectives)
    psi = psi_cap(lam, gamma) if lam > 0 else -math.inf
    a = alpha
    capped = False
    if psi > 0 and alpha > psi:
        a, capped = psi, True
    worst = math.inf
    for m in range(instance.M):
        betas = _ball_samples(rng.child("ball", m), centers[m], Q, a, n_directions)
        norms = np.linalg.norm(betas, axis=1, keepdims=True)
        betas = betas / np.where(norms > 0, norms, 1.0)
        worst = min(worst, float(np.min(np.max(betas @ X.T, axis=1))))
    verified = worst >= gamma - 1e-12
    thr = gamma_threshold(lam, variant, x_max=instance.x_max, L=instance.L)
    extras = {"x_max": instance.x_max, "l": instance.l, "L": instance.L, "lambda1": lam, "q_gamma": 1.0}
    inc = lambda_inc(lam, a, gamma, phi_hat, instance.M, variant, **extras)
    B = T0 = None
    if instance.sigma > 0 and T >= 2:
        B = compute_B(instance.sigma, a, d, T)
        T0 = t0_bound(B, X[spanning_subset(X)])
    return GoodnessReport(
        lam=lam, gamma=gamma, alpha=a, alpha_requested=alpha, alpha_capped=capped, psi=psi,
        verified=verified, n_directions_tested=n_directions * instance.M, worst_margin=worst,
        lambda_inc=inc, B=B, T0_bound=T0, variant=variant, gamma_threshold=thr,
        assumption3_satisfied=(gamma >= thr) if variant == "base" else (gamma > thr),
        subspace=subspace,
    )


def estimate_q_gamma(sampler: ContextSampler, instance: Instance, gamma: float, n_rounds: int,
                     n_directions: int, rng: RngStream, directions=None) -> float:
    """Min over unit directions of the frequency that a context set has a γ-good arm."""
    d = instance.d
    dirs = [draw_uniform_sphere(rng.child("dir"), d) for _ in range(n_directions)] if n_directions else []
    if directions is not None:
        dirs.extend(np.atleast_2d(np.asarray(directions, dtype=float)))
    D = np.array(dirs)
    D = D / np.linalg.norm(D, axis=1, keepdims=True)
    ctx_rng = rng.child("contexts")
    hits = np.zeros(len(D))
    for _ in range(n_rounds):
        X = sample_context_set(sampler, instance, ctx_rng)
        hits += np.max(X @ D.T, axis=0) >= gamma
    return float(hits.min() / n_rounds)
