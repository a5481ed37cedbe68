"""Small dense linear algebra and seeded random streams.

Matrices and vectors are plain ``numpy`` float arrays. Every random draw in
the package goes through an :class:`RngStream`, which is fully determined by
a ``(seed, stream_id)`` pair so that episodes can run in any order.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ContractViolation, InconsistentSystem, InvalidInput

SYMMETRY_TOL = 1e-9
SPECTRAL_CUTOFF = 1e-10
MAX_DIM = 256


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {A.shape}")
    if np.isnan(A).any():
        raise InvalidInput("matrix contains NaN entries")
    return A


def check_symmetric(A) -> np.ndarray:
    A = _as_matrix(A)
    if A.shape[0] > MAX_DIM:
        raise InvalidInput(f"dimension {A.shape[0]} exceeds {MAX_DIM}")
    asym = float(np.max(np.abs(A - A.T))) if A.size else 0.0
    if asym > SYMMETRY_TOL:
        raise ContractViolation(f"matrix is not symmetric (max |A_ij - A_ji| = {asym:.3g})")
    return A


def min_eigenvalue(A) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    A = check_symmetric(A)
    # symmetrize exactly so the solver sees a Hermitian input
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])


def orthonormal_basis(basis, dim: int | None = None, tol: float = 1e-10) -> np.ndarray:
    """Columns of an orthonormal basis for span(basis); rejects dependent inputs."""
    B = np.atleast_2d(np.asarray(basis, dtype=float))
    if dim is not None and B.shape[1] != dim:
        raise InvalidInput(f"basis vectors have dim {B.shape[1]}, expected {dim}")
    if B.shape[0] > B.shape[1]:
        raise InvalidInput("more basis vectors than the ambient dimension")
    Q, R = np.linalg.qr(B.T)
    diag = np.abs(np.diag(R))
    scale = max(float(np.max(np.linalg.norm(B, axis=1))), 1.0)
    if diag.size == 0 or np.min(diag) <= tol * scale:
        raise InvalidInput("basis is rank deficient")
    return Q


def restricted_min_eigenvalue(A, basis) -> float:
    """min of b^T A b over unit b in span(basis)."""
    A = check_symmetric(A)
    Q = orthonormal_basis(basis, A.shape[0])
    P = Q.T @ A @ Q
    return float(np.linalg.eigvalsh(0.5 * (P + P.T))[0])


def gram_update(V, x) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    x = np.asarray(x, dtype=float)
    if V.ndim != 2 or x.shape != (V.shape[0],):
        raise InvalidInput(f"dimension mismatch: V {V.shape}, x {x.shape}")
    return V + np.outer(x, x)


def least_squares_solve(V, b, cutoff: float = SPECTRAL_CUTOFF) -> np.ndarray:
    """Minimum-norm solution of V theta = b for symmetric PSD V.

    ``b`` may be a vector or a matrix of right-hand sides (one per column).

    Eigen-directions with eigenvalue below ``cutoff * lambda_max`` are treated
    as the null space. Raises :class:`InconsistentSystem` when b has a
    component there larger than the residual tolerance.
    """
    V = check_symmetric(V)
    b = np.asarray(b, dtype=float)
    if b.ndim not in (1, 2) or b.shape[0] != V.shape[0]:
        raise InvalidInput(f"dimension mismatch: V {V.shape}, b {b.shape}")
    evals, evecs = np.linalg.eigh(0.5 * (V + V.T))
    top = float(evals[-1]) if evals.size else 0.0
    keep = evals > cutoff * top if top > 0 else np.zeros_like(evals, dtype=bool)
    coef = evecs.T @ b
    inv = 1.0 / evals[keep]
    theta = evecs[:, keep] @ (coef[keep] * (inv if b.ndim == 1 else inv[:, None]))
    resid = np.linalg.norm(V @ theta - b, axis=0)
    if np.any(resid > 1e-7 * (1.0 + np.linalg.norm(b, axis=0))):
        raise InconsistentSystem(f"b is outside the column space of V (residual {np.max(resid):.3g})")
    return theta


def spanning_subset(features, tol: float = 1e-9) -> list[int]:
    """Greedy pivoted choice of arms whose features span the feature span.

    At each step the arm that maximizes the smallest nonzero eigenvalue of
    the accumulated Gram matrix is added; ties go to the lowest index.
    """
    X = np.asarray(features, dtype=float)
    rank = int(np.linalg.matrix_rank(X, tol=tol * max(1.0, float(np.abs(X).max(initial=0.0)))))
    chosen: list[int] = []
    G = np.zeros((X.shape[1], X.shape[1]))
    for k in range(rank):
        best, best_score = -1, -np.inf
        for i in range(X.shape[0]):
            if i in chosen:
                continue
            ev = np.linalg.eigvalsh(G + np.outer(X[i], X[i]))
            # (k+1)-th largest eigenvalue: the new smallest nonzero one
            score = float(ev[-(k + 1)])
            if score > best_score + 1e-15:
                best, best_score = i, score
        if best_score <= tol:
            break
        chosen.append(best)
        G += np.outer(X[best], X[best])
    return chosen


def stable_hash64(*parts) -> int:
    """64-bit hash of the string forms of ``parts``, stable across processes."""
    text = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        self.gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, self.stream_id])))

    def child(self, *parts) -> "RngStream":
        return RngStream(self.seed, stable_hash64(self.stream_id, *parts))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def draw_gaussian(rng: RngStream, mean: float = 0.0, sd: float = 1.0, size=None):
    if sd < 0:
        raise InvalidInput("sd must be nonnegative")
    if sd == 0:
        return float(mean) if size is None else np.full(size, float(mean))
    out = rng.gen.normal(mean, sd, size=size)
    return float(out) if size is None else out


def draw_uniform_sphere(rng: RngStream, d: int, positive_orthant: bool = False) -> np.ndarray:
    while True:
        g = rng.gen.standard_normal(d)
        n = np.linalg.norm(g)
        if n > 1e-300:
            break
    v = g / n
    return np.abs(v) if positive_orthant else v


def draw_uniform_ball(rng: RngStream, d: int) -> np.ndarray:
    direction = draw_uniform_sphere(rng, d)
    return direction * rng.gen.random() ** (1.0 / d)


def draw_dirichlet(rng: RngStream, alpha, size: int | None = None) -> np.ndarray:
    """Normalized independent Gamma draws.

    Gamma(a) is sampled as Gamma(a+1) * U**(1/a) in log space, which keeps
    tiny concentrations (a << 1) from underflowing to an all-zero vector.
    With ``size`` the result is a ``(size, len(alpha))`` batch.
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    if alpha.ndim != 1 or alpha.size == 0 or np.any(~(alpha > 0)):
        raise InvalidInput(f"Dirichlet concentrations must be positive, got {alpha}")
    shape = alpha.shape if size is None else (size, alpha.size)
    g = rng.gen.standard_gamma(np.broadcast_to(alpha + 1.0, shape))
    u = rng.gen.random(shape)
    logs = np.log(g) + np.log(u) / alpha
    w = np.exp(logs - logs.max(axis=-1, keepdims=True))
    return w / w.sum(axis=-1, keepdims=True)
