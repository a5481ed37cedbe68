"""Problem instances: synthetic generator, lower-bound family, context
samplers, reward noise and CSV ingestion."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidConfig, ParseError, RankError, SchemaError
from .numerics import RngStream, draw_uniform_ball, draw_uniform_sphere
from .pareto import effective_pareto_gap, reward_table

NORM_TOL = 1e-9
ANCHOR_COV = 0.1
BAND_LOW, BAND_HIGH = 0.75, 1.0

WINE_FEATURES = (
    "fixed acidity", "volatile acidity", "citric acid", "residual sugar", "chlorides",
    "free sulfur dioxide", "total sulfur dioxide", "density", "pH", "sulphates",
)
WINE_OBJECTIVES = ("alcohol", "quality", "red")


@dataclass(frozen=True, eq=False)
class Instance:
    features: np.ndarray  # (K, d)
    objectives: np.ndarray  # (M, d)
    sigma: float = 0.1
    x_max: float = 1.0
    l: float = 1.0
    L: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "features", np.atleast_2d(np.asarray(self.features, dtype=float)))
        object.__setattr__(self, "objectives", np.atleast_2d(np.asarray(self.objectives, dtype=float)))

    @property
    def K(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def M(self) -> int:
        return self.objectives.shape[0]

    def means(self, features=None) -> np.ndarray:
        return reward_table(self.features if features is None else features, self.objectives)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (np.array_equal(self.features, other.features)
                and np.array_equal(self.objectives, other.objectives)
                and (self.sigma, self.x_max, self.l, self.L) == (other.sigma, other.x_max, other.l, other.L))

    def to_json(self) -> str:
        return dump_instance_json(self)

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        return load_instance_json(text)


def _num(x: float) -> str:
    return format(float(x), ".17g")


def _rows(a) -> str:
    return "[" + ", ".join("[" + ", ".join(_num(v) for v in row) + "]" for row in a) + "]"


def dump_instance_json(inst: Instance) -> str:
    """Instance JSON with every number at 17 significant digits."""
    parts = [
        f'"d": {inst.d}', f'"M": {inst.M}', f'"K": {inst.K}',
        f'"sigma": {_num(inst.sigma)}', f'"x_max": {_num(inst.x_max)}',
        f'"l": {_num(inst.l)}', f'"L": {_num(inst.L)}',
        f'"features": {_rows(inst.features)}', f'"objectives": {_rows(inst.objectives)}',
    ]
    return "{" + ", ".join(parts) + "}\n"


def load_instance_json(text: str) -> Instance:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"instance JSON: {e}") from None
    for key in ("features", "objectives", "sigma"):
        if key not in obj:
            raise SchemaError(f"instance JSON is missing key '{key}'")
    inst = Instance(
        features=np.array(obj["features"], dtype=float),
        objectives=np.array(obj["objectives"], dtype=float),
        sigma=float(obj["sigma"]),
        x_max=float(obj.get("x_max", 1.0)),
        l=float(obj.get("l", 1.0)),
        L=float(obj.get("L", 1.0)),
    )
    for key, val in (("d", inst.d), ("M", inst.M), ("K", inst.K)):
        if key in obj and int(obj[key]) != val:
            raise SchemaError(f"instance JSON declares {key}={obj[key]} but arrays give {val}")
    return inst


def save_instance(inst: Instance, path) -> None:
    Path(path).write_text(dump_instance_json(inst), encoding="utf-8")


def load_instance(path) -> Instance:
    return load_instance_json(Path(path).read_text(encoding="utf-8"))


def validate_instance(inst: Instance) -> list[str]:
    """Human-readable violations of the instance invariants (empty when valid)."""
    out = []
    if inst.sigma < 0 or not math.isfinite(inst.sigma):
        out.append(f"sigma={inst.sigma} must be finite and >= 0")
    if inst.features.shape[1] != inst.objectives.shape[1]:
        out.append(f"features have dim {inst.features.shape[1]} but objectives have dim {inst.objectives.shape[1]}")
        return out
    for i, x in enumerate(inst.features):
        n = float(np.linalg.norm(x))
        if n > inst.x_max + NORM_TOL:
            out.append(f"features[{i}]: ||x||={n:.12g} exceeds x_max={inst.x_max:.12g}")
    for m, th in enumerate(inst.objectives):
        n = float(np.linalg.norm(th))
        if not inst.l - NORM_TOL <= n <= inst.L + NORM_TOL:
            out.append(f"objectives[{m}]: ||theta||={n:.12g} outside [l, L]=[{inst.l:.12g}, {inst.L:.12g}]")
    return out


def _rescale(v, magnitude):
    n = np.linalg.norm(v)
    return v * (magnitude / n) if n > 0 else v


def _band(rng: RngStream) -> float:
    return float(rng.gen.uniform(BAND_LOW, BAND_HIGH))


def _synthetic_features(rng: RngStream, objectives: np.ndarray, K: int) -> np.ndarray:
    M, d = objectives.shape
    feats = []
    for m in range(M):
        g = objectives[m] + rng.gen.normal(0.0, math.sqrt(ANCHOR_COV), size=d)
        feats.append(_rescale(g, _band(rng)))
    for _ in range(M):
        feats.append(_rescale(draw_uniform_ball(rng, d), _band(rng)))
    for _ in range(K - 2 * M):
        feats.append(_rescale(draw_uniform_ball(rng, d), float(rng.gen.uniform(0.0, BAND_LOW))))
    return np.array(feats)


def generate_synthetic(rng: RngStream, d: int, K: int, M: int, sigma: float = 0.1) -> Instance:
    """Random instance with objectives on the positive unit sphere.

    The first M arms are Gaussian perturbations of the objectives, the next M
    are random directions; both groups get magnitudes in (3/4, 1). The rest
    get magnitudes below 3/4.
    """
    if d < 1 or M < 1:
        raise InvalidConfig("d and M must be >= 1")
    if K <= 2 * M:
        raise InvalidConfig(f"K={K} must exceed 2M={2 * M}")
    objectives = np.array([draw_uniform_sphere(rng, d, positive_orthant=True) for _ in range(M)])
    return Instance(features=_synthetic_features(rng, objectives, K), objectives=objectives, sigma=sigma)


def _positive_root(a, b, c, what):
    disc = b * b - 4 * a * c
    if disc < 0:
        raise InvalidConfig(f"no real root for {what}")
    return (-b + math.sqrt(disc)) / (2 * a)


@dataclass
class LbInstanceFamily:
    """d problem instances sharing one feature set (arms = all parameters)."""

    d: int
    epsilon: float
    k: float
    k_prime: float
    thetas: np.ndarray  # (d instances, M=d objectives, d)
    features: np.ndarray  # (d*d, d); features[m*d + j] = thetas[j, m]
    epsilon_prime: float | None = None
    readings: dict = field(default_factory=dict)

    def instance(self, j: int, sigma: float = 0.1) -> Instance:
        return Instance(features=self.features, objectives=self.thetas[j], sigma=sigma)


def build_lowerbound_family(d: int, epsilon: float) -> LbInstanceFamily:
    if d < 2:
        raise InvalidConfig("lower-bound family needs d >= 2")
    if not 0 < epsilon < 1:
        raise InvalidConfig(f"epsilon={epsilon} must lie in (0, 1)")
    eps = float(epsilon)
    if d == 2:
        eps_p = min(2 * eps, (1 + eps) / 2)
        k = _positive_root(2.0, 2 * eps, eps * eps - 1, "k")
        k_p = _positive_root(2.0, 2 * eps_p, eps_p * eps_p - 1, "k'")
        # literal constraint 2k'^2 + 2k'eps + eps^2 = 1 gives k' = k, which breaks unit norm
        k_p_literal = _positive_root(2.0, 2 * eps, eps * eps - 1, "k' (literal)")
        lit_norm = math.hypot(k_p_literal + eps_p, k_p_literal)
        thetas = np.array([
            [[k + eps, k], [k_p + eps_p, k_p]],
            [[k, k + eps], [k_p, k_p + eps_p]],
        ])
        readings = {
            "k_prime_with_epsilon_prime": k_p,
            "k_prime_literal_epsilon": k_p_literal,
            "literal_reading_theta2_norm": lit_norm,
            "adopted": "epsilon_prime",
        }
    else:
        eps_p = None
        k = _positive_root(float(d), 2 * eps, eps * eps - 1, "k")
        k_p = _positive_root(float(d), 2 * eps, 5 * eps * eps - 1, "k'")
        thetas = np.empty((d, d, d))
        for j in range(d):
            thetas[j, 0] = k
            thetas[j, 0, j] += eps
            for m in range(1, d):
                v = np.full(d, k_p)
                v[j] += 2 * eps
                v[(j + m) % d] -= eps
                thetas[j, m] = v
        readings = {}
    features = np.array([thetas[j, m] for m in range(d) for j in range(d)])
    return LbInstanceFamily(d=d, epsilon=eps, k=k, k_prime=k_p, thetas=thetas, features=features,
                            epsilon_prime=eps_p, readings=readings)


def lowerbound_epsilon(d: int, T: int) -> float:
    """Gap scale that makes the lower-bound family hard at horizon T."""
    if d < 2 or T < 1:
        raise InvalidConfig("need d >= 2 and T >= 1")
    return math.sqrt(1.0 - 1.0 / (1.0 + 0.5 * math.sqrt(d / T)))


def verify_lowerbound_family(fam: LbInstanceFamily, gap_tol: float = 1e-6) -> dict:
    """Numerical check of the identities the construction is built to satisfy."""
    d, eps = fam.d, fam.epsilon
    norms = np.concatenate([np.linalg.norm(fam.features, axis=1), np.linalg.norm(fam.thetas.reshape(-1, d), axis=1)])
    report: dict = {
        "d": d, "epsilon": eps, "k": fam.k, "k_prime": fam.k_prime,
        "epsilon_prime": fam.epsilon_prime, "readings": fam.readings,
        "max_norm_deviation": float(np.max(np.abs(norms - 1.0))),
    }
    cross = [float(fam.thetas[j, 0] @ fam.thetas[jj, 0]) for j in range(d) for jj in range(d) if j != jj]
    report["max_first_objective_cross_deviation"] = float(np.max(np.abs(np.array(cross) - (1 - eps ** 2))))
    if d >= 3:
        first_vs_other = [float(fam.thetas[j, 0] @ fam.thetas[js, mp])
                          for j in range(d) for js in range(d) if js != j for mp in range(1, d)]
        other_vs_other = [float(fam.thetas[j, m] @ fam.thetas[js, mp])
                          for j in range(d) for js in range(d) if js != j
                          for m in range(1, d) for mp in range(1, d)]
        report["max_first_vs_other"] = max(first_vs_other)
        report["bound_first_vs_other"] = 1 - 3 * eps ** 2
        report["max_other_vs_other"] = max(other_vs_other)
        report["bound_other_vs_other"] = 1 - 4 * eps ** 2
    good_gaps, bad_gaps = [], []
    for js in range(d):
        mu = reward_table(fam.features, fam.thetas[js])
        for j in range(d):
            if j == js:
                continue
            good_gaps.append(effective_pareto_gap(mu, j).effective_gap)
            for m in range(1, d):
                bad_gaps.append(effective_pareto_gap(mu, m * d + j).effective_gap)
    report["good_arm_gap_min"] = min(good_gaps)
    report["good_arm_gap_max"] = max(good_gaps)
    report["other_arm_gap_min"] = min(bad_gaps)
    required = 3 * eps ** 2 if d >= 3 else eps ** 2
    report["other_arm_gap_required"] = required
    checks = {
        "unit_norms": report["max_norm_deviation"] <= 1e-9,
        "first_objective_cross": report["max_first_objective_cross_deviation"] <= 1e-9,
        "good_arm_gap_is_eps2": abs(report["good_arm_gap_min"] - eps ** 2) <= gap_tol
        and abs(report["good_arm_gap_max"] - eps ** 2) <= gap_tol,
    }
    if d >= 3:
        checks["first_vs_other_bound"] = report["max_first_vs_other"] <= 1 - 3 * eps ** 2 + 1e-9
        checks["other_vs_other_bound"] = abs(report["max_other_vs_other"] - (1 - 4 * eps ** 2)) <= 1e-9
        checks["other_arm_gaps"] = report["other_arm_gap_min"] >= required - gap_tol
    else:
        checks["other_arm_gaps"] = report["other_arm_gap_min"] > required
    report["checks"] = checks
    report["passed"] = all(checks.values())
    return report


CONTEXT_KINDS = ("fixed", "uniform-ball", "uniform-sphere", "anchored-gaussian")


@dataclass(frozen=True)
class ContextSampler:
    kind: str = "fixed"

    def __post_init__(self):
        if self.kind not in CONTEXT_KINDS:
            raise InvalidConfig(f"unknown context kind '{self.kind}' (expected one of {CONTEXT_KINDS})")

    @property
    def stochastic(self) -> bool:
        return self.kind != "fixed"


def sample_context_set(sampler: ContextSampler, inst: Instance, rng: RngStream) -> np.ndarray:
    if sampler.kind == "fixed":
        return inst.features
    if sampler.kind == "uniform-ball":
        return np.array([draw_uniform_ball(rng, inst.d) for _ in range(inst.K)])
    if sampler.kind == "uniform-sphere":
        return np.array([draw_uniform_sphere(rng, inst.d) for _ in range(inst.K)])
    return _synthetic_features(rng, inst.objectives, inst.K)


def sample_reward(inst: Instance, x, rng: RngStream) -> np.ndarray:
    mean = inst.objectives @ np.asarray(x, dtype=float)
    if inst.sigma == 0:
        return mean
    return mean + rng.gen.normal(0.0, inst.sigma, size=inst.M)


def _read_csv(csv_source):
    if isinstance(csv_source, (str, Path)) and Path(csv_source).exists():
        text = Path(csv_source).read_text(encoding="utf-8")
    elif hasattr(csv_source, "read"):
        text = csv_source.read()
    else:
        text = str(csv_source)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("CSV is empty") from None
    return [h.strip() for h in header], [r for r in reader if r]


def ingest_tabular(csv_source, feature_columns, objective_columns, noise_sd: float = 1.0,
                   K: int | None = None, rng: RngStream | None = None) -> Instance:
    """Semi-synthetic instance from a table of numeric columns.

    Feature columns are z-scored, rows are scaled so the largest row norm is
    one, and each objective column is regressed (least squares, no intercept)
    on the resulting features. With centered features the slopes match the
    intercept model; the dropped per-objective offset moves every arm equally.
    """
    header, rows = _read_csv(csv_source)
    cols = list(feature_columns) + list(objective_columns)
    for c in cols:
        if c not in header:
            raise SchemaError(f"missing column '{c}'")
    idx = [header.index(c) for c in cols]
    data = np.empty((len(rows), len(cols)))
    for r, row in enumerate(rows):
        for j, ci in enumerate(idx):
            try:
                data[r, j] = float(row[ci])
            except (ValueError, IndexError):
                cell = row[ci] if ci < len(row) else ""
                raise ParseError(f"row {r + 2}, column '{cols[j]}': non-numeric value {cell!r}") from None
    d = len(feature_columns)
    if len(rows) < d + 1:
        raise RankError(f"need at least {d + 1} rows, got {len(rows)}")
    F, Y = data[:, :d], data[:, d:]
    sd = F.std(axis=0)
    if np.any(sd == 0):
        bad = [feature_columns[i] for i in np.flatnonzero(sd == 0)]
        raise RankError(f"constant feature column(s): {bad}")
    Z = (F - F.mean(axis=0)) / sd
    Z = Z / np.max(np.linalg.norm(Z, axis=1))
    if np.linalg.matrix_rank(Z) < d:
        raise RankError("standardized design matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(Z, Y, rcond=None)
    objectives = coef.T
    feats = Z
    if K is not None and K < len(Z):
        rng = rng or RngStream(0, 0)
        pick = np.sort(rng.gen.choice(len(Z), size=K, replace=False))
        feats = Z[pick]
    norms = np.linalg.norm(objectives, axis=1)
    return Instance(features=feats, objectives=objectives, sigma=float(noise_sd),
                    x_max=1.0, l=float(norms.min()), L=float(norms.max()))
