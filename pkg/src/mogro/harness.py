"""Episode runner, experiment driver, aggregation and result files."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidConfig, MogroError
from .goodness import verify_goodness
from .instances import (ContextSampler, Instance, build_lowerbound_family, generate_synthetic,
                        load_instance, lowerbound_epsilon, sample_context_set, sample_reward,
                        validate_instance)
from .numerics import RngStream, spanning_subset, stable_hash64
from .pareto import (accumulate_regret, effective_pareto_front, effective_pareto_gap,
                     effective_pareto_gaps, epfi_ball_proxy, epfi_exact_estimate, pareto_fairness_variance,
                     pareto_gap, pareto_gaps)
from .policies import GREEDY, PolicyConfig, new_state, observe, policy_step

RUNTIME_KEYS = ("total_runtime_ns", "mean_runtime_ns")


@dataclass
class RunConfig:
    T: int
    policies: list[PolicyConfig]
    n_instances: int = 1
    n_repeats: int = 1
    master_seed: int = 0
    instance: dict = field(default_factory=lambda: {"kind": "synthetic", "d": 5, "K": 50, "M": 5, "sigma": 0.1})
    contexts: str = "fixed"
    epfi_epsilon: float = 0.1
    epfi_resolution: int | None = None
    goodness: dict = field(default_factory=lambda: {"gamma": 0.5, "alpha": 0.05, "n_directions": 10_000})
    workers: int = 1
    output_dir: str | None = None

    def __post_init__(self):
        if self.T < 1:
            raise InvalidConfig("T must be >= 1")
        if self.n_instances < 1 or self.n_repeats < 1:
            raise InvalidConfig("n_instances and n_repeats must be >= 1")
        if not self.policies:
            raise InvalidConfig("at least one policy is required")
        self.policies = [p if isinstance(p, PolicyConfig) else PolicyConfig(**p) for p in self.policies]
        labels = [p.label for p in self.policies]
        if len(set(labels)) != len(labels):
            raise InvalidConfig(f"policy labels must be unique, got {labels}")
        ContextSampler(self.contexts)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["policies"] = [asdict(p) for p in self.policies]
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise InvalidConfig("config must be a mapping")
        for key in ("T", "policies"):
            if key not in raw:
                raise InvalidConfig(f"config is missing required key '{key}'")
        known = set(cls.__dataclass_fields__)
        extra = set(raw) - known
        if extra:
            raise InvalidConfig(f"unknown config key(s): {sorted(extra)}")
        try:
            pols = [PolicyConfig(**p) for p in raw["policies"]]
        except TypeError as e:
            raise InvalidConfig(f"bad policy entry: {e}") from None
        return cls(**{**raw, "policies": pols})


@dataclass
class Trajectory:
    arms: np.ndarray
    context_ids: np.ndarray
    rewards: np.ndarray  # (T, M)
    pareto_gap: np.ndarray
    effective_gap: np.ndarray
    min_eig: np.ndarray
    phase: np.ndarray  # bool, True when greedy
    weights: np.ndarray  # (T, M), NaN when no weight was drawn
    nanos: np.ndarray
    t0: int | None = None
    tables: np.ndarray | None = None  # per-round true tables under stochastic contexts

    @property
    def T(self) -> int:
        return len(self.arms)

    def curves(self) -> tuple[np.ndarray, np.ndarray]:
        return accumulate_regret(self.pareto_gap, self.effective_gap)

    def to_csv(self) -> str:
        M = self.weights.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "arm", "phase", "pareto_gap", "effective_gap", "min_eig"]
                   + [f"weight_{m}" for m in range(M)] + ["nanos"])
        for t in range(self.T):
            ws = ["" if np.isnan(v) else repr(float(v)) for v in self.weights[t]]
            w.writerow([t + 1, int(self.arms[t]), "greedy" if self.phase[t] else "exploring",
                        repr(float(self.pareto_gap[t])), repr(float(self.effective_gap[t])),
                        repr(float(self.min_eig[t]))] + ws + [int(self.nanos[t])])
        return buf.getvalue()


def load_trajectory_csv(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return {
        "arms": np.array([int(r["arm"]) for r in rows]),
        "phase": np.array([r["phase"] == "greedy" for r in rows]),
        "pareto_gap": np.array([float(r["pareto_gap"]) for r in rows]),
        "effective_gap": np.array([float(r["effective_gap"]) for r in rows]),
    }


@dataclass
class GapCache:
    """Per-arm gaps of a fixed reward table."""

    pareto: np.ndarray
    effective: np.ndarray

    @classmethod
    def of(cls, mu) -> "GapCache":
        return cls(pareto_gaps(mu), effective_pareto_gaps(mu))


def resolve_B(policy: PolicyConfig, instance: Instance, T: int, goodness: dict, rng: RngStream) -> float:
    if policy.B != "theoretical":
        return float(policy.B)
    gamma = policy.gamma if policy.gamma is not None else goodness.get("gamma", 0.5)
    alpha = policy.alpha if policy.alpha is not None else goodness.get("alpha", 0.05)
    rep = verify_goodness(instance, gamma, alpha, goodness.get("n_directions", 10_000), rng, T=max(T, 2))
    if rep.B is None:
        raise InvalidConfig("theoretical B needs sigma > 0")
    return rep.B


def run_episode(instance: Instance, sampler: ContextSampler, policy: PolicyConfig, T: int, rng: RngStream,
                B: float | None = None, explore_set=None, gaps: GapCache | None = None,
                keep_tables: bool = False) -> Trajectory:
    """Play T rounds of ``policy`` on ``instance`` and score each pick against the truth."""
    pol_rng, rew_rng, ctx_rng = rng.child("policy"), rng.child("reward"), rng.child("contexts")
    if explore_set is None:
        explore_set = spanning_subset(instance.features)
    if B is None:
        B = resolve_B(policy, instance, T, {}, rng.child("goodness"))
    state = new_state(policy, instance.d, instance.M, explore_set, B, features=instance.features)
    fixed = not sampler.stochastic
    if fixed and gaps is None:
        gaps = GapCache.of(instance.means())
    M = instance.M
    arms = np.empty(T, dtype=int)
    rewards = np.empty((T, M))
    pg, eg, eig = np.empty(T), np.empty(T), np.empty(T)
    phase = np.zeros(T, dtype=bool)
    weights = np.full((T, M), np.nan)
    nanos = np.empty(T, dtype=np.int64)
    tables = np.empty((T, instance.K, M)) if (keep_tables and not fixed) else None
    for s in range(T):
        X = instance.features if fixed else sample_context_set(sampler, instance, ctx_rng)
        try:
            start = time.perf_counter_ns()
            arm, rec = policy_step(state, policy, X, pol_rng)
            mid = time.perf_counter_ns()
            y = sample_reward(instance, X[arm], rew_rng)
            resume = time.perf_counter_ns()
            observe(state, X[arm], y)
            nanos[s] = (mid - start) + (time.perf_counter_ns() - resume)
        except MogroError as e:
            raise type(e)(f"round {s + 1}: {e}") from e
        arms[s] = arm
        rewards[s] = y
        eig[s] = rec["min_eig"]
        phase[s] = rec["phase"] == GREEDY
        if rec["weight"] is not None:
            weights[s] = rec["weight"]
        if fixed:
            pg[s], eg[s] = gaps.pareto[arm], gaps.effective[arm]
        else:
            mu = instance.means(X)
            pg[s] = pareto_gap(mu, arm)
            eg[s] = effective_pareto_gap(mu, arm).effective_gap
            if tables is not None:
                tables[s] = mu
    return Trajectory(arms=arms, context_ids=np.arange(T) if not fixed else np.zeros(T, dtype=int),
                      rewards=rewards, pareto_gap=pg, effective_gap=eg, min_eig=eig, phase=phase,
                      weights=weights, nanos=nanos, t0=state.t0, tables=tables)


def build_instance(spec: dict, i: int, master_seed: int, T: int) -> Instance:
    spec = dict(spec)
    kind = spec.pop("kind", "synthetic")
    rng = RngStream(master_seed, stable_hash64("instance", i))
    if kind == "synthetic":
        return generate_synthetic(rng, int(spec.get("d", 5)), int(spec.get("K", 50)), int(spec.get("M", 5)),
                                  float(spec.get("sigma", 0.1)))
    if kind == "file":
        if "path" not in spec:
            raise InvalidConfig("instance kind 'file' needs 'path'")
        return load_instance(spec["path"])
    if kind == "lowerbound":
        d = int(spec.get("d", 2))
        eps = float(spec["epsilon"]) if "epsilon" in spec else lowerbound_epsilon(d, T)
        return build_lowerbound_family(d, eps).instance(int(spec.get("j", 0)), float(spec.get("sigma", 0.1)))
    raise InvalidConfig(f"unknown instance kind '{kind}'")


def _episode_unit(args):
    cfg, i, r, p_idx, instance, B, explore_set, gaps = args
    policy = cfg.policies[p_idx]
    sampler = ContextSampler(cfg.contexts)
    rng = RngStream(cfg.master_seed, stable_hash64(i, r, policy.label, "episode"))
    traj = run_episode(instance, sampler, policy, cfg.T, rng, B=B, explore_set=explore_set, gaps=gaps,
                       keep_tables=sampler.stochastic)
    mu = instance.means()
    front = effective_pareto_front(mu)
    epfi_rng = RngStream(cfg.master_seed, stable_hash64(i, r, policy.label, "epfi"))
    tables = traj.tables if traj.tables is not None else mu
    epfi, meta = epfi_exact_estimate(traj.arms, tables, cfg.epfi_epsilon, cfg.epfi_resolution, epfi_rng,
                                     return_meta=True)
    stats = {
        "runtime_ns": int(traj.nanos.sum()),
        "epfi_exact": epfi,
        "epfi_meta": meta,
        "epfi_proxy": None if sampler.stochastic else epfi_ball_proxy(traj.arms, mu, cfg.epfi_epsilon),
        "pf_variance": pareto_fairness_variance(traj.arms, front),
        "t0": traj.t0 if traj.t0 is not None else cfg.T,
    }
    traj.tables = None  # not needed past this point; keeps inter-process payloads small
    return (i, r, policy.label), traj, stats


@dataclass
class AggregateResult:
    T: int
    curves: dict  # label -> {"mean_pr", "sd_pr", "mean_epr", "sd_epr"} arrays of length T
    summary: dict  # label -> per-policy statistics
    metadata: dict = field(default_factory=dict)
    instances: list = field(default_factory=list)


def _sd(a: np.ndarray) -> np.ndarray:
    return a.std(axis=0, ddof=1) if a.shape[0] > 1 else np.zeros(a.shape[1])


def run_experiment(config: RunConfig, return_trajectories: bool = False):
    """Run every (instance, repeat, policy) episode and aggregate by policy.

    Each episode owns a stream keyed by (instance, repeat, policy label), so
    neither the execution order nor the worker count changes any number.
    """
    instances, units = [], []
    for i in range(config.n_instances):
        inst = build_instance(config.instance, i, config.master_seed, config.T)
        problems = validate_instance(inst)
        if problems:
            raise InvalidConfig(f"instance {i} is invalid: {problems}")
        instances.append(inst)
        explore_set = spanning_subset(inst.features)
        gaps = GapCache.of(inst.means()) if config.contexts == "fixed" else None
        for p_idx, pol in enumerate(config.policies):
            B = resolve_B(pol, inst, config.T, config.goodness,
                          RngStream(config.master_seed, stable_hash64(i, pol.label, "goodness")))
            for r in range(config.n_repeats):
                units.append((config, i, r, p_idx, inst, B, explore_set, gaps))
    results = {}
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            for key, traj, stats in ex.map(_episode_unit, units):
                results[key] = (traj, stats)
    else:
        for u in units:
            key, traj, stats = _episode_unit(u)
            results[key] = (traj, stats)
    result = aggregate(config, results)
    result.instances = instances
    return (result, results) if return_trajectories else result


def aggregate(config: RunConfig, results: dict) -> AggregateResult:
    curves, summary = {}, {}
    for pol in config.policies:
        keys = sorted(k for k in results if k[2] == pol.label)
        prs, eprs = [], []
        for k in keys:
            pr, epr = results[k][0].curves()
            prs.append(pr)
            eprs.append(epr)
        prs, eprs = np.array(prs), np.array(eprs)
        curves[pol.label] = {"mean_pr": prs.mean(axis=0), "sd_pr": _sd(prs),
                             "mean_epr": eprs.mean(axis=0), "sd_epr": _sd(eprs)}
        stats = [results[k][1] for k in keys]
        proxies = [s["epfi_proxy"] for s in stats]
        runtimes = [s["runtime_ns"] for s in stats]
        summary[pol.label] = {
            "total_runtime_ns": int(sum(runtimes)),
            "mean_runtime_ns": float(np.mean(runtimes)),
            "epfi_exact": float(np.mean([s["epfi_exact"] for s in stats])),
            "epfi_exact_meta": stats[0]["epfi_meta"],
            "epfi_proxy": None if any(p is None for p in proxies) else float(np.mean(proxies)),
            "epfi_epsilon": config.epfi_epsilon,
            "pf_variance": float(np.mean([s["pf_variance"] for s in stats])),
            "t0_realized": [int(s["t0"]) for s in stats],
            "final_mean_epr": float(curves[pol.label]["mean_epr"][-1]),
            "final_mean_pr": float(curves[pol.label]["mean_pr"][-1]),
            "n_episodes": len(keys),
            "config": asdict(pol),
        }
    meta = {"T": config.T, "n_instances": config.n_instances, "n_repeats": config.n_repeats,
            "master_seed": config.master_seed, "contexts": config.contexts}
    return AggregateResult(T=config.T, curves=curves, summary=summary, metadata=meta)


def strip_runtime(summary: dict) -> dict:
    out = json.loads(json.dumps(summary))
    for entry in out.get("policies", {}).values():
        for k in RUNTIME_KEYS:
            entry.pop(k, None)
    return out


def _canonical(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def curves_csv(result: AggregateResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["policy", "t", "mean_pr", "sd_pr", "mean_epr", "sd_epr"])
    for label, c in result.curves.items():
        for t in range(result.T):
            w.writerow([label, t + 1] + [repr(float(c[k][t])) for k in ("mean_pr", "sd_pr", "mean_epr", "sd_epr")])
    return buf.getvalue()


def load_curves(path) -> dict:
    out: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            c = out.setdefault(row["policy"], {k: [] for k in ("mean_pr", "sd_pr", "mean_epr", "sd_epr")})
            for k in c:
                c[k].append(float(row[k]))
    return {p: {k: np.array(v) for k, v in c.items()} for p, c in out.items()}


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def persist(result: AggregateResult, directory, config: RunConfig | None = None, trajectories: dict | None = None) -> dict:
    """Write result files and return the manifest (also saved as manifest.json)."""
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files: dict[str, bytes] = {"curves.csv": curves_csv(result).encode("utf-8")}
        summary = {"metadata": result.metadata, "policies": result.summary}
        files["summary.json"] = _canonical(summary).encode("utf-8")
        if config is not None:
            files["config.echo.json"] = _canonical(config.to_dict()).encode("utf-8")
        for i, inst in enumerate(result.instances):
            files[f"instances/instance_{i}.json"] = inst.to_json().encode("utf-8")
        if trajectories:
            for (i, r, label), (traj, _) in sorted(trajectories.items()):
                files[f"trajectories/{label}_i{i}_r{r}.csv"] = traj.to_csv().encode("utf-8")
        manifest = {"files": {}}
        for name, data in files.items():
            path = out / name
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
            manifest["files"][name] = {"sha256": _sha256(data), "bytes": len(data)}
        manifest["files"]["summary.json"]["sha256_without_runtime"] = _sha256(
            _canonical(strip_runtime(summary)).encode("utf-8"))
        (out / "manifest.json").write_text(_canonical(manifest), encoding="utf-8")
    except OSError as e:
        raise OSError(f"cannot write results to {e.filename or out}: {e.strerror}") from e
    return manifest
