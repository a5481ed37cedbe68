"""Command-line entry point (``mogro <subcommand>``).

Exit codes: 0 success, 1 usage/config/IO error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from .errors import MogroError
from .goodness import verify_goodness
from .harness import RunConfig, load_trajectory_csv, persist, run_experiment
from .instances import (build_lowerbound_family, generate_synthetic, load_instance, lowerbound_epsilon,
                        save_instance, verify_lowerbound_family)
from .numerics import RngStream
from .pareto import accumulate_regret, effective_pareto_gaps, pareto_gaps


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mogro", description="Multi-objective linear bandit experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run an experiment from a YAML config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--save-trajectories", action="store_true")

    g = sub.add_parser("gen-instance", help="write a random synthetic instance")
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--sigma", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    lb = sub.add_parser("gen-lowerbound", help="write the lower-bound instance family")
    lb.add_argument("--d", type=int, required=True)
    grp = lb.add_mutually_exclusive_group(required=True)
    grp.add_argument("--t", type=int)
    grp.add_argument("--epsilon", type=float)
    lb.add_argument("--out", required=True)

    v = sub.add_parser("verify-goodness", help="Monte-Carlo goodness check of an instance")
    v.add_argument("--instance", required=True)
    v.add_argument("--gamma", type=float, required=True)
    v.add_argument("--alpha", type=float, required=True)
    v.add_argument("--n", type=int, default=10_000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--T", type=int, default=1000)

    m = sub.add_parser("metrics", help="recompute gap curves from a saved trajectory")
    m.add_argument("--trajectory", required=True)
    m.add_argument("--instance", required=True)
    m.add_argument("--out", default=None)

    s = sub.add_parser("summarize", help="print the summary table of a results directory")
    s.add_argument("--in", dest="indir", required=True)
    return p


def _cmd_run(a) -> int:
    try:
        raw = yaml.safe_load(Path(a.config).read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise MogroError(f"cannot parse config {a.config}: {e}") from None
    cfg = RunConfig.from_dict(raw or {})
    if a.workers is not None:
        cfg.workers = a.workers
    cfg.output_dir = a.out
    result, trajs = run_experiment(cfg, return_trajectories=True)
    persist(result, a.out, cfg, trajs if a.save_trajectories else None)
    for label, s in result.summary.items():
        print(f"{label}: EPR(T)={s['final_mean_epr']:.4f} PR(T)={s['final_mean_pr']:.4f}")
    return 0


def _cmd_gen_instance(a) -> int:
    inst = generate_synthetic(RngStream(a.seed, 0), a.d, a.k, a.m, a.sigma)
    save_instance(inst, a.out)
    return 0


def _cmd_gen_lowerbound(a) -> int:
    eps = a.epsilon if a.epsilon is not None else lowerbound_epsilon(a.d, a.t)
    fam = build_lowerbound_family(a.d, eps)
    report = verify_lowerbound_family(fam)
    doc = {
        "d": fam.d, "epsilon": fam.epsilon, "epsilon_prime": fam.epsilon_prime, "T": a.t,
        "k": fam.k, "k_prime": fam.k_prime,
        "features": fam.features.tolist(), "thetas": fam.thetas.tolist(),
        "verification": report,
    }
    Path(a.out).write_text(json.dumps(doc, indent=2, sort_keys=True, default=float) + "\n", encoding="utf-8")
    return 0 if report["passed"] else 2


def _cmd_verify(a) -> int:
    inst = load_instance(a.instance)
    rep = verify_goodness(inst, a.gamma, a.alpha, a.n, RngStream(a.seed, 0), T=a.T)
    print(rep.to_json())
    return 0 if rep.verified else 2


def _cmd_metrics(a) -> int:
    traj = load_trajectory_csv(a.trajectory)
    inst = load_instance(a.instance)
    mu = inst.means()
    arms = traj["arms"]
    if arms.size and (arms.min() < 0 or arms.max() >= inst.K):
        raise MogroError("trajectory refers to arms outside the instance")
    pg, eg = pareto_gaps(mu)[arms].tolist(), effective_pareto_gaps(mu)[arms].tolist()
    pr, epr = accumulate_regret(pg, eg)
    pr, epr = pr.tolist(), epr.tolist()
    lines = ["t,pareto_gap,effective_gap,pr,epr"]
    lines += [f"{t + 1},{pg[t]!r},{eg[t]!r},{pr[t]!r},{epr[t]!r}" for t in range(len(arms))]
    text = "\n".join(lines) + "\n"
    if a.out:
        Path(a.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    match = np.array_equal(pg, traj["pareto_gap"]) and np.array_equal(eg, traj["effective_gap"])
    if not match:
        print("recomputed gaps differ from the recorded trajectory", file=sys.stderr)
    return 0 if match else 2


def _cmd_summarize(a) -> int:
    summary = json.loads((Path(a.indir) / "summary.json").read_text(encoding="utf-8"))
    head = f"{'policy':<18}{'EPR(T)':>12}{'PR(T)':>12}{'EPFI':>10}{'proxy':>10}{'T0 mean':>10}{'runtime s':>12}"
    print(head)
    for label, s in summary["policies"].items():
        proxy = "-" if s.get("epfi_proxy") is None else f"{s['epfi_proxy']:.4f}"
        t0 = float(np.mean(s["t0_realized"]))
        print(f"{label:<18}{s['final_mean_epr']:>12.4f}{s['final_mean_pr']:>12.4f}{s['epfi_exact']:>10.4f}"
              f"{proxy:>10}{t0:>10.1f}{s['total_runtime_ns'] / 1e9:>12.3f}")
    return 0


COMMANDS = {
    "run": _cmd_run, "gen-instance": _cmd_gen_instance, "gen-lowerbound": _cmd_gen_lowerbound,
    "verify-goodness": _cmd_verify, "metrics": _cmd_metrics, "summarize": _cmd_summarize,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (MogroError, OSError, KeyError, TypeError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"mogro {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
