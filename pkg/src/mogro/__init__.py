"""Multi-objective linear bandits: greedy policies with randomized objectives,
effective-Pareto regret and fairness metrics, and a reproducible harness."""

from .errors import (ContractViolation, InconsistentSystem, InvalidConfig, InvalidInput, MogroError,
                     ParseError, RankError, SchemaError)
from .goodness import (GoodnessReport, compute_B, estimate_q_gamma, lambda_inc, lambda_of, psi_cap,
                       t0_bound, verify_goodness)
from .harness import AggregateResult, RunConfig, Trajectory, persist, run_episode, run_experiment
from .instances import (ContextSampler, Instance, LbInstanceFamily, build_lowerbound_family,
                        generate_synthetic, ingest_tabular, lowerbound_epsilon, sample_context_set,
                        sample_reward, validate_instance)
from .numerics import RngStream
from .pareto import (effective_pareto_front, effective_pareto_gap, epfi_ball_proxy, epfi_exact_estimate,
                     pareto_front, pareto_gap)
from .policies import EstimatorState, PolicyConfig, observe, policy_step

__version__ = "0.1.0"
