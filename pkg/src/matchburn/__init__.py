"""Aggregate stable matching with waiting times (money burning) in two-sided markets.

Markets have types on both sides, fixed prices and non-transferable
utility; over-demanded segments are rationed by queues. The package solves
the random-utility equilibrium three independent ways (monotone
Gauss-Seidel, the closed-form logit system, generalized deferred
acceptance), simulates the queue dynamics, and handles the deterministic
case with exact stability checkers and the vanishing-noise limit.
"""

from ._jit import backend
from .constrained import ConstrainedSolution, solve_constrained, solve_constrained_logit
from .deferred_acceptance import DAState, InvariantError, da_init, da_run, da_step
from .demand import (DemandProvider, check_demand_properties, demand_alpha, demand_gamma,
                     make_provider)
from .deterministic import (SigmaSchedule, StabilityReport, aggregate_outcome, burned_amounts,
                            check_aggregate_stability, check_classical_stability, classical_da,
                            disaggregate_outcome, sigma_limit)
from .equilibrium import (check_mfunction, equilibrium_residual, excess_demand_eval,
                          matching_functions, solve_equilibrium, solve_equilibrium_logit)
from .generate import gen_batch, gen_instance
from .io import read_market, write_market, write_outcome
from .model import (ConvergenceError, DeterministicOutcome, EquilibriumOutcome, IndividualMarket,
                    IndividualMatching, MarketSpec, Matching, MatchburnError, NotSmoothError,
                    ShockSpec, ValidationError, recover_waits, validate_market)
from .queue_sim import QueueState, sim_run, sim_step

__version__ = "0.1.0"
