"""Distributed multi-agent Bayesian optimization with coupled constraints."""

from .algorithm import (AlgoConfig, ConstantSchedule, compute_constants,
                        primal_update, rho_from_affine, run_dmabo)
from .baselines import (cei_step, expected_improvement, penalty_step,
                        run_dcei, run_method, run_penalty)
from .confidence import BoundParams, beta, bounds_grid, lcb, ucb
from .duals import DualState, dual_update
from .errors import (ConfigError, DmaboError, InfeasibleError, InputError,
                     NumericalError, ProtocolError)
from .gp import GPPosterior, batch_fit
from .kernels import (KernelSpec, TabulatedFunction, kernel_eval,
                      kernel_matrix, sample_prior_function)
from .metrics import (RunTrace, best_iterate, regret_trace, shift_trace,
                      strong_violation_trace, violation_trace)
from .problems import (ProblemInstance, ReferenceSolution, load_instance,
                       make_gp_instance, make_oscillation_example,
                       make_power_allocation, save_instance, solve_reference)
from .sim import AgentOracle, AgentReport, coordinator_round, evaluate

__version__ = "0.1.0"
