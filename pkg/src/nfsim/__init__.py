"""nfsim: stochastic neural-field models at desk scale.

Microscopic jump-process models of interacting neuron populations, their
deterministic Wilson-Cowan/Amari limits, the linear-noise and Langevin
diffusion approximations, and Monte-Carlo experiments that check the
convergence statements numerically (fluid-limit trends, martingale CLT
covariance, moment relations).
"""

__version__ = "0.1.0"

from .errors import (CapacityError, ClosureRequiredError,
                     EnvelopeUnavailableError, InvalidArgumentError,
                     NfsimError, NoTransitionError, NumericError, SchemaError,
                     TruncationError)
from .model import (Domain, GainFunction, InputCurrent, Kernel, MacroModel,
                    MicroModel, Partition, build_micro_model,
                    build_uniform_partition, cell_quadrature,
                    discrete_initial_condition, discretize_input,
                    discretize_weights)
from .fields import (Field, NormSpec, Trajectory, cell_integrals,
                     dual_sobolev_error, dual_sobolev_norm, l2_error, l2_norm)
from .jump import (JumpPath, MartingalePath, TransitionDistribution,
                   activation_rates, compensator, embed, martingale_path,
                   quadratic_characteristic, replicate_rng, rescale_martingale,
                   simulate_path, simulate_path_bounded, total_rate,
                   transition_distribution)
from .solver import (FieldProblem, SolverConfig, nemytzkii_apply, solve_amari,
                     solve_bounded_limit, solve_wilson_cowan)
from .spde import (CovarianceForm, NoiseSpec, covariance_form,
                   diffusion_coefficient, simulate_langevin,
                   simulate_linear_noise, spde_endpoint_samples)
from .moments import MomentODEState, moment_odes_langevin, moment_odes_markov
from .oracle import TruncatedLaw, master_equation_oracle, truncation_tail_bound
from .analysis import (ExperimentReport, FitResult, clt_experiment,
                       component_mean_check, fit_rate,
                       infinite_time_experiment, lln_experiment,
                       martingale_bound_check, oracle_check)
from .config import ModelConfig, load_config, parse_config
