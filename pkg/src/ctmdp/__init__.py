"""Solver and verifier toolkit for average-reward continuous-time MDPs."""

from .average import (AverageSolution, OracleError, OracleResult,
                      SensitivityReport, VanishingSchedule,
                      brute_force_oracle, optimality_residuals, solve_average,
                      truncation_sensitivity)
from .discounted import (ConvergenceError, DiscountedSolution,
                         UniformizedKernel, bellman_operator, extract_policy,
                         solve_discounted, uniformize)
from .families import (BUILTINS, PotlachPolicy, PotlachProcess, build,
                       describe)
from .lyapunov import (DriftReport, check_assumption_A, check_assumption_B,
                       check_example_conditions, check_monotonicity)
from .model import (ActionSets, CountableFamily, CtmdpModel, LyapunovData,
                    ModelError, RateKernel, RewardTable, StateSpace,
                    StationaryPolicy, ValidationReport, boundary_states,
                    generator_apply, truncate, validate_model, weighted_norm)
from .modelio import (FORMAT_VERSION, ModelFileError, dumps, load_model,
                      loads_model, model_from_dict, model_to_dict)
from .simulate import (CheckpointReport, ErgodicityReport, PathRecorder,
                       SimulationError, SimulationReport,
                       check_lyapunov_bound, estimate_average_reward,
                       estimate_ergodicity, simulate_path)
from .verify import (CertificateReport, MartingaleReport, certify_lower,
                     certify_upper, delta, martingale_diagnostic)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
