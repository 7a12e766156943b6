"""Stochastic conditional-gradient methods for convex minimization and submodular maximization."""

__version__ = "0.1.0"

from .estimator import GradientEstimate, grad_error_sq, update  # noqa: E402
from .linear_oracles import (BoxRegion, CardinalityPolytope, NuclearPsdBall, PartitionMatroid,  # noqa: E402
                             UniformMatroid, lmo_box_min, lmo_cardinality_max, lmo_check, lmo_matroid_max,
                             lmo_nuclear_psd_min, lmo_shifted_downclosed_max)
from .problems import (CompletionOracle, QuadraticOracle, gen_completion, make_quadratic,  # noqa: E402
                       normalized_error, quadratic_opt)
from .schedules import Schedule  # noqa: E402
from .solvers import (SolverRun, discrete_greedy, fw_deterministic, growing_batch_fw, minibatch_fw,  # noqa: E402
                      nmscg, scg, sfw, sga)
from .submodular import (MultilinearOracle, brute_force_opt, concave_over_modular, curvature,  # noqa: E402
                         cut_function, facility_location, multilinear_exact, multilinear_grad_exact,
                         pipage_round, sample_grad_estimate)
