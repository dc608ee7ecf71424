"""Dyadic grids, sparse families, weight characteristics and sharp-exponent experiments
for multilinear fractional maximal operators and fractional integrals."""

from .exceptions import ConfigError, DivergentIntegralError, InvariantViolation, OutOfSystemError
from .geometry import DyadicCube, RootSystem, children, covering_cube, cube_at, parent
from .gridfn import (ExponentData, GridFunction, HomogeneousCore, discretize_power, integrate,
                     lq_norm, power_ball_integral)
from .operators import (dyadic_weighted_maximal, multilinear_integral, multilinear_maximal,
                        sparse_integral, sparse_integral_q)
from .sparse import (CarlesonSequence, SparseFamily, build_sparse, carleson_embedding_check,
                     sparse_domination_check, verify_sparse)
from .weights import (CubeFamily, WeightVector, a_infty_constant, a_pq_constant, dual_vector,
                      muckenhoupt_ap_constant, reverse_holder_check, two_weight_constant)
from .sharpness import (ExperimentConfig, ExperimentReport, fit_exponent, run_thm1_experiment,
                        run_thm2_experiment, run_thm3_experiment)

__version__ = "0.1.0"
