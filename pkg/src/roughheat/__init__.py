"""roughheat: rough-path numerics for short-time heat-kernel asymptotics
of RDEs driven by fractional Brownian motion, H in (1/3, 1/2]."""

from .roughcore import (
    GeometricRoughPath2,
    chen_mul,
    control_value,
    greedy_partition,
    besov_norm,
    sew_rough_integral,
    default_p,
)
from .young import YoungPath, TwoParamFunction, young_integral, young_pairing, young_translate, young_2d
from .fbm import FbmModel, CameronMartinPath, r_cov, sample_fbm, lift_dyadic, scaled_driver, cm_inner
from .rde import VectorFieldSet, SolutionBundle, make_fields, solve_rde, solve_skeleton, solve_scaled_shifted
from .expansion import IndexSet, index_set, expand, remainder_norms, fit_order
from .malliavin import MalliavinCov, malliavin_cov, nondegeneracy_scan, cll_interpolation_check, calibrate_cll_constant
from .variational import minimize_energy, lagrange_residual, hessian_spectrum, second_variation_check
from .kernellab import ExperimentConfig, estimate_density, ondiag_fit, offdiag_fit, run_experiment

__version__ = "0.1.0"
