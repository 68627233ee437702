"""Exact false discovery proportion laws for step-up and step-down multiple testing procedures."""

__version__ = "0.1.0"

from .analysis import (
    condition_a,
    expected_inverse_rejections_affine,
    fnr_sd,
    fnr_su,
    lfc_fdr_compare,
    s_mk_recursion_check,
    var_extrema,
    var_fdp_lsu,
)
from .emn import QuadratureConfig, emn_fdr_rho1, emn_quantity, figure_data, m2_argmax_rho_su_m0_2, m2_fdr
from .exceptions import AssumptionError, ConvergenceError, DomainError, PrecisionWarning, UnsupportedCaseError
from .mc_oracle import SimConfig, simulate, sort_and_cutoff
from .models import AlternativeCdf, MixtureCdf, ModelSpec, gauss_tail, gauss_tail_inv, parse_alternative
from .orderstats import binomial_moment, d_sd, d_su, psi, psi_bolshev, psi_steck, stirling
from .precision import DOUBLE, PrecisionConfig, bigfloat
from .stepdown import sd_conditional_false_count, sd_fdr, sd_joint_law, sd_power, sd_rejection_pmf
from .stepup import (
    chi_tan_threshold,
    oracle_fdp_threshold,
    su_conditional_false_count,
    su_fdp_cdf,
    su_fdp_distribution,
    su_fdp_moment,
    su_fdr,
    su_power,
    su_rejection_pmf,
)
from .thresholds import Threshold
