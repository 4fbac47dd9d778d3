"""Constructive ReLU networks with skip connections for Sobolev-norm approximation."""

from .network import (
    Architecture,
    DimensionError,
    Layer,
    Network,
    architecture_of,
    concatenate,
    has_architecture,
    identity_network,
    instantiate,
    make_layer,
    parallelize,
    realize,
    sparse_concatenate,
    to_standard,
    weights_of,
)
from .evaluation import (
    BudgetExceeded,
    EvalResult,
    eval_with_jacobian,
    finite_difference_jacobian,
    line_restriction_breakpoints,
)
from .constructions import (
    abs_network,
    assemble_approximant,
    hat_network,
    localized_monomial_network,
    monomial_factor_network,
    multiplication_network,
    pou_factor_network,
    product_of_outputs_network,
    squaring_network,
)
from .functions import DifferentiableFunction, get_function
from .taylor import averaged_taylor_coefficients, build_patches, bump_cutoff, evaluate_localized_sum
from .sobolev import NormReport, lp_norm, slobodeckij_seminorm, w1p_seminorm, wsp_error
from .approximator import ComplexityAudit, build_approximant, scaling_sweep, select_grid_density
from .lower_bound import bump_family, decode, make_family, probe_lower_bound

__version__ = "0.1.0"
