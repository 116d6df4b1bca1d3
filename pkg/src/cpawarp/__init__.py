"""Closed-form diffeomorphic warping of the unit interval.

Continuous piecewise-affine velocity fields integrate to monotone warps in
closed form, with exact parameter gradients; on top sit a Gaussian smoothness
prior, a differentiable piecewise-linear sampler, scaling-and-squaring
approximation, a joint time-series aligner and a warp-aware nearest-centroid
classifier.
"""

from .align import (
    AlignmentConfig,
    AlignmentResult,
    NccModel,
    align_joint,
    loss_data_multi,
    loss_data_single,
    loss_reg,
    ncc_fit,
    ncc_predict,
    nearest_centroid_baseline,
)
from .basis import (
    AffineField,
    CpaBasis,
    PriorCovariance,
    constraint_matrix,
    field_to_theta,
    null_space_basis,
    prior_covariance,
    sample_prior,
    theta_to_field,
)
from .errors import InternalError, NumericError, OutOfDomainError
from .estimators import AlignedNearestCentroid, JointAligner
from .flow import (
    SLOPE_EPS,
    TraversalTrace,
    WarpResult,
    hitting_time,
    integrate,
    integrate_grid,
    scaling_squaring,
    velocity_at,
)
from .gradient import grad_grid, grad_point, grad_scaling_squaring
from .oracle import (
    PrecisionReport,
    SpeedReport,
    finite_diff_grad,
    finite_diff_grad_grid,
    ode_solve,
    ode_solve_grid,
    precision_report,
    speed_report,
)
from .sampler import (
    InterpGradient,
    SampledFunction,
    SelfComposeJacobian,
    interp,
    interp_grad,
    self_compose,
    warp_signal,
)
from .tessellation import (
    Domain,
    Tessellation,
    build_tessellation,
    cell_index,
    exit_boundary,
)

__version__ = "0.1.0"

__all__ = [
    "AffineField",
    "AlignedNearestCentroid",
    "AlignmentConfig",
    "AlignmentResult",
    "CpaBasis",
    "Domain",
    "InternalError",
    "InterpGradient",
    "JointAligner",
    "NccModel",
    "NumericError",
    "OutOfDomainError",
    "PrecisionReport",
    "PriorCovariance",
    "SLOPE_EPS",
    "SampledFunction",
    "SelfComposeJacobian",
    "SpeedReport",
    "Tessellation",
    "TraversalTrace",
    "WarpResult",
    "align_joint",
    "build_tessellation",
    "cell_index",
    "constraint_matrix",
    "exit_boundary",
    "field_to_theta",
    "finite_diff_grad",
    "finite_diff_grad_grid",
    "grad_grid",
    "grad_point",
    "grad_scaling_squaring",
    "hitting_time",
    "integrate",
    "integrate_grid",
    "interp",
    "interp_grad",
    "loss_data_multi",
    "loss_data_single",
    "loss_reg",
    "ncc_fit",
    "ncc_predict",
    "nearest_centroid_baseline",
    "null_space_basis",
    "ode_solve",
    "ode_solve_grid",
    "precision_report",
    "prior_covariance",
    "sample_prior",
    "scaling_squaring",
    "self_compose",
    "speed_report",
    "theta_to_field",
    "velocity_at",
    "warp_signal",
]
