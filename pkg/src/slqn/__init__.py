"""Iterated statistical-linearization filters and their exact quasi-Newton form."""

from .errors import (
    DegenerateStep,
    DimensionMismatch,
    EvaluationFailure,
    InvalidRuleParameter,
    NotPositiveDefinite,
    RouteMismatch,
    SingularSystem,
    SlqnError,
)
from .gauss import GaussianBelief, kl_divergence, make_belief, solve_spd
from .statlin import (
    AffineLinearization,
    MeasurementFn,
    MomentStatistics,
    SigmaPointRule,
    analytical_linearize,
    check_jacobian,
    generate_sigma_points,
    statistical_linearize,
)
from .filters import (
    Correction,
    FilterKind,
    IterationConfig,
    IterationTrace,
    MeasurementProblem,
    StopReason,
    iekf_iterate,
    iplf_iterate,
    iukf_iterate,
    map_cost,
    map_gradient,
    qn_iekf_iterate,
    run_filter,
)
from .bridge import (
    certify_exact_qn,
    compute_epsilon,
    compute_p,
    compute_p_iukf,
    compute_s,
    frobenius_minimality_witness,
    psb_like_update,
    star_forms_agree,
)

__version__ = "0.1.0"
