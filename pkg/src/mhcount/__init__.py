"""Integer points on Markoff-Hurwitz varieties.

Exact orbit enumeration and counting for x_1^2+...+x_n^2 = a x_1...x_n + k,
projective dynamics on the limit simplex, and transfer-operator spectra for
the growth exponent beta(n).
"""

from .core import (
    MHParams,
    MHTuple,
    DescentPath,
    InvalidInputError,
    InvariantViolationError,
    eval_residual,
    apply_move,
    order_tuple,
    is_fundamental_exceptional,
    is_exceptional,
    outside_K0,
    descend,
    sign_orbit_reduce,
)
from .orbits import (
    OrbitNode,
    RootSet,
    CountSeries,
    LogRegimeRefusal,
    forward_moves,
    find_roots,
    enumerate_ball,
    box_oracle,
    count_integer_ball,
    count_series,
    log_space_advance,
    fit_growth_exponent,
)
from .simplex import (
    SimplexPoint,
    AccelGenerator,
    HPoint,
    gamma_act,
    accel_act,
    weight,
    jacobian_det,
    total_derivative,
    classify_region,
    contraction_audit,
    limit_set_sample,
)
from .transfer import (
    OperatorConfig,
    SpectralResult,
    BetaResult,
    TransferOperator,
    ConvergenceError,
    apply_transfer,
    leading_eigen,
    eigenmeasure,
    solve_beta,
    conformal_residual,
    h_recursion_residual,
    gauss_conjugation_check,
    gauss_leading_eigen,
    lambda_upper_bound_check,
    renewal_spot_check,
)

__version__ = "0.1.0"
