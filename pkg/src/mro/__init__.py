"""Mean robust optimization: robust constraints over clustered data."""

from mro.clustering import ClusteredSet, d_profile, elbow_select, from_assignments, kmeans, singletons
from mro.cutting_plane import (
    CuttingPlaneConfig,
    OracleConfig,
    cutting_plane_solve,
    master_solve,
    max_oracle,
)
from mro.data import (
    L2,
    Dataset,
    NormSpec,
    SupportSet,
    UncertaintySpec,
    ball_membership,
    box_to_polyhedron,
    support_function_box,
)
from mro.families import (
    Affine,
    AssumptionReport,
    CapitalBudgetingNPV,
    ConcaveQuadratic,
    ConstraintFamily,
    DomainError,
    LogSumExp,
    check_assumptions,
    eval_g,
    gbar,
    grad_g_u,
    smoothness_bound,
)
from mro.guarantees import (
    BetaEstimate,
    SandwichReport,
    adjusted_epsilon,
    cross_validate_epsilon,
    out_of_sample_beta,
    sandwich_check,
    wasserstein_distance,
)
from mro.reformulate import (
    MroProblem,
    UnsupportedError,
    emit_affine_compact,
    emit_dual,
    emit_dual_finite_p,
    emit_dual_inf,
    solve_problem,
    worst_case_value,
)

__version__ = "0.1.0"
