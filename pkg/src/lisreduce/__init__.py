"""Likelihood-informed model reduction for linear Gaussian inverse problems
with unknown right-hand-side forcing."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    IndefiniteMatrixError,
    LisReduceError,
    NumericalError,
    RankError,
    SingularSystemError,
)
from .gaussian import (
    GaussianBelief,
    LowRankDowndate,
    PosteriorApproximation,
    downdate_foerstner,
    exact_posterior,
    foerstner_distance,
    sample,
)
from .forward import (
    LinearForwardProblem,
    ObservationOperator,
    StaticLinearSystem,
    apply_forward,
    assemble_dense_G,
    draw_observation_indices,
    generate_data,
)
from .reduction import (
    ReducedInverseProblem,
    ReductionBasis,
    collect_snapshots,
    lis_basis,
    lis_mr_posterior,
    olr_forward,
    olr_posterior,
    pod_basis,
    pod_posterior,
    projector_apply,
    reduce_petrov_galerkin,
)
from .fem import ModelBundle, RandomFieldSpec, build_bar, build_model, build_tunnel, kernel_covariance
from .experiment import (
    ErrorReport,
    ExperimentConfig,
    SweepReport,
    emit_report,
    load_report,
    mean_error_metric,
    pod_snapshot_sweep,
    run_experiment,
    setup_experiment,
)
