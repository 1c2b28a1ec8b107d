"""Particle simulator and duality-gap diagnostics for mean-field Langevin dynamics."""

__version__ = "0.1.0"

from .diagnostics import (
    TheoryReport,
    Theorem4Check,
    discretization_error_bound,
    iteration_complexity,
    lsi_constant,
    lsi_log_constant,
    moment_bound,
    moment_ok,
    theorem2_envelope,
    theorem4_check,
)
from .dynamics import (
    DynamicsResult,
    HyperParams,
    ParticleEnsemble,
    initialize_ensemble,
    intrinsic_gradient,
    noisy_gd_step,
    run_dynamics,
)
from .errors import (
    ConfigError,
    DataValidationError,
    DimensionError,
    DivergenceError,
    DomainError,
    EstimatorError,
    GridError,
    MfldError,
)
from .estimators import (
    DualComponents,
    EstimatorConfig,
    ObjectiveReport,
    PrimalComponents,
    dual_objective,
    duality_gap_report,
    is_log_partition,
    knn_entropy,
    knn_entropy_details,
    primal_objective,
    proximal_primal_objective,
)
from .gibbs import (
    ProximalGibbs,
    SamplerConfig,
    gaussian_log_partition,
    quadrature_log_partition,
    score,
    ula_sample,
    unnorm_log_density,
    unnorm_log_density_many,
)
from .harness import (
    DatasetSpec,
    DiagnosticsRecord,
    ExperimentConfig,
    Fig1Snapshot,
    Fig1Spec,
    LoggingSpec,
    ModelSpec,
    RECORD_FIELDS,
    fig1_snapshot,
    generate_teacher_student,
    parse_config,
    parse_config_text,
    read_records_csv,
    run_experiment,
    serialize_config,
)
from .model import (
    Dataset,
    LogisticLoss,
    RegularityConstants,
    ScaledTanh,
    SquaredLoss,
    TanhAffine,
    TanhScalar,
    dual_vector,
    fenchel_conjugate,
    load_dataset_csv,
    loss_eval,
    loss_grad,
    make_loss,
    make_neuron,
    model_constants,
    neuron_eval,
    neuron_grad,
    predict_mean_field,
    predictions,
    save_dataset_csv,
)
from .rng import RngSpec, normal_block, normal_matrix, normal_steps, normal_values, uniform_values
