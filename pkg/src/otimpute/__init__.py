"""Missing-value imputation for numeric tables by minimizing minibatch
Sinkhorn divergences, with classical baselines, missingness-mechanism
generators, evaluation metrics, and a benchmark harness."""

from . import exceptions
from .bench import (
    ExperimentConfig,
    RunResult,
    child_seed,
    export_results,
    resolve_batch_size,
    run_experiment,
    run_oos_experiment,
)
from .data import (
    EmpiricalMeasure,
    ImputationState,
    IncompleteMatrix,
    initialize_imputation,
    read_csv,
    sample_batch_pair,
    sample_batch_pair_stratified,
    standardize,
    unstandardize,
    write_csv,
)
from .imputers import (
    DirectConfig,
    IceModel,
    LinearColumnParams,
    MlpColumnParams,
    RoundRobinConfig,
    RoundRobinModel,
    fit_direct,
    ice_fit,
    ice_transform,
    impute_ice,
    impute_mean,
    impute_sinkhorn_direct,
    impute_softimpute,
    load_model,
    rr_fit,
    rr_transform,
    save_model,
)
from .masking import (
    MaskSpec,
    mar_logistic_mask,
    mcar_mask,
    mnar_logistic_mask,
    mnar_quantile_mask,
)
from .metrics import MetricReport, evaluate, mae, rmse, w2_metric
from .ot import (
    SinkhornConfig,
    TransportResult,
    exact_w2,
    grad_divergence_points,
    median_heuristic_epsilon,
    pairwise_sq_dists,
    sinkhorn,
    sinkhorn_divergence,
)
from .optim import OptimizerState, adam_state, adam_step, finite_diff_grad, rmsprop_state, rmsprop_step
from .registry import REGISTRY, load_dataset

__version__ = "0.1.0"
