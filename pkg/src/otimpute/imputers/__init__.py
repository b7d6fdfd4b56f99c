from .baselines import (
    IceModel,
    ice_fit,
    ice_transform,
    impute_ice,
    impute_mean,
    impute_softimpute,
    soft_threshold,
    softimpute_fixed,
)
from .direct import DirectConfig, fit_direct, impute_sinkhorn_direct
from .mlp import MlpColumnParams, init_mlp_params, mlp_forward, mlp_forward_backward
from .roundrobin import (
    LinearColumnParams,
    RoundRobinConfig,
    RoundRobinModel,
    load_model,
    rr_fit,
    rr_transform,
    save_model,
)

__all__ = [
    "IceModel",
    "ice_fit",
    "ice_transform",
    "impute_ice",
    "impute_mean",
    "impute_softimpute",
    "soft_threshold",
    "softimpute_fixed",
    "DirectConfig",
    "fit_direct",
    "impute_sinkhorn_direct",
    "MlpColumnParams",
    "init_mlp_params",
    "mlp_forward",
    "mlp_forward_backward",
    "LinearColumnParams",
    "RoundRobinConfig",
    "RoundRobinModel",
    "load_model",
    "rr_fit",
    "rr_transform",
    "save_model",
]
