"""Style-deconfounded expert routing on a small numpy autodiff core."""

from .autodiff import STD_FLOOR, GradCheckReport, Tensor, grad_check
from .bdcl import FusionConfig, GapReport, NoisePolicy, causal_fuse, nwgm_gap_report
from .config import OptimizerConfig, RunConfig, apply_overrides
from .data import BenchmarkSpec, LabeledBatch, generate_benchmark, style_jitter
from .errors import (
    ConfigError,
    ContractError,
    DomainError,
    NumericError,
    SdclError,
    ShapeError,
)
from .nets import Model, ModelSpec, build_model, load_checkpoint, save_checkpoint
from .rng import stream_rng, stream_seed
from .scm import (
    SCMSpec,
    interventional_distribution,
    observational_conditional,
    plugin_backdoor_estimator,
    sample_observational,
    tv_gap,
)
from .sgem import (
    ConfounderSet,
    GatingDecision,
    load_balance_loss,
    moe_forward,
    route,
    style_embedding,
    update_confounder_set,
)
from .trainer import TrainReport, ablate, evaluate, sweep, train

__version__ = "0.1.0"

__all__ = [
    "STD_FLOOR",
    "BenchmarkSpec",
    "ConfigError",
    "ConfounderSet",
    "ContractError",
    "DomainError",
    "FusionConfig",
    "GapReport",
    "GatingDecision",
    "GradCheckReport",
    "LabeledBatch",
    "Model",
    "ModelSpec",
    "NoisePolicy",
    "NumericError",
    "OptimizerConfig",
    "RunConfig",
    "SCMSpec",
    "SdclError",
    "ShapeError",
    "Tensor",
    "TrainReport",
    "ablate",
    "apply_overrides",
    "build_model",
    "causal_fuse",
    "evaluate",
    "generate_benchmark",
    "grad_check",
    "interventional_distribution",
    "load_balance_loss",
    "load_checkpoint",
    "moe_forward",
    "nwgm_gap_report",
    "observational_conditional",
    "plugin_backdoor_estimator",
    "route",
    "sample_observational",
    "save_checkpoint",
    "stream_rng",
    "stream_seed",
    "style_embedding",
    "style_jitter",
    "sweep",
    "train",
    "tv_gap",
    "update_confounder_set",
]
