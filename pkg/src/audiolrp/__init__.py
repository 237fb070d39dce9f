"""audiolrp: small audio CNNs, relevance-propagation explanations, and
perturbation-based validation of those explanations."""

from .backend import active_backend, set_backend
from .lrp import LrpConfig, RelevanceMap, explain, init_output_relevance
from .nn import (
    LayerSpec,
    Model,
    ModelSpec,
    TrainConfig,
    backward,
    build_alexnet_variant,
    build_audionet,
    fit,
    forward,
    sgd_step,
    softmax_cross_entropy,
)

__version__ = "0.1.0"

__all__ = [
    "LayerSpec",
    "LrpConfig",
    "Model",
    "ModelSpec",
    "RelevanceMap",
    "TrainConfig",
    "active_backend",
    "backward",
    "build_alexnet_variant",
    "build_audionet",
    "explain",
    "fit",
    "forward",
    "init_output_relevance",
    "set_backend",
    "sgd_step",
    "softmax_cross_entropy",
    "__version__",
]
