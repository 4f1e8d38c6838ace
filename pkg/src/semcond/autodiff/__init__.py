from .nn import MlpParams, init_mlp, input_gradient, mlp_apply, mlp_forward
from .optim import AdamState, adam_step
from .random import make_rng, sample_gaussian
from .tensor import Graph, Tensor, backward

__all__ = [
    "AdamState",
    "Graph",
    "MlpParams",
    "Tensor",
    "adam_step",
    "backward",
    "init_mlp",
    "input_gradient",
    "make_rng",
    "mlp_apply",
    "mlp_forward",
    "sample_gaussian",
]
