from .tensor import (
    Tensor,
    broadcast_to,
    concat,
    dilate3d,
    gather_last,
    no_grad,
    pad3d,
    parameter,
    set_debug_finite,
    softmax,
)
from .layers import (
    BatchNorm,
    Conv3d,
    Dropout,
    Embedding,
    Identity,
    LayerNorm,
    Linear,
    Module,
    ModuleList,
    MultiheadAttention,
    PositionalEncoding,
    ReLU,
    Sequential,
    Tanh,
)
from .optim import Adam
from .checkpoint import load_arrays, load_module, save_arrays, save_module

__all__ = [
    "Adam", "BatchNorm", "Conv3d", "Dropout", "Embedding", "Identity",
    "LayerNorm", "Linear", "Module", "ModuleList", "MultiheadAttention",
    "PositionalEncoding", "ReLU", "Sequential", "Tanh", "Tensor",
    "broadcast_to", "concat", "dilate3d", "gather_last", "load_arrays",
    "load_module", "no_grad", "pad3d", "parameter", "save_arrays",
    "save_module", "set_debug_finite", "softmax",
]
