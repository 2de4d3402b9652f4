from .tensor import (
    DimensionError,
    Parameter,
    Tensor,
    add,
    assemble_rows,
    concat,
    exp,
    getitem,
    log,
    matmul,
    mul,
    reshape,
    sqrt,
    tmean,
    transpose,
    tsum,
)
from .functional import bilinear_resize, gelu, layer_norm, linear, softmax
from .nn import (
    LayerNorm,
    Linear,
    Mlp,
    Module,
    MultiHeadSelfAttention,
    TransformerBlock,
    trunc_normal,
)
from .optim import AdamW, adam_step
from .gradcheck import analytic_gradient, central_difference, finite_diff_check, relative_error

__all__ = [
    "AdamW",
    "DimensionError",
    "LayerNorm",
    "Linear",
    "Mlp",
    "Module",
    "MultiHeadSelfAttention",
    "Parameter",
    "Tensor",
    "TransformerBlock",
    "adam_step",
    "add",
    "analytic_gradient",
    "assemble_rows",
    "bilinear_resize",
    "central_difference",
    "concat",
    "exp",
    "finite_diff_check",
    "gelu",
    "getitem",
    "layer_norm",
    "linear",
    "log",
    "matmul",
    "mul",
    "relative_error",
    "reshape",
    "softmax",
    "sqrt",
    "tmean",
    "transpose",
    "trunc_normal",
    "tsum",
]
