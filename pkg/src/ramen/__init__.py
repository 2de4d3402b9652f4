"""Resolution-adjustable multimodal encoder over heterogeneous rasters.

Subpackages: ``numerics`` (autodiff tensors and neural primitives),
``encodings``, ``projector``, ``resampler``, ``temporal`` (the three
resolution-aware stages), ``model`` (token assembly, masked encoding and
reconstruction), ``corpus`` (synthetic multimodal data), ``train``, ``flops``,
``verification``, and the ``cli`` entry point.
"""

from .config import DESK_CONFIG, PAPER_CONFIG, ModelConfig, preset
from .model import (
    LatentGrid,
    MaskPlan,
    ModalityInput,
    RamenModel,
    TokenSequence,
    detokenize,
    make_mask_plan,
    tokenize,
)

__all__ = [
    "DESK_CONFIG",
    "PAPER_CONFIG",
    "LatentGrid",
    "MaskPlan",
    "ModalityInput",
    "ModelConfig",
    "RamenModel",
    "TokenSequence",
    "detokenize",
    "make_mask_plan",
    "preset",
    "tokenize",
]

__version__ = "0.1.0"
