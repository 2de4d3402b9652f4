"""Model size presets.

The full-size preset carries the production architecture constants; the desk
preset shrinks every width and depth so the whole pipeline (including gradient
checks and short pretraining runs) fits on a laptop CPU. Switching presets
changes configuration only, never code paths.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ModelConfig:
    d: int = 768
    depth: int = 12
    heads: int = 12
    d_dec: int = 512
    depth_dec: int = 8
    heads_dec: int = 16
    mask_ratio: float = 0.75
    n_conv: int = 4
    temporal_heads: int = 16
    temporal_key_dim: int = 8
    temporal_value_mult: int = 3
    projector_hidden_mult: int = 2
    gate_hidden_div: int = 4
    mlp_ratio: int = 4
    g_ref: float = 1.0

    def __post_init__(self):
        if self.d % self.heads != 0 or self.d_dec % self.heads_dec != 0:
            raise ValueError("embedding dims must be divisible by their head counts")
        if self.d % 4 != 0 or self.d_dec % 4 != 0:
            raise ValueError("embedding dims must be divisible by 4 for the 2D grid encoding")
        if not 0.0 <= self.mask_ratio < 1.0:
            raise ValueError(f"mask ratio must lie in [0, 1), got {self.mask_ratio}")


PAPER_CONFIG = ModelConfig()

DESK_CONFIG = ModelConfig(d=192, depth=4, heads=4, d_dec=96, depth_dec=2, heads_dec=4)

_PRESETS = {"paper": PAPER_CONFIG, "desk": DESK_CONFIG}


def preset(name: str) -> ModelConfig:
    try:
        return _PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}") from None
