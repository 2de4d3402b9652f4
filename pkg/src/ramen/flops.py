"""Closed-form operation counts for encoding one multimodal tile.

Estimator-level accounting: every multiply-accumulate counts as two
operations. Per transformer block the attention score/value products
contribute the quadratic term 4*N^2*D, the qkv/output projections 8*N*D^2,
and the feed-forward 4*r*N*D^2. Token embedding work (expert mixing plus the
temporal affine paths) is linear in the token count; the channel projection
is linear in native pixels and independent of the target resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import ModelConfig
from .corpus import DatasetSpec
from .resampler import target_dims


@dataclass(frozen=True)
class CostBreakdown:
    gsd_target: float
    n_tokens: int
    input_ops: float
    embed_ops: float
    attention_quadratic_ops: float
    attention_linear_ops: float
    mlp_ops: float

    @property
    def total_ops(self) -> float:
        return (
            self.input_ops
            + self.embed_ops
            + self.attention_quadratic_ops
            + self.attention_linear_ops
            + self.mlp_ops
        )


def token_count(dspec: DatasetSpec, modality_names, gsd_target: float) -> int:
    if not modality_names:
        raise ValueError("cannot cost an empty modality set")
    n = 0
    for name in modality_names:
        m = dspec.modality(name)
        h, w = target_dims(m.tile, m.tile, m.gsd, gsd_target)
        n += h * w
    return n


def encoder_cost(cfg: ModelConfig, dspec: DatasetSpec, modality_names,
                 gsd_target: float) -> CostBreakdown:
    n = token_count(dspec, modality_names, gsd_target)
    d = cfg.d
    input_ops = 0.0
    for name in modality_names:
        m = dspec.modality(name)
        # channel projection at native pixels, one expected timestep per date
        t_avg = (2 + m.t_max) / 2 if m.temporal else 1
        input_ops += 2.0 * t_avg * len(m.channels) * d * m.tile * m.tile
    per_token_embed = (
        2.0 * d * d  # resampler expert mix
        + 4.0 * cfg.temporal_value_mult * d * d  # temporal value and output maps
        + 2.0 * d * cfg.temporal_heads * cfg.temporal_key_dim  # temporal keys
    )
    attention_quadratic = cfg.depth * 4.0 * n * n * d
    attention_linear = cfg.depth * 8.0 * n * d * d
    mlp = cfg.depth * 4.0 * cfg.mlp_ratio * n * d * d
    return CostBreakdown(
        gsd_target=gsd_target,
        n_tokens=n,
        input_ops=input_ops,
        embed_ops=per_token_embed * n,
        attention_quadratic_ops=attention_quadratic,
        attention_linear_ops=attention_linear,
        mlp_ops=mlp,
    )


def cost_table(cfg: ModelConfig, dspec: DatasetSpec, modality_names,
               gsd_targets) -> list[CostBreakdown]:
    return [encoder_cost(cfg, dspec, modality_names, g) for g in gsd_targets]
