"""Multimodal token assembly, masked encoding/decoding, and reconstruction.

The pipeline per modality: channel-conditioned projection to the latent
width, resampling to the shared target ground sampling distance, temporal
aggregation. Each latent grid cell becomes one token; tokens from all
modalities are concatenated, positionally encoded by physical ground
coordinates, uniformly masked, encoded with a CLS token, decoded with a
shared mask token, and reconstructed back to every modality's native
temporal, spatial, and channel layout by mirrored modules.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import ModelConfig
from .encodings import ChannelDescriptor, gsd_pe_2d
from .numerics import (
    LayerNorm,
    Linear,
    Module,
    Parameter,
    Tensor,
    TransformerBlock,
    assemble_rows,
    concat,
    trunc_normal,
)
from .projector import ProjectionMatrix, ProjectorBank, project, reconstruct_channels
from .resampler import ResampleSpec, SpatialResampler
from .temporal import TemporalAggregator, TemporalExpander, TimeStamps


@dataclass(frozen=True)
class ModalityInput:
    """One standardized raster stack entering the model."""

    name: str
    channels: tuple[ChannelDescriptor, ...]
    gsd: float
    values: np.ndarray  # (T, C, H, W), already standardized
    days: tuple[int, ...]

    def __post_init__(self):
        t, c, _, _ = self.values.shape
        if c != len(self.channels):
            raise ValueError(f"{self.name}: {c} raster channels but {len(self.channels)} descriptors")
        if t != len(self.days):
            raise ValueError(f"{self.name}: {t} timesteps but {len(self.days)} acquisition days")


@dataclass
class GridMeta:
    name: str
    offset: int
    h: int
    w: int


@dataclass
class LatentGrid:
    """One modality's latent feature map at a chosen target resolution."""

    name: str
    grid: Tensor  # (D, H, W)
    gsd_target: float


@dataclass
class TokenSequence:
    """Flattened multimodal tokens plus per-token grid bookkeeping.

    ``tokens`` carry the grid positional encodings; ``latents`` is the same
    layout before any encoding was added, kept so detokenization is an exact
    structural inverse.
    """

    tokens: Tensor  # (N, D)
    latents: Tensor  # (N, D)
    modality_idx: np.ndarray
    grid_h: np.ndarray
    grid_w: np.ndarray
    gsd_target: float
    grids: list[GridMeta] = field(default_factory=list)

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[0]


@dataclass(frozen=True)
class MaskPlan:
    visible_idx: np.ndarray
    masked_idx: np.ndarray
    ratio: float

    @property
    def n_total(self) -> int:
        return self.visible_idx.size + self.masked_idx.size


def tokenize(latent_grids: list[LatentGrid], g_ref: float = 1.0) -> TokenSequence:
    """Flatten per-modality (D, H, W) grids row-major, add the ground-scaled
    2D positional encoding, and concatenate in the given modality order."""
    if not latent_grids:
        raise ValueError("tokenize requires at least one latent grid")
    gsd_target = latent_grids[0].gsd_target
    if any(lg.gsd_target != gsd_target for lg in latent_grids):
        raise ValueError(
            f"latent grids carry mixed target GSDs: {[lg.gsd_target for lg in latent_grids]}"
        )
    if gsd_target <= 0:
        raise ValueError(f"target ground sampling distance must be positive, got {gsd_target}")
    d = latent_grids[0].grid.shape[0]
    flat_parts, meta_m, meta_h, meta_w, grids = [], [], [], [], []
    pe_parts = []
    offset = 0
    for m, lg in enumerate(latent_grids):
        name, grid = lg.name, lg.grid
        gd, h, w = grid.shape
        if gd != d:
            raise ValueError(f"latent widths differ across modalities: {gd} vs {d}")
        flat_parts.append(grid.reshape(d, h * w).transpose(1, 0))  # (HW, D)
        pe_parts.append(gsd_pe_2d(h, w, gsd_target, d, g_ref).reshape(h * w, d))
        hh, ww = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        meta_m.append(np.full(h * w, m))
        meta_h.append(hh.reshape(-1))
        meta_w.append(ww.reshape(-1))
        grids.append(GridMeta(name, offset, h, w))
        offset += h * w
    latents = concat(flat_parts, axis=0)
    pe = Tensor(np.concatenate(pe_parts, axis=0), dtype=latents.dtype)
    return TokenSequence(
        tokens=latents + pe,
        latents=latents,
        modality_idx=np.concatenate(meta_m),
        grid_h=np.concatenate(meta_h),
        grid_w=np.concatenate(meta_w),
        gsd_target=gsd_target,
        grids=grids,
    )


def detokenize(seq: TokenSequence) -> list[tuple[str, Tensor]]:
    """Exact structural inverse of tokenize (positional encodings stripped)."""
    out = []
    for gm in seq.grids:
        rows = seq.latents[gm.offset : gm.offset + gm.h * gm.w]
        d = rows.shape[1]
        out.append((gm.name, rows.transpose(1, 0).reshape(d, gm.h, gm.w)))
    return out


def make_mask_plan(n_tokens: int, ratio: float, seed) -> MaskPlan:
    """Uniform random token subset of size floor(ratio * N), deterministic in the seed."""
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"mask ratio must lie in [0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_tokens)
    n_masked = int(np.floor(ratio * n_tokens))
    return MaskPlan(
        visible_idx=np.sort(perm[n_masked:]),
        masked_idx=np.sort(perm[:n_masked]),
        ratio=ratio,
    )


@dataclass
class ModalityAssembly:
    """Everything reconstruct needs to mirror one modality's forward path."""

    name: str
    matrix: ProjectionMatrix
    spec: ResampleSpec
    stamps: TimeStamps
    grid: GridMeta


class RamenModel(Module):
    """Shared encoder with channel/space/time adapters and the MAE decoder."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.dtype = dtype
        d, dd = cfg.d, cfg.d_dec
        self.projectors = ProjectorBank(d, rng, cfg.projector_hidden_mult, dtype)
        self.resampler = SpatialResampler(d, cfg.n_conv, rng, cfg.gate_hidden_div, dtype)
        self.temporal = TemporalAggregator(
            d, rng, cfg.temporal_heads, cfg.temporal_key_dim, cfg.temporal_value_mult, dtype
        )
        self.cls_token = Parameter(trunc_normal(rng, (1, d)), dtype=dtype)
        self.encoder_blocks = [
            TransformerBlock(d, cfg.heads, rng, dtype, cfg.mlp_ratio) for _ in range(cfg.depth)
        ]
        self.encoder_norm = LayerNorm(d, dtype)
        self.decoder_embed = Linear(d, dd, rng, dtype)
        self.mask_token = Parameter(trunc_normal(rng, (dd,)), dtype=dtype)
        self.decoder_blocks = [
            TransformerBlock(dd, cfg.heads_dec, rng, dtype, cfg.mlp_ratio) for _ in range(cfg.depth_dec)
        ]
        self.decoder_norm = LayerNorm(dd, dtype)
        self.expander = TemporalExpander(dd, cfg.heads_dec, rng, dtype, cfg.mlp_ratio)
        self.decoder_resampler = SpatialResampler(dd, cfg.n_conv, rng, cfg.gate_hidden_div, dtype)
        self.reconstruction_head = Linear(dd, d, rng, dtype)

    # -- forward pieces -----------------------------------------------------

    def embed_modality(self, inp: ModalityInput, gsd_target: float) -> tuple[Tensor, ModalityAssembly]:
        matrix = self.projectors.build_matrix(inp.channels)
        x = Tensor(inp.values, dtype=self.dtype)
        latent = project(x, matrix)
        _, _, h, w = inp.values.shape
        spec = ResampleSpec.from_dims(h, w, inp.gsd, gsd_target)
        aligned = self.resampler.resample(latent, spec)
        stamps = TimeStamps(tuple(inp.days))
        grid = self.temporal.aggregate(aligned, stamps)
        assembly = ModalityAssembly(inp.name, matrix, spec, stamps, GridMeta(inp.name, 0, *grid.shape[1:]))
        return grid, assembly

    def embed(self, inputs: list[ModalityInput], gsd_target: float) -> tuple[TokenSequence, list[ModalityAssembly]]:
        grids, assemblies = [], []
        for inp in inputs:
            grid, asm = self.embed_modality(inp, gsd_target)
            grids.append(LatentGrid(inp.name, grid, gsd_target))
            assemblies.append(asm)
        seq = tokenize(grids, self.cfg.g_ref)
        for asm, gm in zip(assemblies, seq.grids):
            asm.grid = gm
        return seq, assemblies

    def encode(self, seq: TokenSequence, plan: MaskPlan) -> Tensor:
        """Run the shared encoder over visible tokens plus the CLS token."""
        if plan.n_total != seq.n_tokens:
            raise ValueError(f"mask plan covers {plan.n_total} tokens, sequence has {seq.n_tokens}")
        visible = seq.tokens[plan.visible_idx]
        x = concat([self.cls_token, visible], axis=0)
        for block in self.encoder_blocks:
            x = block(x)
        return self.encoder_norm(x)

    def _grid_rows(self, embedded_visible: Tensor, plan: MaskPlan, seq: TokenSequence) -> Tensor:
        rows = assemble_rows(embedded_visible, self.mask_token, plan.visible_idx, seq.n_tokens)
        pe = np.concatenate(
            [
                gsd_pe_2d(gm.h, gm.w, seq.gsd_target, self.cfg.d_dec, self.cfg.g_ref).reshape(-1, self.cfg.d_dec)
                for gm in seq.grids
            ],
            axis=0,
        )
        return rows + Tensor(pe, dtype=self.dtype)

    def decoder_input_rows(self, encoded: Tensor, plan: MaskPlan, seq: TokenSequence) -> Tensor:
        """Grid rows as the decoder sees them: projected visible encodings or
        the shared mask token, plus decoder-width positional encodings."""
        y = self.decoder_embed(encoded)
        return self._grid_rows(y[1:], plan, seq)

    def decode(self, encoded: Tensor, plan: MaskPlan, seq: TokenSequence) -> Tensor:
        y = self.decoder_embed(encoded)
        rows = self._grid_rows(y[1:], plan, seq)
        x = concat([y[0:1], rows], axis=0)
        for block in self.decoder_blocks:
            x = block(x)
        x = self.decoder_norm(x)
        return x[1:]

    def reconstruct(self, decoded: Tensor, assemblies: list[ModalityAssembly]) -> dict[str, Tensor]:
        """Temporal expansion, inverse resampling, then channel recovery via
        the transposed projection matrix."""
        out: dict[str, Tensor] = {}
        dd = self.cfg.d_dec
        for asm in assemblies:
            gm = asm.grid
            rows = decoded[gm.offset : gm.offset + gm.h * gm.w]
            grid = rows.transpose(1, 0).reshape(dd, gm.h, gm.w)
            series = self.expander.expand(grid, asm.stamps)
            native = self.decoder_resampler.resample_inverse(series, asm.spec)
            t, _, h, w = native.shape
            flat = native.reshape(t, dd, h * w).transpose(0, 2, 1)
            latent = self.reconstruction_head(flat)  # (T, HW, D)
            latent = latent.transpose(0, 2, 1).reshape(t, self.cfg.d, h, w)
            out[asm.name] = reconstruct_channels(latent, asm.matrix)
        return out

    # -- masking and loss -----------------------------------------------------

    @staticmethod
    def _native_cells(n_native: int, n_grid: int) -> np.ndarray:
        """Nearest-footprint assignment of native pixels to latent cells."""
        centers = (np.arange(n_native) + 0.5) * (n_grid / n_native) - 0.5
        return np.clip(np.floor(centers + 0.5).astype(int), 0, n_grid - 1)

    def pixel_masks(self, plan: MaskPlan, seq: TokenSequence,
                    assemblies: list[ModalityAssembly]) -> dict[str, np.ndarray]:
        masked = np.zeros(seq.n_tokens, dtype=bool)
        masked[plan.masked_idx] = True
        out = {}
        for asm in assemblies:
            gm = asm.grid
            token_mask = masked[gm.offset : gm.offset + gm.h * gm.w].reshape(gm.h, gm.w)
            rows = self._native_cells(asm.spec.h_in, gm.h)
            cols = self._native_cells(asm.spec.w_in, gm.w)
            out[asm.name] = token_mask[np.ix_(rows, cols)]
        return out

    def masked_loss(self, recons: dict[str, Tensor], targets: dict[str, np.ndarray],
                    pixel_masks: dict[str, np.ndarray]) -> Tensor:
        """Mean over modalities of the per-element masked squared error.

        Per modality the squared error is summed over masked native pixels
        across all timesteps and channels and divided by T*C*H*W, so a single
        masked pixel of a single-channel, single-date raster contributes
        exactly err^2 / (H*W).
        """
        if all(not pixel_masks[name].any() for name in recons):
            warnings.warn("no masked pixels in any modality; loss defined as 0", RuntimeWarning)
            return Tensor(np.zeros(()), dtype=self.dtype)
        terms = []
        for name, recon in recons.items():
            t, c, h, w = recon.shape
            mask = pixel_masks[name].astype(recon.dtype)
            diff = recon - Tensor(targets[name], dtype=recon.dtype)
            masked_sq = (diff * diff) * Tensor(mask, dtype=recon.dtype)
            terms.append(masked_sq.sum() / float(t * c * h * w))
        total = terms[0]
        for term in terms[1:]:
            total = total + term
        return total / float(len(terms))

    def loss_on(self, inputs: list[ModalityInput], gsd_target: float, mask_seed) -> tuple[Tensor, dict]:
        seq, assemblies = self.embed(inputs, gsd_target)
        plan = make_mask_plan(seq.n_tokens, self.cfg.mask_ratio, mask_seed)
        encoded = self.encode(seq, plan)
        decoded = self.decode(encoded, plan, seq)
        recons = self.reconstruct(decoded, assemblies)
        masks = self.pixel_masks(plan, seq, assemblies)
        targets = {inp.name: inp.values for inp in inputs}
        loss = self.masked_loss(recons, targets, masks)
        return loss, {"n_tokens": seq.n_tokens, "n_masked": plan.masked_idx.size}

    # -- inference -------------------------------------------------------------

    def encode_features(self, inputs: list[ModalityInput], gsd_target: float) -> dict[str, np.ndarray]:
        """Full unmasked forward pass; per-modality (D, H_t, W_t) feature grids."""
        seq, assemblies = self.embed(inputs, gsd_target)
        plan = MaskPlan(
            visible_idx=np.arange(seq.n_tokens), masked_idx=np.arange(0), ratio=0.0
        )
        encoded = self.encode(seq, plan)
        grid_tokens = encoded[1:]
        out = {}
        for asm in assemblies:
            gm = asm.grid
            rows = grid_tokens.data[gm.offset : gm.offset + gm.h * gm.w]
            out[asm.name] = rows.T.reshape(self.cfg.d, gm.h, gm.w).copy()
        return out

    # -- accounting --------------------------------------------------------------

    def parameter_groups(self) -> dict[str, int]:
        """Parameter counts by architectural stage."""
        groups = {
            "projectors": self.projectors.n_parameters(),
            "resampler": self.resampler.n_parameters(),
            "temporal": self.temporal.n_parameters(),
            "encoder": (
                sum(b.n_parameters() for b in self.encoder_blocks)
                + self.encoder_norm.n_parameters()
                + self.cls_token.size
            ),
            "decoder_reconstruction": (
                self.decoder_embed.n_parameters()
                + self.mask_token.size
                + sum(b.n_parameters() for b in self.decoder_blocks)
                + self.decoder_norm.n_parameters()
                + self.expander.n_parameters()
                + self.decoder_resampler.n_parameters()
                + self.reconstruction_head.n_parameters()
            ),
        }
        groups["total"] = sum(v for k, v in groups.items())
        return groups
