"""Channel-conditioned projection between raw sensor channels and the shared
latent space.

A per-kind hypernetwork maps each channel's physical encoding (wavelength
sinusoid or learned categorical vector) to one row of a C x D projection
matrix. Projection is a per-pixel linear map along the channel axis; its
transpose recovers channels during reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encodings import CategoricalEmbedding, ChannelDescriptor, wavelength_pe
from .numerics import DimensionError, Linear, Module, Tensor, gelu


@dataclass
class ProjectionMatrix:
    m: Tensor  # (C, D)
    channels: tuple[ChannelDescriptor, ...]

    @property
    def n_channels(self) -> int:
        return self.m.shape[0]

    @property
    def d(self) -> int:
        return self.m.shape[1]


class ChannelProjector(Module):
    """Hypernetwork for one channel kind: encoding -> projection row."""

    def __init__(self, d: int, rng: np.random.Generator, hidden_mult: int = 2, dtype=np.float64):
        self.fc1 = Linear(d, hidden_mult * d, rng, dtype)
        self.fc2 = Linear(hidden_mult * d, d, rng, dtype)

    def rows(self, encodings: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(encodings)))


class ProjectorBank(Module):
    """The three kind-specific projectors plus the categorical registry.

    Everything downstream of the projection matrices is shared across
    modalities; only this bank is aware of the input type.
    """

    def __init__(self, d: int, rng: np.random.Generator, hidden_mult: int = 2, dtype=np.float64):
        self.optical = ChannelProjector(d, rng, hidden_mult, dtype)
        self.radar = ChannelProjector(d, rng, hidden_mult, dtype)
        self.elevation = ChannelProjector(d, rng, hidden_mult, dtype)
        self.embeddings = CategoricalEmbedding(d, rng, dtype)
        self.d = d
        self.dtype = dtype

    def build_matrix(self, channels) -> ProjectionMatrix:
        channels = tuple(channels)
        if not channels:
            raise ValueError("cannot build a projection matrix for zero channels")
        kinds = {c.kind for c in channels}
        if len(kinds) > 1:
            raise ValueError(f"mixed channel kinds in one modality: {sorted(kinds)}")
        kind = channels[0].kind
        if kind == "optical":
            enc = Tensor(
                np.stack([wavelength_pe(c.wavelength_nm, self.d) for c in channels]),
                dtype=self.dtype,
            )
            rows = self.optical.rows(enc)
        else:
            enc = self.embeddings.rows([c.category_id for c in channels])
            projector = self.radar if kind == "radar" else self.elevation
            rows = projector.rows(enc)
        return ProjectionMatrix(rows, channels)


def project(x: Tensor, pm: ProjectionMatrix) -> Tensor:
    """(T, C, H, W) -> (T, D, H, W): per-pixel channel mix by the matrix rows."""
    t, c, h, w = x.shape
    if c != pm.n_channels:
        raise DimensionError(f"input has {c} channels but projection matrix has {pm.n_channels} rows")
    flat = x.reshape(t, c, h * w).transpose(0, 2, 1)  # (T, HW, C)
    latent = flat @ pm.m  # (T, HW, D)
    return latent.transpose(0, 2, 1).reshape(t, pm.d, h, w)


def reconstruct_channels(y: Tensor, pm: ProjectionMatrix) -> Tensor:
    """(T, D, H, W) -> (T, C, H, W): per-pixel multiplication by the transpose."""
    t, d, h, w = y.shape
    if d != pm.d:
        raise DimensionError(f"latent dim {d} does not match projection matrix width {pm.d}")
    flat = y.reshape(t, d, h * w).transpose(0, 2, 1)  # (T, HW, D)
    chans = flat @ pm.m.transpose(1, 0)  # (T, HW, C)
    return chans.transpose(0, 2, 1).reshape(t, pm.n_channels, h, w)
