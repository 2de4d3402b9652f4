"""Sinusoidal and learned encodings for channel physics, interpolation ratio,
acquisition day, and resolution-scaled 2D positions.

All sinusoidal encodings share one interleaved layout: component 2k is
sin(value / base^(2k/D)), component 2k+1 the matching cosine. The 2D grid
encoding multiplies positions by the target ground sampling distance before
applying that layout, so one latent pixel always refers to a physical length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Module, Parameter, Tensor

PE_BASE = 10000.0

CATEGORY_IDS = (
    "VV-asc", "VH-asc", "HH-asc", "HV-asc",
    "VV-desc", "VH-desc", "HH-desc", "HV-desc",
    "DSM", "DTM", "slope",
)

KINDS = ("optical", "radar", "elevation")


class RegistryError(KeyError):
    """Lookup of an unknown categorical channel id."""


@dataclass(frozen=True)
class ChannelDescriptor:
    """Physical identity of one raster channel.

    Optical channels carry a central wavelength in nanometers; radar and
    elevation channels carry one of the fixed categorical ids.
    """

    kind: str
    wavelength_nm: float | None = None
    category_id: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.kind == "optical":
            if self.wavelength_nm is None or self.category_id is not None:
                raise ValueError("optical channels take wavelength_nm only")
            if self.wavelength_nm <= 0:
                raise ValueError(f"wavelength must be positive, got {self.wavelength_nm}")
        else:
            if self.category_id is None or self.wavelength_nm is not None:
                raise ValueError(f"{self.kind} channels take category_id only")
            if self.category_id not in CATEGORY_IDS:
                raise RegistryError(f"unknown category id {self.category_id!r}")


@dataclass(frozen=True)
class EncodingConfig:
    d: int = 768
    base: float = PE_BASE
    g_ref: float = 1.0  # reference ground length in meters

    def __post_init__(self):
        if self.d % 2 != 0:
            raise ValueError(f"embedding dim must be even, got {self.d}")
        if self.g_ref <= 0:
            raise ValueError("reference length must be positive")


def sincos_vector(value: float, d: int, base: float = PE_BASE) -> np.ndarray:
    """Interleaved sin/cos encoding of a scalar into ``d`` components."""
    if d % 2 != 0:
        raise ValueError(f"embedding dim must be even, got {d}")
    k = np.arange(d // 2, dtype=np.float64)
    args = value / base ** (2.0 * k / d)
    out = np.empty(d, dtype=np.float64)
    out[0::2] = np.sin(args)
    out[1::2] = np.cos(args)
    return out


def wavelength_pe(wavelength_nm: float, d: int) -> np.ndarray:
    if wavelength_nm <= 0:
        raise ValueError(f"wavelength must be positive, got {wavelength_nm}")
    return sincos_vector(float(wavelength_nm), d)


def ratio_pe(sigma: float, d: int) -> np.ndarray:
    """Encoding of the log interpolation ratio; defined for any finite sigma."""
    if not np.isfinite(sigma):
        raise ValueError(f"ratio must be finite, got {sigma}")
    return sincos_vector(float(sigma), d)


def day_pe(day_of_year: int, d: int) -> np.ndarray:
    if not 1 <= int(day_of_year) <= 366:
        raise ValueError(f"day of year out of range: {day_of_year}")
    return sincos_vector(float(day_of_year), d)


def day_pe_matrix(days, d: int) -> np.ndarray:
    return np.stack([day_pe(day, d) for day in days])


def gsd_pe_arguments(n_pos: int, gsd_target: float, d: int, g_ref: float = 1.0) -> np.ndarray:
    """Sinusoid arguments for one axis: (gsd_target/g_ref) * pos / base^(2k/d).

    Returns (n_pos, d//4); arguments scale linearly in gsd_target.
    """
    k = np.arange(d // 4, dtype=np.float64)
    inv_freq = PE_BASE ** (-2.0 * k / d)
    pos = np.arange(n_pos, dtype=np.float64)
    return (gsd_target / g_ref) * pos[:, None] * inv_freq[None, :]


def _interleave(args: np.ndarray) -> np.ndarray:
    out = np.empty((args.shape[0], 2 * args.shape[1]), dtype=np.float64)
    out[:, 0::2] = np.sin(args)
    out[:, 1::2] = np.cos(args)
    return out


def gsd_pe_2d(h: int, w: int, gsd_target: float, d: int, g_ref: float = 1.0) -> np.ndarray:
    """Resolution-scaled 2D positional encoding, shape (h, w, d).

    The first d/2 components encode the column position x, the second half the
    row position y; with gsd_target == g_ref this is the plain 2D sin/cos grid
    encoding.
    """
    if d % 4 != 0:
        raise ValueError(f"embedding dim must be divisible by 4, got {d}")
    if gsd_target <= 0 or g_ref <= 0:
        raise ValueError("ground sampling distances must be positive")
    if h < 1 or w < 1:
        raise ValueError(f"grid extents must be positive, got ({h}, {w})")
    x_block = _interleave(gsd_pe_arguments(w, gsd_target, d, g_ref))  # (w, d/2)
    y_block = _interleave(gsd_pe_arguments(h, gsd_target, d, g_ref))  # (h, d/2)
    pe = np.empty((h, w, d), dtype=np.float64)
    pe[:, :, : d // 2] = x_block[None, :, :]
    pe[:, :, d // 2:] = y_block[:, None, :]
    return pe


class CategoricalEmbedding(Module):
    """Learned D-vector per non-optical channel id; one shared registry."""

    def __init__(self, d: int, rng: np.random.Generator, dtype=np.float64):
        from .numerics import trunc_normal

        self.table = Parameter(trunc_normal(rng, (len(CATEGORY_IDS), d)), dtype=dtype)
        self._index = {cid: i for i, cid in enumerate(CATEGORY_IDS)}

    def row_indices(self, category_ids) -> np.ndarray:
        try:
            return np.array([self._index[c] for c in category_ids], dtype=np.intp)
        except KeyError as err:
            raise RegistryError(f"unknown category id {err.args[0]!r}") from None

    def rows(self, category_ids) -> Tensor:
        return self.table[self.row_indices(category_ids)]
