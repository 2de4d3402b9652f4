"""Synthetic multimodal corpus.

Samples are geoaligned: every modality of a sample observes the same smooth
random fields, expressed in ground coordinates and evaluated at each
modality's own pixel centers, then mixed with channel-private structure and a
little white noise. Field synthesis is a finite sum of random-phase cosines,
so every channel has unit variance by construction before the frozen
per-channel mean/std is applied; the normalization table is therefore exact
rather than estimated.

Also hosts the per-iteration sampling strategy: pick a dataset, a nonempty
modality subset, and a target ground sampling distance from the dataset's
discrete grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .encodings import CATEGORY_IDS, ChannelDescriptor
from .model import ModalityInput

S2_WAVELENGTHS_NM = (
    440.0, 490.0, 560.0, 665.0, 705.0, 740.0, 783.0,
    842.0, 865.0, 945.0, 1373.0, 1610.0, 2200.0,
)

# mixing amplitudes; they sum in quadrature to 1 so channels are unit variance
_SHARED_STATIC = 0.8
_SHARED_SEASONAL = 0.3
_CHANNEL_PRIVATE = 0.45
_WHITE = float(np.sqrt(1.0 - _SHARED_STATIC**2 - _SHARED_SEASONAL**2 - _CHANNEL_PRIVATE**2))
_CLIP_SIGMA = 5.9
_N_WAVES = 24


class ConfigurationError(ValueError):
    """Corpus configuration is inconsistent or incomplete."""


@dataclass(frozen=True)
class ModalitySpec:
    name: str
    channels: tuple[ChannelDescriptor, ...]
    gsd: float
    tile: int
    temporal: bool = False
    t_max: int = 1
    channel_means: tuple[float, ...] = ()
    channel_stds: tuple[float, ...] = ()

    def __post_init__(self):
        if self.gsd <= 0:
            raise ConfigurationError(f"{self.name}: native GSD must be positive")
        if self.t_max < 1 or (self.temporal and self.t_max < 2):
            raise ConfigurationError(f"{self.name}: invalid t_max {self.t_max}")
        kinds = {c.kind for c in self.channels}
        if len(kinds) != 1:
            raise ConfigurationError(f"{self.name}: channels must share one kind, got {sorted(kinds)}")
        if len(self.channel_means) != len(self.channels) or len(self.channel_stds) != len(self.channels):
            raise ConfigurationError(f"{self.name}: normalization stats must cover every channel")
        if any(s <= 0 for s in self.channel_stds):
            raise ConfigurationError(f"{self.name}: stds must be positive")

    @property
    def kind(self) -> str:
        return self.channels[0].kind

    @property
    def extent_m(self) -> float:
        return self.tile * self.gsd


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    modalities: tuple[ModalitySpec, ...]
    gsd_min: float
    gsd_max: float
    gsd_interval: float
    batch_size: int = 1
    modality_probs: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.gsd_min > self.gsd_max or self.gsd_interval <= 0:
            raise ConfigurationError(f"{self.name}: bad GSD range")
        steps = (self.gsd_max - self.gsd_min) / self.gsd_interval
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigurationError(f"{self.name}: interval does not divide the GSD range")
        if self.modality_probs is not None and len(self.modality_probs) != len(self.modalities):
            raise ConfigurationError(f"{self.name}: one inclusion probability per modality required")

    @property
    def gsd_grid(self) -> np.ndarray:
        n = int(round((self.gsd_max - self.gsd_min) / self.gsd_interval))
        return self.gsd_min + self.gsd_interval * np.arange(n + 1)

    def modality(self, name: str) -> ModalitySpec:
        for m in self.modalities:
            if m.name == name:
                return m
        raise ConfigurationError(f"{self.name}: unknown modality {name!r}")


@dataclass
class MultimodalSample:
    dataset: str
    rasters: dict[str, np.ndarray]  # name -> (T, C, H, W), raw units
    days: dict[str, tuple[int, ...]]


@dataclass(frozen=True)
class IterationDraw:
    dataset: str
    modalities: tuple[str, ...]
    gsd_target: float


class NormalizationTable:
    """Per (dataset, modality, channel) mean and std."""

    def __init__(self):
        self._entries: dict[tuple[str, str, int], tuple[float, float]] = {}

    @classmethod
    def from_corpus(cls, corpus) -> "NormalizationTable":
        table = cls()
        for ds in corpus:
            for m in ds.modalities:
                for i, (mu, sd) in enumerate(zip(m.channel_means, m.channel_stds)):
                    table._entries[(ds.name, m.name, i)] = (mu, sd)
        return table

    def stats(self, dataset: str, modality: str, channel: int) -> tuple[float, float]:
        try:
            return self._entries[(dataset, modality, channel)]
        except KeyError:
            raise ConfigurationError(
                f"no normalization entry for {dataset}/{modality}/channel {channel}"
            ) from None


def standardize(x: np.ndarray, mspec: ModalitySpec) -> np.ndarray:
    mean = np.asarray(mspec.channel_means)[None, :, None, None]
    std = np.asarray(mspec.channel_stds)[None, :, None, None]
    return (x - mean) / std


def destandardize(x: np.ndarray, mspec: ModalitySpec) -> np.ndarray:
    mean = np.asarray(mspec.channel_means)[None, :, None, None]
    std = np.asarray(mspec.channel_stds)[None, :, None, None]
    return x * std + mean


# -- random field synthesis -----------------------------------------------------


def _wave_bank(rng: np.random.Generator, extent: float, k: int = _N_WAVES):
    wavelengths = rng.uniform(extent / 5.0, extent / 1.5, k)
    theta = rng.uniform(0.0, 2.0 * np.pi, k)
    mags = 2.0 * np.pi / wavelengths
    freqs = np.stack([mags * np.cos(theta), mags * np.sin(theta)], axis=1)  # (K, 2)
    phases = rng.uniform(0.0, 2.0 * np.pi, k)
    return freqs, phases


def _eval_field(freqs: np.ndarray, phases: np.ndarray, mspec: ModalitySpec) -> np.ndarray:
    """Evaluate a unit-variance cosine field at the modality's pixel centers."""
    coords = (np.arange(mspec.tile) + 0.5) * mspec.gsd
    gx, gy = np.meshgrid(coords, coords, indexing="xy")
    args = gx[..., None] * freqs[:, 0] + gy[..., None] * freqs[:, 1] + phases
    return np.sqrt(2.0 / freqs.shape[0]) * np.cos(args).sum(axis=-1)


def _draw_days(rng: np.random.Generator, mspec: ModalitySpec) -> tuple[int, ...]:
    if mspec.temporal:
        t = int(rng.integers(2, mspec.t_max, endpoint=True))
        days = np.sort(rng.choice(366, size=t, replace=False) + 1)
        return tuple(int(d) for d in days)
    return (int(rng.integers(1, 366, endpoint=True)),)


def generate_sample(dspec: DatasetSpec, seed) -> MultimodalSample:
    """Deterministic geoaligned sample; same seed gives bit-identical output."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(3 + len(dspec.modalities))
    shared_rng = np.random.default_rng(children[0])
    extent = max(m.extent_m for m in dspec.modalities)
    static_bank = _wave_bank(shared_rng, extent)
    season_u = _wave_bank(np.random.default_rng(children[1]), extent)
    season_v = _wave_bank(np.random.default_rng(children[2]), extent)

    rasters, days_out = {}, {}
    for mspec, child in zip(dspec.modalities, children[3:]):
        rng = np.random.default_rng(child)
        days = _draw_days(rng, mspec)
        t, c, n = len(days), len(mspec.channels), mspec.tile
        static = _eval_field(*static_bank, mspec)
        su = _eval_field(*season_u, mspec)
        sv = _eval_field(*season_v, mspec)
        theta = 2.0 * np.pi * np.asarray(days) / 366.0
        seasonal = np.cos(theta)[:, None, None] * su + np.sin(theta)[:, None, None] * sv  # (T, H, W)
        private = np.stack([_eval_field(*_wave_bank(rng, extent), mspec) for _ in range(c)])  # (C, H, W)
        white = rng.standard_normal((t, c, n, n))
        z = (
            _SHARED_STATIC * static[None, None]
            + _SHARED_SEASONAL * seasonal[:, None]
            + _CHANNEL_PRIVATE * private[None]
            + _WHITE * white
        )
        z = np.clip(z, -_CLIP_SIGMA, _CLIP_SIGMA)
        mean = np.asarray(mspec.channel_means)[None, :, None, None]
        std = np.asarray(mspec.channel_stds)[None, :, None, None]
        rasters[mspec.name] = mean + std * z
        days_out[mspec.name] = days
    return MultimodalSample(dspec.name, rasters, days_out)


def sample_seed(base_seed: int, sample_index: int) -> np.random.SeedSequence:
    """Independent per-sample seed stream."""
    return np.random.SeedSequence([int(base_seed), int(sample_index)])


# -- iteration sampling -----------------------------------------------------------


def sample_iteration(corpus, rng: np.random.Generator) -> IterationDraw:
    """One pretraining draw: dataset, nonempty modality subset, target GSD."""
    if not corpus:
        raise ConfigurationError("empty corpus")
    ds = corpus[int(rng.integers(len(corpus)))]
    n = len(ds.modalities)
    if ds.modality_probs is None:
        mask = int(rng.integers(1, 2**n))  # uniform over nonempty subsets
        subset = tuple(m.name for i, m in enumerate(ds.modalities) if mask >> i & 1)
    else:
        while True:
            keep = rng.random(n) < np.asarray(ds.modality_probs)
            if keep.any():
                break
        subset = tuple(m.name for m, k in zip(ds.modalities, keep) if k)
    grid = ds.gsd_grid
    gsd = float(grid[int(rng.integers(len(grid)))])
    return IterationDraw(ds.name, subset, gsd)


def build_inputs(sample: MultimodalSample, dspec: DatasetSpec,
                 subset: tuple[str, ...] | None = None) -> list[ModalityInput]:
    """Standardize a sample's rasters into model inputs, in declared order."""
    names = set(subset) if subset is not None else {m.name for m in dspec.modalities}
    inputs = []
    for m in dspec.modalities:
        if m.name not in names:
            continue
        inputs.append(
            ModalityInput(
                name=m.name,
                channels=m.channels,
                gsd=m.gsd,
                values=standardize(sample.rasters[m.name], m),
                days=sample.days[m.name],
            )
        )
    return inputs


def save_sample(path, sample: MultimodalSample):
    from .checkpoint import write_arrays

    arrays = {f"{name}/raster": arr for name, arr in sample.rasters.items()}
    meta = {
        "kind": "sample",
        "dataset": sample.dataset,
        "days": {name: list(days) for name, days in sample.days.items()},
    }
    write_arrays(path, arrays, meta)


def load_sample(path) -> MultimodalSample:
    from .checkpoint import read_arrays

    arrays, meta = read_arrays(path)
    if meta.get("kind") != "sample":
        raise ConfigurationError(f"{path}: not a sample container")
    rasters = {name.split("/")[0]: arr.astype(np.float64) for name, arr in arrays.items()}
    days = {name: tuple(int(d) for d in ds) for name, ds in meta["days"].items()}
    return MultimodalSample(meta["dataset"], rasters, days)


# -- built-in desk-scale presets ----------------------------------------------------


def _optical(wavelengths) -> tuple[ChannelDescriptor, ...]:
    return tuple(ChannelDescriptor("optical", wavelength_nm=w) for w in wavelengths)


def _categorical(kind, ids) -> tuple[ChannelDescriptor, ...]:
    return tuple(ChannelDescriptor(kind, category_id=i) for i in ids)


def _synth_stats(key: str, n: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    # frozen per-channel raw-unit stats; seeded by the modality path so the
    # table is stable across runs and machines
    rng = np.random.default_rng(int.from_bytes(key.encode(), "little") % (2**32))
    means = np.round(rng.uniform(-1.0, 3.0, n), 3)
    stds = np.round(rng.uniform(0.5, 2.5, n), 3)
    return tuple(means.tolist()), tuple(stds.tolist())


def _modality(name, dataset, channels, gsd, tile, temporal=False, t_max=1) -> ModalitySpec:
    means, stds = _synth_stats(f"{dataset}/{name}", len(channels))
    return ModalitySpec(name, channels, gsd, tile, temporal, t_max, means, stds)


def desk_corpus() -> list[DatasetSpec]:
    """Three desk-scale dataset presets mirroring the pretraining mix's shape
    metadata: a VHR+time-series land-cover set, a paired HR/LR set, and a
    global coarse multimodal set."""
    s2_10 = tuple(w for w in S2_WAVELENGTHS_NM if w not in (440.0, 945.0, 1373.0))
    s2_12 = tuple(w for w in S2_WAVELENGTHS_NM if w != 1373.0)
    rgbn = (665.0, 560.0, 490.0, 842.0)
    flair = DatasetSpec(
        name="flair_like",
        modalities=(
            _modality("aerial", "flair_like", _optical(rgbn), 3.0, 20),
            _modality("s2", "flair_like", _optical(s2_10), 6.0, 10, temporal=True, t_max=3),
            _modality("s1", "flair_like", _categorical("radar", ("VV-asc", "VH-asc")), 6.0, 10,
                      temporal=True, t_max=3),
            _modality("elevation", "flair_like", _categorical("elevation", ("DSM", "DTM")), 3.0, 20),
        ),
        gsd_min=3.0, gsd_max=20.0, gsd_interval=1.0, batch_size=2,
    )
    worldstrat = DatasetSpec(
        name="worldstrat_like",
        modalities=(
            _modality("spot", "worldstrat_like", _optical(rgbn), 5.0, 16),
            _modality("s2", "worldstrat_like", _optical(s2_12), 10.0, 8, temporal=True, t_max=3),
        ),
        gsd_min=5.0, gsd_max=20.0, gsd_interval=1.0, batch_size=2,
    )
    mmearth = DatasetSpec(
        name="mmearth_like",
        modalities=(
            _modality("s2", "mmearth_like", _optical(S2_WAVELENGTHS_NM), 10.0, 20),
            _modality("s1", "mmearth_like", _categorical("radar", CATEGORY_IDS[:8]), 10.0, 20),
            _modality("elevation", "mmearth_like", _categorical("elevation", ("DSM", "slope")), 20.0, 10),
        ),
        gsd_min=20.0, gsd_max=100.0, gsd_interval=10.0, batch_size=4,
    )
    return [flair, worldstrat, mmearth]


# -- configuration file -------------------------------------------------------------


def _channel_to_dict(c: ChannelDescriptor) -> dict:
    if c.kind == "optical":
        return {"kind": c.kind, "wavelength_nm": float(c.wavelength_nm)}
    return {"kind": c.kind, "category_id": c.category_id}


def _channel_from_dict(d: dict) -> ChannelDescriptor:
    return ChannelDescriptor(d["kind"], d.get("wavelength_nm"), d.get("category_id"))


def save_corpus_config(path, corpus):
    doc = {
        "datasets": [
            {
                "name": ds.name,
                "gsd_range": {
                    "min": float(ds.gsd_min),
                    "max": float(ds.gsd_max),
                    "interval": float(ds.gsd_interval),
                },
                "batch_size": int(ds.batch_size),
                "modality_probs": [float(p) for p in ds.modality_probs] if ds.modality_probs else None,
                "modalities": [
                    {
                        "name": m.name,
                        "gsd": float(m.gsd),
                        "tile": int(m.tile),
                        "temporal": bool(m.temporal),
                        "t_max": int(m.t_max),
                        "channels": [_channel_to_dict(c) for c in m.channels],
                        "normalization": {
                            "mean": [float(v) for v in m.channel_means],
                            "std": [float(v) for v in m.channel_stds],
                        },
                    }
                    for m in ds.modalities
                ],
            }
            for ds in corpus
        ]
    }
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def load_corpus_config(path) -> list[DatasetSpec]:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "datasets" not in doc:
        raise ConfigurationError(f"{path}: expected a mapping with a 'datasets' list")
    corpus = []
    for ds in doc["datasets"]:
        modalities = tuple(
            ModalitySpec(
                name=m["name"],
                channels=tuple(_channel_from_dict(c) for c in m["channels"]),
                gsd=float(m["gsd"]),
                tile=int(m["tile"]),
                temporal=bool(m.get("temporal", False)),
                t_max=int(m.get("t_max", 1)),
                channel_means=tuple(m["normalization"]["mean"]),
                channel_stds=tuple(m["normalization"]["std"]),
            )
            for m in ds["modalities"]
        )
        probs = ds.get("modality_probs")
        corpus.append(
            DatasetSpec(
                name=ds["name"],
                modalities=modalities,
                gsd_min=float(ds["gsd_range"]["min"]),
                gsd_max=float(ds["gsd_range"]["max"]),
                gsd_interval=float(ds["gsd_range"]["interval"]),
                batch_size=int(ds.get("batch_size", 1)),
                modality_probs=tuple(probs) if probs else None,
            )
        )
    return corpus
