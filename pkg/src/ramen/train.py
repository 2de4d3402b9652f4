"""Pretraining loop: random multimodal draws, masked reconstruction loss,
AdamW with linear warmup and cosine decay, line-delimited metrics, periodic
checkpoints. Everything is deterministic given (config, seed)."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .config import preset
from .corpus import (
    DatasetSpec,
    build_inputs,
    desk_corpus,
    generate_sample,
    load_corpus_config,
    sample_iteration,
    sample_seed,
)
from .model import RamenModel
from .numerics import AdamW


def lr_at(step: int, total_steps: int, base_lr: float, warmup_steps: int) -> float:
    """Linear warmup from 0 to base_lr, then cosine decay to 0."""
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * step / warmup_steps
    span = max(1, total_steps - warmup_steps)
    progress = (step - warmup_steps) / span
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * min(1.0, progress)))


@dataclass
class RunConfig:
    out_dir: str
    corpus_path: str | None = None
    preset_name: str = "desk"
    epochs: int = 20
    steps_per_epoch: int = 100
    warmup_epochs: int = 4
    base_lr: float = 1.5e-4
    weight_decay: float = 0.05
    betas: tuple[float, float] = (0.9, 0.95)
    seed: int = 0
    checkpoint_every: int = 0  # 0 keeps only the final checkpoint
    overfit: bool = False
    total_steps_override: int | None = None
    warmup_steps_override: int | None = None

    def __post_init__(self):
        if self.epochs <= 0 or self.steps_per_epoch <= 0:
            raise ValueError("epochs and steps per epoch must be positive")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ValueError("warmup epochs must be nonnegative and below total epochs")

    @property
    def total_steps(self) -> int:
        return self.total_steps_override or self.epochs * self.steps_per_epoch

    @property
    def warmup_steps(self) -> int:
        if self.warmup_steps_override is not None:
            return self.warmup_steps_override
        return self.warmup_epochs * self.steps_per_epoch


class MetricsWriter:
    """Append-only line-delimited JSON records."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "a")

    def write(self, record: dict):
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()


def read_metrics(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _load_corpus(run: RunConfig) -> list[DatasetSpec]:
    if run.corpus_path is None:
        return desk_corpus()
    try:
        return load_corpus_config(run.corpus_path)
    except FileNotFoundError:
        raise FileNotFoundError(f"corpus config not readable: {run.corpus_path}") from None


def _fixed_overfit_batch(corpus, run: RunConfig):
    """One frozen batch spanning the first two datasets, all modalities, at a
    mid-grid target resolution, with frozen mask seeds."""
    batch = []
    for i, ds in enumerate(corpus[:2]):
        sample = generate_sample(ds, sample_seed(run.seed, i))
        grid = ds.gsd_grid
        gsd = float(grid[len(grid) // 2])
        names = tuple(m.name for m in ds.modalities)
        batch.append((ds, sample, names, gsd, [run.seed, 91, i]))
    return batch


def pretrain(run: RunConfig) -> dict:
    out_dir = Path(run.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics = MetricsWriter(out_dir / "metrics.jsonl")
    except OSError as err:
        raise OSError(f"cannot write to output directory {out_dir}: {err}") from err

    corpus = _load_corpus(run)
    cfg = preset(run.preset_name)
    model = RamenModel(cfg, seed=run.seed, dtype=np.float32)
    opt = AdamW(model.parameters(), lr=run.base_lr, betas=run.betas, weight_decay=run.weight_decay)
    by_name = {ds.name: ds for ds in corpus}
    iter_rng = np.random.default_rng([run.seed, 1])
    overfit_batch = _fixed_overfit_batch(corpus, run) if run.overfit else None
    total = run.total_steps
    warmup = run.warmup_steps
    sample_counter = 0
    losses = []
    t0 = time.time()

    for step in range(total):
        opt.zero_grad()
        if overfit_batch is not None:
            step_items = overfit_batch
            record_meta = {
                "dataset": "+".join(ds.name for ds, *_ in step_items),
                "modalities": sorted({n for _, _, names, _, _ in step_items for n in names}),
                "gsd_target": step_items[0][3],
            }
        else:
            draw = sample_iteration(corpus, iter_rng)
            ds = by_name[draw.dataset]
            step_items = []
            for j in range(ds.batch_size):
                sample = generate_sample(ds, sample_seed(run.seed, sample_counter))
                sample_counter += 1
                step_items.append((ds, sample, draw.modalities, draw.gsd_target, [run.seed, 2, step, j]))
            record_meta = {
                "dataset": draw.dataset,
                "modalities": list(draw.modalities),
                "gsd_target": draw.gsd_target,
            }

        total_loss = None
        n_tokens = 0
        for ds, sample, names, gsd_target, mask_seed in step_items:
            inputs = build_inputs(sample, ds, names)
            loss, info = model.loss_on(inputs, gsd_target, mask_seed)
            n_tokens = info["n_tokens"]
            total_loss = loss if total_loss is None else total_loss + loss
        step_loss = total_loss / float(len(step_items))
        step_loss.backward()
        if run.overfit:
            # constant rate after warmup: the frozen-batch run is a fitting
            # probe, not a schedule study
            lr = run.base_lr * min(1.0, step / warmup) if warmup else run.base_lr
        else:
            lr = lr_at(step, total, run.base_lr, warmup)
        opt.step(lr)

        loss_value = float(step_loss.data)
        losses.append(loss_value)
        metrics.write(
            {
                "step": step,
                **record_meta,
                "n_tokens": n_tokens,
                "loss": loss_value,
                "lr": lr,
            }
        )
        if run.checkpoint_every and (step + 1) % run.checkpoint_every == 0:
            save_checkpoint(out_dir / f"step-{step + 1:06d}.ckpt", model,
                            {"preset": run.preset_name, "step": step + 1})

    final_path = out_dir / "final.ckpt"
    save_checkpoint(final_path, model, {"preset": run.preset_name, "step": total})
    metrics.close()
    return {
        "losses": losses,
        "checkpoint": str(final_path),
        "metrics": str(out_dir / "metrics.jsonl"),
        "seconds": time.time() - t0,
    }
