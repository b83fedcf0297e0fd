"""Mini-batch Adam training for the three predictors."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import rng
from .autodiff import AdamState, Tape, Tensor, adam_step, backward
from .channel import Dataset, split_arrays
from .errors import ConfigError, NumericError, TrainingError
from .link import LinkConfig
from .losses import LossBreakdown, loss_ae, loss_vae, loss_vqvae
from .models import ArchitectureSpec, ModelBundle, build_model, forward

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 30
    kl_weight: float = 2.5e-5
    commit_beta: float = 0.25
    seed: int = 0
    # (low, high) SNR range in dB for training-time link noise; None trains clean.
    noise_aware: tuple[float, float] | None = None

    def validate(self) -> None:
        if self.kl_weight < 0 or self.commit_beta < 0:
            raise ConfigError("kl_weight and commit_beta must be non-negative")
        if self.batch_size < 1 or self.epochs < 0 or self.lr <= 0:
            raise ConfigError("batch_size >= 1, epochs >= 0 and lr > 0 required")
        if self.noise_aware is not None and self.noise_aware[0] > self.noise_aware[1]:
            raise ConfigError("noise_aware range must be (low, high)")


def compute_loss(model: ModelBundle, target: Tensor, prediction: Tensor, aux: dict,
                 config: TrainConfig) -> LossBreakdown:
    if model.kind == "AE":
        return loss_ae(target, prediction, aux)
    if model.kind == "VAE":
        return loss_vae(target, prediction, aux, config.kl_weight)
    return loss_vqvae(target, prediction, aux, config.commit_beta)


def _batch_link(config: TrainConfig, epoch: int, step: int) -> LinkConfig | None:
    if config.noise_aware is None:
        return None
    low, high = config.noise_aware
    gen = rng.generator(rng.derive_seed(config.seed, "train-snr", epoch, step))
    return LinkConfig(float(rng.uniform(gen, 1, low, high)[0]),
                      rng.derive_seed(config.seed, "train-noise", epoch, step))


def train_step(model: ModelBundle, xs: np.ndarray, xr: np.ndarray, state: AdamState,
               config: TrainConfig, epoch: int = 0, step: int = 0, sample_ids=None) -> LossBreakdown:
    """One Adam update on a batch; returns the pre-update losses."""
    target = Tensor(xr)
    with Tape() as tape:
        pred, aux = forward(model, Tensor(xs), "train", link=_batch_link(config, epoch, step),
                            eps_seed=rng.derive_seed(config.seed, "eps", epoch, step),
                            sample_ids=sample_ids)
        parts = compute_loss(model, target, pred, aux, config)
    if not np.isfinite(parts.total):
        raise TrainingError(f"loss became non-finite in epoch {epoch}", epoch)
    model.zero_grad()
    backward(parts.tensor, tape)
    grads = {name: (p.grad if p.grad is not None else np.zeros_like(p.data))
             for name, p in model.params.items()}
    try:
        adam_step(model.params, grads, state)
    except NumericError as exc:
        raise TrainingError(f"epoch {epoch}: {exc}", epoch) from exc
    model.zero_grad()
    parts.tensor = None
    return parts


def train(kind: str, dataset: Dataset, arch: ArchitectureSpec | None = None,
          config: TrainConfig = TrainConfig(), model: ModelBundle | None = None,
          on_epoch=None) -> tuple[ModelBundle, list[LossBreakdown]]:
    """Train a fresh model (or continue ``model``) on ``dataset``.

    Shuffling, VAE sampling and optional training noise are all keyed by
    ``config.seed``, so the loss trace is a pure function of the inputs.
    The trace holds one sample-weighted mean breakdown per epoch.
    """
    config.validate()
    if len(dataset) == 0:
        raise ConfigError("empty dataset")
    xs, xr = split_arrays(dataset.h, dataset.config)
    if model is None:
        if arch is None:
            _, c_in, f, t = xs.shape
            arch = ArchitectureSpec.for_grid(c_in, xr.shape[1], f, t)
        model = build_model(kind, arch, config.seed)
    state = AdamState(lr=config.lr)
    n = xs.shape[0]
    trace: list[LossBreakdown] = []
    for epoch in range(config.epochs):
        order = rng.generator(rng.derive_seed(config.seed, "shuffle", epoch)).permutation(n)
        sums = np.zeros(5)
        for step, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            parts = train_step(model, xs[idx], xr[idx], state, config, epoch, step, sample_ids=idx)
            sums += len(idx) * np.array(parts.as_row())
        mean_parts = LossBreakdown(*(sums / n))
        if not np.all(np.isfinite(sums)):
            raise TrainingError(f"loss became non-finite in epoch {epoch}", epoch)
        trace.append(mean_parts)
        log.info("%s epoch %d: total=%.6g mse=%.6g", model.kind, epoch, mean_parts.total, mean_parts.mse)
        if on_epoch is not None:
            on_epoch(epoch, mean_parts)
    model.meta.update({"train_seed": config.seed, "epochs": config.epochs, "profile": dataset.profile})
    return model, trace
