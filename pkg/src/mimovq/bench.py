"""Latency, training-time and memory measurements for trained predictors."""

from __future__ import annotations

import time

import numpy as np

from .autodiff import Tensor, track_memory
from .channel import ChannelConfig, generate_dataset, split_arrays
from .evaluate import BenchmarkRow
from .models import ModelBundle, build_model, forward
from .train import TrainConfig, train


def inference_latencies(model: ModelBundle, x: np.ndarray, n_warmup: int, n_iters: int) -> np.ndarray:
    """Seconds per single-sample eval forward, warmup runs discarded."""
    sample = Tensor(x[:1])
    for _ in range(n_warmup):
        forward(model, sample, "eval")
    times = np.empty(n_iters)
    for i in range(n_iters):
        start = time.perf_counter()
        forward(model, sample, "eval")
        times[i] = time.perf_counter() - start
    return times


def peak_inference_bytes(model: ModelBundle, x: np.ndarray) -> int:
    """High-water mark of live tensor bytes during one eval forward, parameters included."""
    with track_memory(baseline=model.param_bytes()) as tracker:
        out, aux = forward(model, Tensor(x[:1]), "eval")
        del out, aux
    return int(tracker.peak)


def _geometry(model: ModelBundle) -> ChannelConfig:
    arch = model.arch
    k = (arch.in_channels + arch.out_channels) // 2
    m_s = arch.in_channels // 2
    return ChannelConfig(num_rx_antennas=k, num_subcarriers=arch.height, num_symbols=arch.width,
                         observed=tuple(range(m_s)), predicted=tuple(range(m_s, k)))


def train_epoch_seconds(model: ModelBundle, n_samples: int = 256, seed: int = 0) -> float:
    """Wall time of one epoch on a synthetic CDL-C set of ``n_samples`` at the model geometry."""
    data = generate_dataset("CDL-C", _geometry(model), n_samples, seed)
    fresh = build_model(model.kind, model.arch, seed)
    start = time.perf_counter()
    train(model.kind, data, config=TrainConfig(epochs=1, seed=seed), model=fresh)
    return time.perf_counter() - start


def interleaved_latencies(models: list[ModelBundle], xs: list[np.ndarray],
                          n_warmup: int, n_iters: int) -> np.ndarray:
    """Per-model eval-forward seconds, shape ``(len(models), n_iters)``.

    Models take turns on every iteration so slow drift in machine speed lands
    on all of them alike.
    """
    samples = [Tensor(x[:1]) for x in xs]
    for _ in range(n_warmup):
        for m, s in zip(models, samples):
            forward(m, s, "eval")
    times = np.empty((len(models), n_iters))
    for i in range(n_iters):
        for j, (m, s) in enumerate(zip(models, samples)):
            start = time.perf_counter()
            forward(m, s, "eval")
            times[j, i] = time.perf_counter() - start
    return times


def benchmark_many(models: list[ModelBundle], n_warmup: int = 10, n_iters: int = 100,
                   train_samples: int = 256, seed: int = 0) -> list[BenchmarkRow]:
    xs = [split_arrays(generate_dataset("CDL-C", _geometry(m), 1, seed).h, _geometry(m))[0]
          for m in models]
    latencies = interleaved_latencies(models, xs, n_warmup, n_iters)
    rows = []
    for m, x, t in zip(models, xs, latencies):
        epoch_s = train_epoch_seconds(m, train_samples, seed) if train_samples > 0 else float("nan")
        rows.append(BenchmarkRow(m.kind, float(np.median(t) * 1e3), epoch_s,
                                 m.param_count(), peak_inference_bytes(m, x)))
    return rows


def benchmark(model: ModelBundle, n_warmup: int = 10, n_iters: int = 100,
              train_samples: int = 256, seed: int = 0) -> BenchmarkRow:
    return benchmark_many([model], n_warmup, n_iters, train_samples, seed)[0]
