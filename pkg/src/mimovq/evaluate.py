"""NMSE sweeps over link SNR and out-of-distribution profiles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .channel import ChannelConfig, Dataset, canonical_profile, generate_dataset, split_arrays
from .errors import ShapeError
from .link import LinkConfig
from .losses import nmse, to_db
from .models import ModelBundle, forward

METRIC_FIELDS = ("model", "profile", "snr_db", "nmse_db", "n_samples")
BENCH_FIELDS = ("model", "inference_ms_median", "train_s_per_epoch", "param_count", "peak_mem_bytes")


@dataclass
class MetricRow:
    model: str
    profile: str
    snr_db: str  # dB value rendered with %g, or "off"
    nmse_db: float
    n_samples: int

    def cells(self) -> list[str]:
        return [self.model, self.profile, self.snr_db, f"{self.nmse_db:.6f}", str(self.n_samples)]


@dataclass
class BenchmarkRow:
    model: str
    inference_ms_median: float
    train_s_per_epoch: float
    param_count: int
    peak_mem_bytes: int

    def cells(self) -> list[str]:
        return [self.model, f"{self.inference_ms_median:.4f}", f"{self.train_s_per_epoch:.4f}",
                str(self.param_count), str(self.peak_mem_bytes)]


@dataclass
class MetricsReport:
    rows: list[MetricRow] = field(default_factory=list)
    benchmarks: list[BenchmarkRow] = field(default_factory=list)

    def get(self, model: str | None = None, profile: str | None = None, snr: str | None = None) -> list[MetricRow]:
        return [r for r in self.rows if (model is None or r.model == model)
                and (profile is None or r.profile == profile) and (snr is None or r.snr_db == snr)]

    def nmse_at(self, snr: str, model: str | None = None, profile: str | None = None) -> float:
        rows = self.get(model, profile, snr)
        if len(rows) != 1:
            raise KeyError(f"expected one row for snr={snr} model={model} profile={profile}, found {len(rows)}")
        return rows[0].nmse_db

    def extend(self, other: "MetricsReport") -> None:
        self.rows.extend(other.rows)
        self.benchmarks.extend(other.benchmarks)


def check_compatible(model: ModelBundle, dataset: Dataset) -> None:
    arch = model.arch
    cfg = dataset.config
    want = (arch.in_channels, arch.height, arch.width)
    got = (2 * cfg.m_s, cfg.num_subcarriers, cfg.num_symbols)
    if want != got or arch.out_channels != 2 * cfg.m_r:
        raise ShapeError(f"model expects input {want} -> {arch.out_channels} channels, "
                         f"dataset provides {got} -> {2 * cfg.m_r}")


def predict(model: ModelBundle, xs: np.ndarray, link: LinkConfig | None = None,
            batch_size: int = 64) -> np.ndarray:
    """Eval-mode predictions; sample ``i`` uses link noise stream ``i``."""
    out = []
    for start in range(0, xs.shape[0], batch_size):
        ids = range(start, min(start + batch_size, xs.shape[0]))
        pred, _ = forward(model, Tensor(xs[start:start + batch_size]), "eval", link=link, sample_ids=ids)
        out.append(pred.data)
    return np.concatenate(out, axis=0)


def parse_snr_list(text) -> list[float | None]:
    if isinstance(text, str):
        tokens = [t for t in text.split(",") if t.strip()]
    else:
        tokens = list(text)
    return [None if t is None else LinkConfig.parse(t).snr_db for t in tokens]


def evaluate_sweep(model: ModelBundle, dataset: Dataset, snr_list, seed: int = 0,
                   profile: str | None = None) -> MetricsReport:
    """One NMSE row per SNR point, aggregated over all test elements."""
    check_compatible(model, dataset)
    xs, xr = split_arrays(dataset.h, dataset.config)
    report = MetricsReport()
    for snr in snr_list:
        link = LinkConfig(snr, seed)
        pred = predict(model, xs, link)
        report.rows.append(MetricRow(model.kind, profile or dataset.profile, link.label,
                                     to_db(nmse(xr, pred)), xs.shape[0]))
    return report


def evaluate_ood(model: ModelBundle, profiles=("CDL-A", "CDL-B", "CDL-D"),
                 config: ChannelConfig | None = None, n: int = 200, seed: int = 0,
                 snr_list=(30.0, None)) -> MetricsReport:
    """Fresh test sets per profile (``generate_dataset(profile, config, n, seed)``)."""
    config = config or ChannelConfig(num_subcarriers=model.arch.height, num_symbols=model.arch.width)
    report = MetricsReport()
    for name in profiles:
        data = generate_dataset(canonical_profile(name), config, n, seed)
        report.extend(evaluate_sweep(model, data, snr_list, seed))
    return report
