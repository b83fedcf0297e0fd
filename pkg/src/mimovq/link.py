"""AWGN feedback link for latent grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .autodiff import Tensor, add
from .errors import ConfigError


@dataclass(frozen=True)
class LinkConfig:
    """``snr_db=None`` switches the link off (exact identity)."""

    snr_db: float | None = None
    seed: int = 0

    @property
    def is_off(self) -> bool:
        return self.snr_db is None

    @classmethod
    def parse(cls, token, seed: int = 0) -> "LinkConfig":
        text = str(token).strip().lower()
        if text in ("off", "inf", "none"):
            return cls(None, seed)
        try:
            return cls(float(text), seed)
        except ValueError:
            raise ConfigError(f"bad SNR value {token!r}; use a number in dB or 'off'") from None

    @property
    def label(self) -> str:
        return "off" if self.is_off else format_snr(self.snr_db)


def format_snr(snr_db: float) -> str:
    return f"{snr_db:g}"


def noise_seed(seed: int, snr_db: float, sample_id: int) -> int:
    return rng.derive_seed(seed, "link", format_snr(snr_db), sample_id)


def awgn(z: Tensor, link: LinkConfig | None, sample_ids=None) -> Tensor:
    """Add white Gaussian noise at ``link.snr_db`` relative to each sample's
    latent power ``mean(z**2)``.

    ``z`` is one grid ``[d, gh, gw]`` or a batch ``[N, d, gh, gw]``.  Sample
    ``j`` of the batch draws from the stream keyed by
    ``(link.seed, snr, sample_ids[j])``; ``sample_ids`` defaults to
    ``0..N-1``.  With the link off the input tensor is returned unchanged.
    """
    if link is None or link.is_off:
        return z
    batched = z.ndim == 4
    data = z.data if batched else z.data[None]
    n = data.shape[0]
    ids = range(n) if sample_ids is None else list(sample_ids)
    if len(ids) != n:
        raise ValueError(f"{len(ids)} sample ids for a batch of {n}")
    noise = np.empty_like(data)
    ratio = 10.0 ** (-link.snr_db / 10.0)
    for j, sid in enumerate(ids):
        power = float(np.mean(data[j] ** 2))
        std = np.sqrt(power * ratio)
        noise[j] = std * rng.gaussian(noise_seed(link.seed, link.snr_db, sid), data[j].shape)
    return add(z, Tensor(noise if batched else noise[0]))


def transmit(model, z_e: Tensor, link: LinkConfig | None, sample_ids=None) -> Tensor:
    """Latent as seen by the decoder.

    AE and VAE receive the noisy latent itself; the VQ-VAE receiver snaps the
    noisy latent back onto its codebook.
    """
    from .models import vq_quantize

    noisy = awgn(z_e, link, sample_ids)
    if model.kind == "VQVAE":
        return vq_quantize(noisy, model.codebook)[0]
    return noisy
