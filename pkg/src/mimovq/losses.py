"""Reconstruction metrics and the three training objectives.

Reductions:

* ``mse`` averages over every element.
* ``kl_gaussian`` sums over latent elements and averages over the batch.
* The VQ and commitment terms average the per-position squared distance
  ``|z_e - e|^2`` over all latent positions in the batch.

``LossBreakdown.kl`` is stored unweighted, so for the VAE
``total = mse + kl_weight * kl``; ``commit`` already includes ``beta``, so
for the VQ-VAE ``total = mse + vq + commit``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    Tensor, add, expm1, mean, mul_scalar, square, stop_gradient, sub, sum as tsum,
)
from .errors import ContractError, DegenerateInputError, ShapeError

NMSE_DB_FLOOR = -100.0


@dataclass
class LossBreakdown:
    total: float
    mse: float
    kl: float = 0.0
    vq: float = 0.0
    commit: float = 0.0
    tensor: Tensor | None = field(default=None, repr=False, compare=False)

    def as_row(self) -> tuple[float, ...]:
        return (self.total, self.mse, self.kl, self.vq, self.commit)


def mse(x: Tensor, x_hat: Tensor) -> Tensor:
    if x.shape != x_hat.shape:
        raise ShapeError(f"mse: shape mismatch {x.shape} vs {x_hat.shape}")
    return mean(square(sub(x_hat, x)))


def nmse(x, x_hat) -> float:
    """``MSE(x, x_hat) / Var(x)`` with the population variance of ``x``."""
    x = np.asarray(getattr(x, "data", x), dtype=np.float64)
    x_hat = np.asarray(getattr(x_hat, "data", x_hat), dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"nmse: shape mismatch {x.shape} vs {x_hat.shape}")
    var = float(np.var(x))
    if var == 0.0:
        raise DegenerateInputError("ground truth has zero variance")
    return float(np.mean((x - x_hat) ** 2)) / var


def to_db(ratio: float) -> float:
    """``10 log10(ratio)`` clamped at the -100 dB floor."""
    if ratio <= 0.0:
        return NMSE_DB_FLOOR
    return max(10.0 * np.log10(ratio), NMSE_DB_FLOOR)


def nmse_db(x, x_hat) -> float:
    return to_db(nmse(x, x_hat))


def kl_gaussian(mu: Tensor, logvar: Tensor) -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)).

    Written as ``mu^2 + (expm1(logvar) - logvar)`` per element, each part
    non-negative in floating point, so the result never dips below zero.
    """
    if mu.shape != logvar.shape:
        raise ShapeError(f"kl_gaussian: {mu.shape} vs {logvar.shape}")
    batch = mu.shape[0] if mu.ndim == 4 else 1
    per_element = add(square(mu), sub(expm1(logvar), logvar))
    return mul_scalar(tsum(per_element), 0.5 / batch)


def vq_terms(z_e_rows: Tensor, z_q_rows: Tensor, beta: float) -> tuple[Tensor, Tensor]:
    """Codebook term ``|sg[z_e] - e|^2`` and commitment term ``beta |z_e - sg[e]|^2``."""
    if z_e_rows.shape != z_q_rows.shape:
        raise ShapeError(f"vq_terms: {z_e_rows.shape} vs {z_q_rows.shape}")
    positions = z_e_rows.shape[0] if z_e_rows.ndim == 2 else 1
    vq = mul_scalar(tsum(square(sub(stop_gradient(z_e_rows), z_q_rows))), 1.0 / positions)
    commit = mul_scalar(tsum(square(sub(z_e_rows, stop_gradient(z_q_rows)))), beta / positions)
    return vq, commit


def _breakdown(total: Tensor, **parts: Tensor) -> LossBreakdown:
    values = {k: v.item() for k, v in parts.items()}
    return LossBreakdown(total=total.item(), tensor=total, **values)


def loss_ae(target: Tensor, prediction: Tensor, aux: dict | None = None) -> LossBreakdown:
    m = mse(target, prediction)
    return _breakdown(m, mse=m)


def loss_vae(target: Tensor, prediction: Tensor, aux: dict, kl_weight: float) -> LossBreakdown:
    if "mu" not in aux or "logvar" not in aux:
        raise ContractError("VAE loss needs 'mu' and 'logvar' auxiliaries")
    m = mse(target, prediction)
    kl = kl_gaussian(aux["mu"], aux["logvar"])
    return _breakdown(add(m, mul_scalar(kl, kl_weight)), mse=m, kl=kl)


def loss_vqvae(target: Tensor, prediction: Tensor, aux: dict, beta: float) -> LossBreakdown:
    if "z_e_rows" not in aux or "z_q_rows" not in aux:
        raise ContractError("VQ-VAE loss needs 'z_e_rows' and 'z_q_rows' auxiliaries")
    m = mse(target, prediction)
    vq, commit = vq_terms(aux["z_e_rows"], aux["z_q_rows"], beta)
    return _breakdown(add(add(m, vq), commit), mse=m, vq=vq, commit=commit)
