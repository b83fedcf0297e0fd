"""AE, VAE and VQ-VAE predictors on a shared convolutional trunk.

All three map the observed block ``H_s`` ``[2 m_s, F, T]`` to a latent grid
``[d, F/4, T/4]`` of ``d``-dimensional vectors and decode that grid to the
predicted block ``H_r`` ``[2 m_r, F, T]``.  They differ only in the latent
mechanism: a plain vector (AE), a Gaussian posterior with 1x1-conv mean and
log-variance heads (VAE), or nearest-codeword quantization with a
straight-through gradient (VQ-VAE).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from . import rng
from .autodiff import (
    Tensor, add, conv2d, conv_transpose2d, exp, expand_bias, mul, mul_scalar, no_tape,
    permute, relu, reshape, straight_through, take_rows,
)
from .errors import ConfigError, FormatError, ShapeError

KINDS = ("AE", "VAE", "VQVAE")
Kind = Literal["AE", "VAE", "VQVAE"]


@dataclass(frozen=True)
class LayerSpec:
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0


def _default_encoder():
    return (LayerSpec(32, 3, 2, 1), LayerSpec(64, 3, 2, 1), LayerSpec(64, 1, 1, 0))


def _default_decoder():
    return (LayerSpec(64, 1, 1, 0), LayerSpec(32, 2, 2, 0), LayerSpec(4, 2, 2, 0))


@dataclass(frozen=True)
class ArchitectureSpec:
    """Layer lists plus the input geometry they were sized for.

    Encoder layers are ``conv2d``; decoder layers are ``conv_transpose2d``.
    ReLU follows every layer except the last of each stack.
    """

    in_channels: int = 4
    height: int = 64
    width: int = 16
    encoder: tuple[LayerSpec, ...] = field(default_factory=_default_encoder)
    decoder: tuple[LayerSpec, ...] = field(default_factory=_default_decoder)
    codebook_size: int = 512

    def __post_init__(self):
        object.__setattr__(self, "encoder", tuple(LayerSpec(**l) if isinstance(l, dict) else l
                                                  for l in self.encoder))
        object.__setattr__(self, "decoder", tuple(LayerSpec(**l) if isinstance(l, dict) else l
                                                  for l in self.decoder))

    @property
    def latent_dim(self) -> int:
        return self.encoder[-1].out_channels

    @property
    def out_channels(self) -> int:
        return self.decoder[-1].out_channels

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.in_channels, self.height, self.width)

    def latent_shape(self) -> tuple[int, int, int]:
        h, w = self.height, self.width
        for layer in self.encoder:
            h = (h + 2 * layer.padding - layer.kernel) // layer.stride + 1
            w = (w + 2 * layer.padding - layer.kernel) // layer.stride + 1
            if h < 1 or w < 1:
                raise ShapeError(f"encoder collapses the input to {h}x{w}")
        return (self.latent_dim, h, w)

    def output_shape(self) -> tuple[int, int, int]:
        _, h, w = self.latent_shape()
        for layer in self.decoder:
            h = (h - 1) * layer.stride - 2 * layer.padding + layer.kernel
            w = (w - 1) * layer.stride - 2 * layer.padding + layer.kernel
            if h < 1 or w < 1:
                raise ShapeError(f"decoder collapses the latent to {h}x{w}")
        return (self.out_channels, h, w)

    def validate(self) -> None:
        if not self.encoder or not self.decoder:
            raise ConfigError("encoder and decoder need at least one layer each")
        for layer in self.encoder + self.decoder:
            if layer.out_channels < 1 or layer.kernel < 1 or layer.stride < 1 or layer.padding < 0:
                raise ConfigError(f"invalid layer {layer}")
        out = self.output_shape()
        if out[1:] != (self.height, self.width):
            raise ShapeError(f"decoder produces {out[1:]}, expected {(self.height, self.width)}")
        if self.codebook_size < 1:
            raise ConfigError("codebook needs at least one entry")

    @classmethod
    def for_grid(cls, in_channels: int, out_channels: int, height: int, width: int,
                 **overrides) -> "ArchitectureSpec":
        """Default trunk resized to a channel grid."""
        dec = list(_default_decoder())
        dec[-1] = LayerSpec(out_channels, 2, 2, 0)
        spec = cls(in_channels=in_channels, height=height, width=width, decoder=tuple(dec), **overrides)
        spec.validate()
        return spec

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureSpec":
        d = dict(d)
        d["encoder"] = tuple(LayerSpec(**l) for l in d["encoder"])
        d["decoder"] = tuple(LayerSpec(**l) for l in d["decoder"])
        return cls(**d)


@dataclass
class ModelBundle:
    kind: Kind
    arch: ArchitectureSpec
    params: dict[str, Tensor]
    meta: dict = field(default_factory=dict)

    @property
    def codebook(self) -> Tensor:
        return self.params["codebook"]

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def param_bytes(self) -> int:
        return sum(p.data.nbytes for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def param_count(model: ModelBundle) -> int:
    return model.param_count()


# Variance gain of the output layer; a near-zero start keeps early updates
# from fighting a random output map.
_OUTPUT_GAIN = 0.01


def _he(seed: int, name: str, shape, fan_in: float, gain: float = 2.0) -> Tensor:
    data = rng.gaussian(rng.derive_seed(seed, "init", name), shape, 0.0, math.sqrt(gain / fan_in))
    return Tensor(data, requires_grad=True, name=name)


def _zeros(name: str, n: int) -> Tensor:
    return Tensor(np.zeros(n), requires_grad=True, name=name)


def init_codebook(seed: int, k: int, d: int) -> np.ndarray:
    """Uniform(-1/k, 1/k) entries; rows must be pairwise distinct."""
    book = rng.uniform(rng.generator(rng.derive_seed(seed, "init", "codebook")), (k, d), -1.0 / k, 1.0 / k)
    if len(np.unique(book, axis=0)) != k:
        raise ConfigError("codebook initialization produced duplicate rows")
    return book


def build_model(kind: str, arch: ArchitectureSpec | None = None, seed: int = 0) -> ModelBundle:
    """Fresh parameters: He-normal weights, zero biases."""
    kind = kind.upper()
    if kind not in KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    arch = arch or ArchitectureSpec()
    arch.validate()
    params: dict[str, Tensor] = {}
    c = arch.in_channels
    last = len(arch.encoder) - 1
    for i, layer in enumerate(arch.encoder):
        fan_in = c * layer.kernel ** 2
        params[f"enc.{i}.weight"] = _he(seed, f"enc.{i}.weight", (layer.out_channels, c, layer.kernel, layer.kernel),
                                        fan_in, 1.0 if i == last else 2.0)
        params[f"enc.{i}.bias"] = _zeros(f"enc.{i}.bias", layer.out_channels)
        c = layer.out_channels
    d = arch.latent_dim
    if kind == "VAE":
        params["vae.mu.weight"] = _he(seed, "vae.mu.weight", (d, d, 1, 1), d, 1.0)
        params["vae.mu.bias"] = _zeros("vae.mu.bias", d)
        params["vae.logvar.weight"] = _he(seed, "vae.logvar.weight", (d, d, 1, 1), d, 0.01)
        params["vae.logvar.bias"] = _zeros("vae.logvar.bias", d)
    last = len(arch.decoder) - 1
    for i, layer in enumerate(arch.decoder):
        fan_in = c * layer.kernel ** 2 / layer.stride ** 2
        params[f"dec.{i}.weight"] = _he(seed, f"dec.{i}.weight", (c, layer.out_channels, layer.kernel, layer.kernel),
                                        fan_in, _OUTPUT_GAIN if i == last else 2.0)
        params[f"dec.{i}.bias"] = _zeros(f"dec.{i}.bias", layer.out_channels)
        c = layer.out_channels
    if kind == "VQVAE":
        params["codebook"] = Tensor(init_codebook(seed, arch.codebook_size, d), requires_grad=True, name="codebook")
    return ModelBundle(kind=kind, arch=arch, params=params, meta={"seed": seed})


# -- forward pieces -------------------------------------------------------------

def _conv_layer(model: ModelBundle, prefix: str, x: Tensor, layer: LayerSpec, transpose: bool) -> Tensor:
    w = model.params[f"{prefix}.weight"]
    op = conv_transpose2d if transpose else conv2d
    y = op(x, w, layer.stride, layer.padding)
    return add(y, expand_bias(model.params[f"{prefix}.bias"], y.shape))


def _check_input(x: Tensor, expected: tuple[int, ...], what: str) -> None:
    got = x.shape[1:] if x.ndim == 4 else x.shape
    if x.ndim not in (3, 4) or tuple(got) != tuple(expected):
        raise ShapeError(f"{what}: expected [N,]{list(expected)}, got {list(x.shape)}")


def encode(model: ModelBundle, h_s: Tensor):
    """Latent grid ``z_e``; for the VAE a pair ``(mu, logvar)``."""
    _check_input(h_s, model.arch.input_shape, "encode")
    x = h_s
    last = len(model.arch.encoder) - 1
    for i, layer in enumerate(model.arch.encoder):
        x = _conv_layer(model, f"enc.{i}", x, layer, transpose=False)
        if i != last:
            x = relu(x)
    if model.kind == "VAE":
        mu = _conv_layer(model, "vae.mu", x, LayerSpec(model.arch.latent_dim, 1), transpose=False)
        logvar = _conv_layer(model, "vae.logvar", x, LayerSpec(model.arch.latent_dim, 1), transpose=False)
        return mu, logvar
    return x


def decode(model: ModelBundle, z: Tensor) -> Tensor:
    _check_input(z, model.arch.latent_shape(), "decode")
    x = z
    last = len(model.arch.decoder) - 1
    for i, layer in enumerate(model.arch.decoder):
        x = _conv_layer(model, f"dec.{i}", x, layer, transpose=True)
        if i != last:
            x = relu(x)
    return x


def reparameterize(mu: Tensor, logvar: Tensor, eps_seed: int | None = None,
                   eps: np.ndarray | None = None) -> Tensor:
    """``mu + exp(logvar / 2) * eps`` with ``eps`` standard normal (constant)."""
    if mu.shape != logvar.shape:
        raise ShapeError(f"mu {mu.shape} and logvar {logvar.shape} differ")
    if eps is None:
        if eps_seed is None:
            raise ValueError("need eps_seed or eps")
        eps = rng.gaussian(eps_seed, mu.shape)
    return add(mu, mul(exp(mul_scalar(logvar, 0.5)), Tensor(eps)))


def to_positions(z: Tensor) -> Tensor:
    """Latent grid ``[N, d, gh, gw]`` (or ``[d, gh, gw]``) -> rows ``[N*gh*gw, d]``."""
    if z.ndim == 3:
        d = z.shape[0]
        return reshape(permute(z, (1, 2, 0)), (z.size // d, d))
    n, d, gh, gw = z.shape
    return reshape(permute(z, (0, 2, 3, 1)), (n * gh * gw, d))


def from_positions(rows: Tensor, grid_shape: tuple[int, ...]) -> Tensor:
    """Inverse of :func:`to_positions` for a grid of ``grid_shape``."""
    if len(grid_shape) == 3:
        d, gh, gw = grid_shape
        return permute(reshape(rows, (gh, gw, d)), (2, 0, 1))
    n, d, gh, gw = grid_shape
    return permute(reshape(rows, (n, gh, gw, d)), (0, 3, 1, 2))


def nearest_codewords(z: np.ndarray, book: np.ndarray) -> np.ndarray:
    """Index of the nearest codebook row for every row of ``z``.

    Squared distances come from the expanded form ``|z|^2 - 2 z.e + |e|^2``.
    Any row whose best candidates fall within the rounding bound of that form
    is re-scored exactly (elementwise squares summed with ``math.fsum``), and
    remaining ties go to the lowest index.
    """
    if book.shape[0] == 0:
        raise ConfigError("empty codebook")
    if z.shape[1] != book.shape[1]:
        raise ShapeError(f"latent dim {z.shape[1]} does not match codebook dim {book.shape[1]}")
    e2 = np.einsum("ij,ij->i", book, book)
    z2 = np.einsum("ij,ij->i", z, z)
    dist = z2[:, None] - 2.0 * (z @ book.T) + e2[None, :]
    idx = np.argmin(dist, axis=1)
    best = dist[np.arange(len(z)), idx]
    tol = 1e-11 * (z2 + e2.max()) + 1e-300
    close = dist <= (best + tol)[:, None]
    for r in np.nonzero(close.sum(axis=1) > 1)[0]:
        cands = np.nonzero(close[r])[0]
        exact = [math.fsum((z[r] - book[c]) ** 2) for c in cands]
        idx[r] = cands[int(np.argmin(exact))]
    return idx


def vq_quantize(z: Tensor, codebook) -> tuple[Tensor, np.ndarray]:
    """Snap every latent vector to its nearest codeword.

    Returns the quantized grid (exact copies of codebook rows, not recorded
    on any tape) and the grid of codeword indices.
    """
    book = codebook.data if isinstance(codebook, Tensor) else np.asarray(codebook, dtype=np.float64)
    with no_tape():
        rows = to_positions(z)
    idx = nearest_codewords(rows.data, book)
    with no_tape():
        zq = from_positions(Tensor(book[idx]), z.shape)
    index_shape = (z.shape[0],) + z.shape[2:] if z.ndim == 4 else z.shape[1:]
    return zq, idx.reshape(index_shape)


def forward(model: ModelBundle, h_s: Tensor, mode: str = "eval", link=None,
            eps_seed: int | None = None, sample_ids=None):
    """Predict ``H_r`` from ``H_s``.

    ``mode="train"`` samples the VAE posterior and routes VQ-VAE gradients
    through the straight-through estimator; ``mode="eval"`` uses the VAE mean
    and the plain quantized latent.  ``link`` (a :class:`~mimovq.link.LinkConfig`)
    perturbs the transmitted latent.  Returns ``(prediction, aux)``.
    """
    from . import link as link_mod

    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    aux: dict = {}
    active = link is not None and not link.is_off
    if model.kind == "AE":
        z = encode(model, h_s)
        aux["z_e"] = z
        if active:
            z = link_mod.transmit(model, z, link, sample_ids)
        return decode(model, z), aux

    if model.kind == "VAE":
        mu, logvar = encode(model, h_s)
        aux["mu"], aux["logvar"] = mu, logvar
        z = reparameterize(mu, logvar, eps_seed) if mode == "train" else mu
        if active:
            z = link_mod.transmit(model, z, link, sample_ids)
        return decode(model, z), aux

    z_e = encode(model, h_s)
    z_in = link_mod.awgn(z_e, link, sample_ids) if active else z_e
    rows = to_positions(z_in)
    idx = nearest_codewords(rows.data, model.codebook.data)
    aux["indices"] = idx
    if mode == "train":
        zq_rows = take_rows(model.codebook, idx)
        aux["z_e_rows"] = to_positions(z_e) if active else rows
        aux["z_q_rows"] = zq_rows
        z = from_positions(straight_through(rows, zq_rows), z_e.shape)
    else:
        with no_tape():
            z = from_positions(Tensor(model.codebook.data[idx]), z_e.shape)
        aux["z_e_rows"] = rows
    aux["z_e"] = z_e
    return decode(model, z), aux


# -- MMDL checkpoints -------------------------------------------------------------

MODEL_MAGIC = b"MMDL"
MODEL_VERSION = 1


def save_model(model: ModelBundle, path) -> None:
    def blob(s: str) -> bytes:
        b = s.encode("utf-8")
        return struct.pack("<I", len(b)) + b

    parts = [MODEL_MAGIC, struct.pack("<HB", MODEL_VERSION, KINDS.index(model.kind)),
             blob(json.dumps(model.arch.to_dict(), sort_keys=True)),
             blob(json.dumps(model.meta, sort_keys=True)),
             struct.pack("<I", len(model.params))]
    for name, p in model.params.items():
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack(f"<B{p.ndim}I", p.ndim, *p.shape))
        parts.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, raw: bytes):
        self.raw, self.pos = raw, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.raw):
            raise FormatError(f"{what}: file truncated at byte {self.pos}")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        s = struct.Struct("<" + fmt)
        return s.unpack(self.take(s.size, what))


def load_model(path, expected_kind: str | None = None) -> ModelBundle:
    r = _Reader(Path(path).read_bytes())
    magic = r.take(4, "magic")
    if magic != MODEL_MAGIC:
        raise FormatError(f"magic: expected {MODEL_MAGIC!r}, found {magic!r}")
    version, kind_id = r.unpack("HB", "version")
    if version != MODEL_VERSION:
        raise FormatError(f"version: expected {MODEL_VERSION}, found {version}")
    if kind_id >= len(KINDS):
        raise FormatError(f"kind: unknown id {kind_id}")
    kind = KINDS[kind_id]
    if expected_kind is not None and kind != expected_kind.upper():
        raise FormatError(f"kind: expected {expected_kind.upper()}, found {kind}")
    try:
        arch = ArchitectureSpec.from_dict(json.loads(r.take(r.unpack("I", "arch")[0], "arch")))
        meta = json.loads(r.take(r.unpack("I", "meta")[0], "meta"))
    except (ValueError, TypeError, KeyError) as exc:
        raise FormatError(f"arch: cannot parse layer description ({exc})") from exc
    (count,) = r.unpack("I", "param count")
    params = {}
    for _ in range(count):
        name = r.take(r.unpack("H", "name")[0], "name").decode("utf-8")
        (ndim,) = r.unpack("B", f"{name} ndim")
        shape = r.unpack(f"{ndim}I", f"{name} shape")
        n = int(np.prod(shape))
        data = np.frombuffer(r.take(8 * n, f"{name} data"), dtype="<f8").astype(np.float64).reshape(shape)
        params[name] = Tensor(data, requires_grad=True, name=name)
    if r.pos != len(r.raw):
        raise FormatError(f"trailing bytes after parameter blobs ({len(r.raw) - r.pos})")
    reference = build_model(kind, arch, 0)
    for name, p in reference.params.items():
        if name not in params or params[name].shape != p.shape:
            raise FormatError(f"{name}: missing or mis-shaped parameter blob")
    return ModelBundle(kind=kind, arch=arch, params=params, meta=meta)
