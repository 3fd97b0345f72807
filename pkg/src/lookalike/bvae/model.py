"""Variational autoencoder for 16x256 snippets with analytic gradients.

Encoder: per stage a 3x3 convolution (ReLU) followed by (1,2) max pooling,
halving the frequency axis each time; one batch-norm layer sits before the
final conv stage. The flattened map feeds a dense chain ending in parallel
mu / logvar heads. The decoder mirrors the stack: dense chain back to the
map shape, then frequency-doubling transposed convolutions with batch norm
between stages and a sigmoid output so reconstructions stay inside (0,1).

The KL-divergence term of the loss is scaled by ``beta``; ``beta = 0``
collapses the model to a plain autoencoder on the same code path.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from ..errors import InvalidConfig, NumericalError, ShapeError
from ..spectrogram import SNIPPET_BINS, SNIPPET_ROWS, Snippet
from . import layers as L

DEFAULT_BETA = 2.0


@dataclass
class ModelConfig:
    latent_dim: int = 5
    conv_filters: tuple = (16, 32, 32, 32, 32)
    dense_sizes: tuple = (32, 16)
    beta: float = DEFAULT_BETA
    learning_rate: float = 1e-4
    batch_size: int = 16
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        self.conv_filters = tuple(int(c) for c in self.conv_filters)
        self.dense_sizes = tuple(int(s) for s in self.dense_sizes)
        if self.latent_dim < 1:
            raise InvalidConfig(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.beta < 0:
            raise InvalidConfig(f"beta must be >= 0, got {self.beta}")
        if any(c < 1 for c in self.conv_filters) or any(s < 1 for s in self.dense_sizes):
            raise InvalidConfig("all layer sizes must be >= 1")
        if not self.conv_filters or SNIPPET_BINS % (2 ** len(self.conv_filters)) != 0:
            raise InvalidConfig(
                f"{len(self.conv_filters)} conv stages do not evenly reduce {SNIPPET_BINS} bins"
            )

    @property
    def pooled_freq(self) -> int:
        return SNIPPET_BINS >> len(self.conv_filters)

    @property
    def flat_size(self) -> int:
        return SNIPPET_ROWS * self.pooled_freq * self.conv_filters[-1]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, blob: str) -> "ModelConfig":
        return cls(**json.loads(blob))


@dataclass
class ForwardResult:
    recon: np.ndarray
    mu: np.ndarray
    logvar: np.ndarray
    z: np.ndarray
    eps: np.ndarray | None
    caches: dict = field(repr=False, default_factory=dict)
    bn_updates: dict = field(repr=False, default_factory=dict)


def _expected_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    filters = cfg.conv_filters
    n_conv = len(filters)
    shapes: dict[str, tuple] = {}
    cin = 1
    for i, cout in enumerate(filters, 1):
        shapes[f"enc.conv{i}.w"] = (3, 3, cin, cout)
        shapes[f"enc.conv{i}.b"] = (cout,)
        cin = cout
    bn_c = filters[-2] if n_conv > 1 else 1
    for suffix in ("gamma", "beta", "rmean", "rvar"):
        shapes[f"enc.bn.{suffix}"] = (bn_c,)
    din = cfg.flat_size
    for j, size in enumerate(cfg.dense_sizes, 1):
        shapes[f"enc.fc{j}.w"] = (din, size)
        shapes[f"enc.fc{j}.b"] = (size,)
        din = size
    shapes["enc.mu.w"] = (din, cfg.latent_dim)
    shapes["enc.mu.b"] = (cfg.latent_dim,)
    shapes["enc.logvar.w"] = (din, cfg.latent_dim)
    shapes["enc.logvar.b"] = (cfg.latent_dim,)

    dec_sizes = list(reversed(cfg.dense_sizes)) + [cfg.flat_size]
    din = cfg.latent_dim
    for j, size in enumerate(dec_sizes, 1):
        shapes[f"dec.fc{j}.w"] = (din, size)
        shapes[f"dec.fc{j}.b"] = (size,)
        din = size
    chain = [filters[-1]] + list(reversed(filters[:-1])) + [1]
    for i in range(1, n_conv + 1):
        shapes[f"dec.conv{i}.w"] = (3, 3, chain[i - 1], chain[i])
        shapes[f"dec.conv{i}.b"] = (chain[i],)
        if i < n_conv:
            for suffix in ("gamma", "beta", "rmean", "rvar"):
                shapes[f"dec.bn{i}.{suffix}"] = (chain[i],)
    return shapes


def init_params(cfg: ModelConfig) -> dict[str, np.ndarray]:
    """He-uniform weights, zero biases, unit batch-norm gain."""
    rng = np.random.default_rng(cfg.seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in _expected_shapes(cfg).items():
        if name.endswith(".w"):
            fan_in = int(np.prod(shape[:-1]))
            limit = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-limit, limit, size=shape)
            if name == "enc.logvar.w":
                w *= 0.01  # keep initial log-variances near 0 so exp() stays tame
            params[name] = w.astype(np.float32)
        elif name.endswith((".gamma", ".rvar")):
            params[name] = np.ones(shape, dtype=np.float32)
        else:
            params[name] = np.zeros(shape, dtype=np.float32)
    return params


def trainable_names(params: dict[str, np.ndarray]) -> list[str]:
    return [k for k in params if not k.endswith((".rmean", ".rvar"))]


def _check_params(params: dict[str, np.ndarray], cfg: ModelConfig) -> None:
    for name, shape in _expected_shapes(cfg).items():
        got = params.get(name)
        if got is None:
            raise ShapeError(f"missing parameter tensor {name}")
        if got.shape != shape:
            raise ShapeError(f"{name}: expected shape {shape}, got {got.shape}")


def _as_batch(x) -> np.ndarray:
    if isinstance(x, Snippet):
        x = x.data
    elif isinstance(x, (list, tuple)) and x and isinstance(x[0], Snippet):
        x = np.stack([s.data for s in x])
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[None, :, :]
    if x.ndim != 3 or x.shape[1:] != (SNIPPET_ROWS, SNIPPET_BINS):
        raise ShapeError(f"expected (n, {SNIPPET_ROWS}, {SNIPPET_BINS}) input, got {x.shape}")
    return x


def reparameterize(mu, logvar, seed=None, eps=None, inference=False):
    """z = mu + exp(logvar/2) * eps with eps ~ N(0, I); inference uses eps = 0."""
    mu = np.asarray(mu)
    if inference:
        return mu.copy()
    if eps is None:
        eps = np.random.default_rng(seed).standard_normal(mu.shape)
    return mu + np.exp(np.asarray(logvar) / 2.0) * eps


def forward(x, params, cfg: ModelConfig, eps=None, train=False,
            encoder_only=False) -> ForwardResult:
    """Full pass: encode, sample (eps=None means z = mu), decode.

    Pure function: batch-norm running statistics are returned in
    ``bn_updates`` rather than written into ``params``. With
    ``encoder_only`` the decoder is skipped and ``recon`` is None.
    """
    _check_params(params, cfg)
    x = _as_batch(x).astype(params["enc.conv1.w"].dtype, copy=False)
    n_conv = len(cfg.conv_filters)
    bn_updates: dict[str, np.ndarray] = {}

    h = x[..., None]
    enc: list[tuple[str, Any]] = []
    for i in range(1, n_conv + 1):
        if i == n_conv:
            y, c, (rm, rv) = L.batchnorm_forward(
                h, params["enc.bn.gamma"], params["enc.bn.beta"],
                params["enc.bn.rmean"], params["enc.bn.rvar"], train)
            enc.append(("bn:enc.bn", c))
            if train:
                bn_updates["enc.bn.rmean"], bn_updates["enc.bn.rvar"] = rm, rv
            h = y
        h, c = L.conv2d_forward(h, params[f"enc.conv{i}.w"], params[f"enc.conv{i}.b"])
        enc.append((f"conv:enc.conv{i}", c))
        h, c = L.relu_forward(h)
        enc.append(("relu", c))
        h, c = L.maxpool_freq_forward(h)
        enc.append(("pool", c))
    map_shape = h.shape
    flat = h.reshape(h.shape[0], -1)
    for j in range(1, len(cfg.dense_sizes) + 1):
        flat, c = L.dense_forward(flat, params[f"enc.fc{j}.w"], params[f"enc.fc{j}.b"])
        enc.append((f"dense:enc.fc{j}", c))
        flat, c = L.relu_forward(flat)
        enc.append(("relu", c))
    mu, c_mu = L.dense_forward(flat, params["enc.mu.w"], params["enc.mu.b"])
    logvar, c_lv = L.dense_forward(flat, params["enc.logvar.w"], params["enc.logvar.b"])

    z = reparameterize(mu, logvar, eps=eps) if eps is not None else mu.copy()

    if encoder_only:
        caches = {"enc": enc, "c_mu": c_mu, "c_lv": c_lv, "map_shape": map_shape}
        return ForwardResult(recon=None, mu=mu, logvar=logvar, z=z, eps=eps,
                             caches=caches, bn_updates=bn_updates)

    dec: list[tuple[str, Any]] = []
    g = z
    n_dec_fc = len(cfg.dense_sizes) + 1
    for j in range(1, n_dec_fc + 1):
        g, c = L.dense_forward(g, params[f"dec.fc{j}.w"], params[f"dec.fc{j}.b"])
        dec.append((f"dense:dec.fc{j}", c))
        g, c = L.relu_forward(g)
        dec.append(("relu", c))
    h = g.reshape(map_shape)
    for i in range(1, n_conv + 1):
        if i > 1:
            name = f"dec.bn{i - 1}"
            y, c, (rm, rv) = L.batchnorm_forward(
                h, params[f"{name}.gamma"], params[f"{name}.beta"],
                params[f"{name}.rmean"], params[f"{name}.rvar"], train)
            dec.append((f"bn:{name}", c))
            if train:
                bn_updates[f"{name}.rmean"], bn_updates[f"{name}.rvar"] = rm, rv
            h = y
        h, c = L.upconv2d_forward(h, params[f"dec.conv{i}.w"], params[f"dec.conv{i}.b"])
        dec.append((f"conv:dec.conv{i}", c))
        if i < n_conv:
            h, c = L.relu_forward(h)
            dec.append(("relu", c))
        else:
            h, c = L.sigmoid_forward(h)
            dec.append(("sigmoid", c))
    recon = h[..., 0]

    caches = {"enc": enc, "dec": dec, "c_mu": c_mu, "c_lv": c_lv, "map_shape": map_shape}
    return ForwardResult(recon=recon, mu=mu, logvar=logvar, z=z, eps=eps,
                         caches=caches, bn_updates=bn_updates)


def loss(x, recon, mu, logvar, beta):
    """(total, reconstruction term, KL term), each averaged over the batch."""
    x = _as_batch(x)
    recon = np.asarray(recon)
    if recon.ndim == 2:
        recon = recon[None, :, :]
    for arr in (x, recon, mu, logvar):
        if not np.isfinite(arr).all():
            raise NumericalError("non-finite values in loss inputs")
    recon_term = float(np.mean((recon.astype(np.float64) - x) ** 2))
    mu64 = np.asarray(mu, dtype=np.float64)
    lv64 = np.asarray(logvar, dtype=np.float64)
    kl_per = -0.5 * np.sum(1.0 + lv64 - np.square(mu64) - np.exp(lv64), axis=-1)
    kl_term = float(np.mean(kl_per))
    return recon_term + beta * kl_term, recon_term, kl_term


def backward_from(res: ForwardResult, x, params, cfg: ModelConfig, beta,
                  skip_kl: bool = False) -> dict[str, np.ndarray]:
    """Gradients of the mean total loss for every trainable tensor."""
    x = _as_batch(x).astype(res.recon.dtype, copy=False)
    n = x.shape[0]
    grads: dict[str, np.ndarray] = {}

    d = 2.0 * (res.recon - x) / (n * SNIPPET_ROWS * SNIPPET_BINS)
    dh = d[..., None]
    for kind, cache in reversed(res.caches["dec"]):
        if kind == "sigmoid":
            dh = L.sigmoid_backward(dh, cache)
        elif kind == "relu":
            if dh.shape != cache.shape:
                dh = dh.reshape(cache.shape)  # conv stack -> dense chain boundary
            dh = L.relu_backward(dh, cache)
        elif kind.startswith("conv:"):
            dh, dw, db = L.upconv2d_backward(dh, cache)
            name = kind.split(":")[1]
            grads[f"{name}.w"], grads[f"{name}.b"] = dw, db
        elif kind.startswith("bn:"):
            dh, dg, dbeta_ = L.batchnorm_backward(dh, cache)
            name = kind.split(":")[1]
            grads[f"{name}.gamma"], grads[f"{name}.beta"] = dg, dbeta_
        elif kind.startswith("dense:"):
            if dh.ndim == 4:
                dh = dh.reshape(n, -1)
            dh, dw, db = L.dense_backward(dh, cache)
            name = kind.split(":")[1]
            grads[f"{name}.w"], grads[f"{name}.b"] = dw, db
    dz = dh if dh.ndim == 2 else dh.reshape(n, -1)

    dmu = dz.copy()
    dlogvar = (dz * res.eps * 0.5 * np.exp(res.logvar / 2.0)) if res.eps is not None \
        else np.zeros_like(res.logvar)
    if not skip_kl:
        dmu += beta * res.mu / n
        dlogvar += beta * 0.5 * (np.exp(res.logvar) - 1.0) / n

    dflat_mu, dw, db = L.dense_backward(dmu, res.caches["c_mu"])
    grads["enc.mu.w"], grads["enc.mu.b"] = dw, db
    dflat_lv, dw, db = L.dense_backward(dlogvar, res.caches["c_lv"])
    grads["enc.logvar.w"], grads["enc.logvar.b"] = dw, db
    dh = dflat_mu + dflat_lv

    for kind, cache in reversed(res.caches["enc"]):
        if kind == "relu":
            dh = L.relu_backward(dh, cache)
        elif kind == "pool":
            if dh.ndim == 2:
                dh = dh.reshape(res.caches["map_shape"])
            dh = L.maxpool_freq_backward(dh, cache)
        elif kind.startswith("conv:"):
            dh, dw, db = L.conv2d_backward(dh, cache)
            name = kind.split(":")[1]
            grads[f"{name}.w"], grads[f"{name}.b"] = dw, db
        elif kind.startswith("dense:"):
            dh, dw, db = L.dense_backward(dh, cache)
            name = kind.split(":")[1]
            grads[f"{name}.w"], grads[f"{name}.b"] = dw, db
        elif kind.startswith("bn:"):
            dh, dg, dbeta_ = L.batchnorm_backward(dh, cache)
            name = kind.split(":")[1]
            grads[f"{name}.gamma"], grads[f"{name}.beta"] = dg, dbeta_

    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericalError(f"non-finite gradient in {name}")
    return grads


def backward(batch, params, cfg: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Sample reparameterization noise and return mean-loss gradients."""
    x = _as_batch(batch)
    eps = np.random.default_rng(seed).standard_normal((x.shape[0], cfg.latent_dim))
    res = forward(x, params, cfg, eps=eps, train=True)
    return backward_from(res, x, params, cfg, cfg.beta)


def encoder_forward(x, params, cfg: ModelConfig):
    """Inference-mode (mu, logvar); accepts one snippet or a batch."""
    single = isinstance(x, Snippet) or (np.asarray(getattr(x, "data", x)).ndim == 2)
    res = forward(x, params, cfg, eps=None, train=False, encoder_only=True)
    if single:
        return res.mu[0], res.logvar[0]
    return res.mu, res.logvar


def decoder_forward(z, params, cfg: ModelConfig):
    """Inference-mode reconstruction from latent vectors."""
    _check_params(params, cfg)
    z = np.asarray(z, dtype=params["dec.fc1.w"].dtype)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    if z.shape[1] != cfg.latent_dim:
        raise ShapeError(f"latent length {z.shape[1]} != {cfg.latent_dim}")
    n = z.shape[0]
    g = z
    for j in range(1, len(cfg.dense_sizes) + 2):
        g, _ = L.dense_forward(g, params[f"dec.fc{j}.w"], params[f"dec.fc{j}.b"])
        g, _ = L.relu_forward(g)
    h = g.reshape(n, SNIPPET_ROWS, cfg.pooled_freq, cfg.conv_filters[-1])
    n_conv = len(cfg.conv_filters)
    for i in range(1, n_conv + 1):
        if i > 1:
            name = f"dec.bn{i - 1}"
            h, _, _ = L.batchnorm_forward(
                h, params[f"{name}.gamma"], params[f"{name}.beta"],
                params[f"{name}.rmean"], params[f"{name}.rvar"], train=False)
        h, _ = L.upconv2d_forward(h, params[f"dec.conv{i}.w"], params[f"dec.conv{i}.b"])
        h, _ = (L.relu_forward(h) if i < n_conv else L.sigmoid_forward(h))
    recon = h[..., 0]
    return recon[0] if single else recon


def encode_mu(snippets, params, cfg: ModelConfig, batch_size: int = 256) -> np.ndarray:
    """Inference-mode latent means for a collection of snippets, batched."""
    x = _as_batch(snippets)
    out = np.empty((x.shape[0], cfg.latent_dim), dtype=np.float64)
    for lo in range(0, x.shape[0], batch_size):
        res = forward(x[lo:lo + batch_size], params, cfg, eps=None, train=False,
                      encoder_only=True)
        out[lo:lo + res.mu.shape[0]] = res.mu
    return out
