"""Mini-batch training loop with early stopping on validation loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyDataset, NumericalError
from .adam import adam_init, adam_step
from .model import ModelConfig, _as_batch, backward_from, forward, init_params, loss, trainable_names

log = logging.getLogger(__name__)


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = float("inf")

    def csv_lines(self) -> list[str]:
        lines = ["epoch,train_total,train_recon,train_kl,val_total,val_recon,val_kl"]
        for r in self.rows:
            lines.append(
                f"{r['epoch']},{r['train_total']:.8f},{r['train_recon']:.8f},{r['train_kl']:.8f},"
                f"{r['val_total']:.8f},{r['val_recon']:.8f},{r['val_kl']:.8f}"
            )
        return lines


def _eval_loss(x, params, cfg, batch_size=256):
    """Deterministic validation loss: inference mode, z = mu."""
    totals = np.zeros(3)
    for lo in range(0, x.shape[0], batch_size):
        xb = x[lo:lo + batch_size]
        res = forward(xb, params, cfg, eps=None, train=False)
        t, r, k = loss(xb, res.recon, res.mu, res.logvar, cfg.beta)
        totals += np.array([t, r, k]) * xb.shape[0]
    return totals / x.shape[0]


def train(dataset, val_set, config: ModelConfig):
    """Fit on ``dataset``, early-stop on ``val_set``; returns the
    best-validation parameters and a per-epoch loss log."""
    x = _as_batch(dataset).astype(np.float32)
    xv = _as_batch(val_set).astype(np.float32)
    if x.shape[0] < 1:
        raise EmptyDataset("training set is empty")
    if xv.shape[0] < 1:
        raise EmptyDataset("validation set is empty")

    rng = np.random.default_rng(config.seed)
    params = init_params(config)
    state = adam_init(params, trainable_names(params))
    best_params = {k: v.copy() for k, v in params.items()}
    tlog = TrainLog()
    step = 0
    epochs_since_best = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(x.shape[0])
        sums = np.zeros(3)
        for lo in range(0, x.shape[0], config.batch_size):
            xb = x[order[lo:lo + config.batch_size]]
            # beta = 0 is the plain autoencoder: no KL pressure bounds the
            # log-variances, so sampling adds nothing but instability
            if config.beta == 0.0:
                eps = np.zeros((xb.shape[0], config.latent_dim))
            else:
                eps = rng.standard_normal((xb.shape[0], config.latent_dim))
            res = forward(xb, params, config, eps=eps, train=True)
            t, r, k = loss(xb, res.recon, res.mu, res.logvar, config.beta)
            if k < -1e-9:
                raise NumericalError(f"negative KL term {k} at step {step + 1}")
            grads = backward_from(res, xb, params, config, config.beta)
            step += 1
            params, state = adam_step(params, grads, state, config.learning_rate, step)
            params.update(res.bn_updates)
            sums += np.array([t, r, k]) * xb.shape[0]
        train_t, train_r, train_k = sums / x.shape[0]
        val_t, val_r, val_k = _eval_loss(xv, params, config)
        tlog.rows.append(dict(epoch=epoch, train_total=train_t, train_recon=train_r,
                              train_kl=train_k, val_total=val_t, val_recon=val_r,
                              val_kl=val_k))
        if val_t < tlog.best_val:
            tlog.best_val = float(val_t)
            tlog.best_epoch = epoch
            best_params = {k_: v.copy() for k_, v in params.items()}
            epochs_since_best = 0
        else:
            epochs_since_best += 1
        log.debug("epoch %d train %.5f val %.5f", epoch, train_t, val_t)
        if epochs_since_best >= config.patience:
            break
    return best_params, tlog
