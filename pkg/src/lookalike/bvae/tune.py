"""Random-search hyperparameter tuner scored by clustering quality.

Samples configurations uniformly from a grid, trains each briefly on the
labeled evaluation snippets, and keeps the configuration whose inference
features score highest on the centroid-based silhouette variant. Random
search replaces a surrogate-model optimizer at desk scale, where a handful
of trials is statistically comparable and dependency-free.
"""

from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np

from ..errors import InvalidConfig
from .model import ModelConfig, encode_mu
from .train import train

log = logging.getLogger(__name__)


def table_grid() -> dict:
    """Search space: per-field candidate values.

    The three convolution entries expand to five-stage filter lists with the
    last three stages sharing the third value, mirroring how the default
    architecture repeats its widest stage.
    """
    conv_filters = [
        (c1, c2, c3, c3, c3)
        for c1 in (3, 8, 16, 32)
        for c2 in (32, 64)
        for c3 in (64, 128)
    ]
    dense_sizes = [(d1, d2) for d1 in (64, 128, 256) for d2 in (16, 32, 64)]
    return {
        "latent_dim": [3, 4, 5, 6, 7, 8, 10],
        "conv_filters": conv_filters,
        "dense_sizes": dense_sizes,
        "learning_rate": [1e-3, 5e-4, 1e-4],
    }


def _sample_config(space: dict, rng: np.random.Generator, base: ModelConfig) -> ModelConfig:
    chosen = {}
    for key, values in space.items():
        chosen[key] = values[int(rng.integers(len(values)))]
    return replace(base, **chosen)


def tune(space: dict, budget: int, eval_set, seed: int,
         trial_epochs: int = 5, base: ModelConfig | None = None) -> ModelConfig:
    """Best configuration out of ``budget`` uniform draws from ``space``.

    ``eval_set`` is a list of labeled classes (each with ``snippets``); the
    score is the centroid silhouette of inference-mode features against the
    class labels. Ties keep the earlier draw.
    """
    from ..evalmetrics import modified_silhouette

    if budget < 1:
        raise InvalidConfig(f"budget must be >= 1, got {budget}")
    if not space or any(len(v) == 0 for v in space.values()):
        raise InvalidConfig("empty search space")
    base = base or ModelConfig()

    snippets = [s for c in eval_set for s in c.snippets]
    labels = np.array([c.class_id for c in eval_set for _ in c.snippets])
    if len(snippets) < 4 or len(set(labels.tolist())) < 2:
        raise InvalidConfig("eval_set must provide at least two labeled classes")

    rng = np.random.default_rng(seed)
    split = np.random.default_rng(seed).permutation(len(snippets))
    n_val = max(1, len(snippets) // 5)
    train_snips = [snippets[i] for i in split[n_val:]]
    val_snips = [snippets[i] for i in split[:n_val]]

    best_cfg = None
    best_score = -np.inf
    for trial in range(budget):
        cfg = _sample_config(space, rng, base)
        cfg = replace(cfg, seed=base.seed + trial)
        trial_cfg = replace(cfg, max_epochs=trial_epochs, patience=trial_epochs)
        params, _ = train(train_snips, val_snips, trial_cfg)
        feats = encode_mu(snippets, params, trial_cfg)
        score = modified_silhouette(feats, labels)
        log.info("tune trial %d/%d score %.4f cfg %s", trial + 1, budget, score, cfg)
        if score > best_score:
            best_score, best_cfg = score, cfg
    return best_cfg
