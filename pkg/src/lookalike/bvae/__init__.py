"""From-scratch beta-VAE: kernels, model, optimizer, training, tuning."""

from .adam import AdamState, adam_init, adam_step
from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    ModelConfig,
    backward,
    decoder_forward,
    encode_mu,
    encoder_forward,
    forward,
    init_params,
    loss,
    reparameterize,
    trainable_names,
)
from .train import TrainLog, train
from .tune import table_grid, tune

__all__ = [
    "AdamState", "ModelConfig", "TrainLog",
    "adam_init", "adam_step", "backward", "decoder_forward", "encode_mu",
    "encoder_forward", "forward", "init_params", "load_checkpoint", "loss",
    "reparameterize", "save_checkpoint", "table_grid", "train",
    "trainable_names", "tune",
]
