"""Reverse search for lookalike signals in radio spectrograms.

Train a variational-autoencoder feature extractor on spectrogram snippets,
optionally add sinusoidal frequency embeddings to the latent features, and
retrieve morphologically similar candidates by cosine similarity. Includes
synthetic data generation, an excess-energy detector for building balanced
training sets, and an evaluation harness over labeled signal classes.
"""

from . import bvae, embedding, energy, evalmetrics, search, spectrogram
from .errors import LookalikeError

__version__ = "0.1.0"

__all__ = ["bvae", "embedding", "energy", "evalmetrics", "search",
           "spectrogram", "LookalikeError", "__version__"]
