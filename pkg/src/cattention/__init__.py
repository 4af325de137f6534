"""Explainable attention/CNN text classification toolkit.

Three model variants classify tagged-transcript records from part-of-speech
count features, from per-utterance sentence embeddings, or from both feature
classes joined by a final attention layer. Every forward pass exposes the
attention weights and convolution pooling indices needed to explain the
prediction at the feature level and at the feature-class level.
"""

from .errors import (
    CAttentionError,
    ConfigError,
    IngestionError,
    SequenceTooShortError,
    ShapeError,
)
from .tensor import Tensor

__all__ = [
    "CAttentionError",
    "ConfigError",
    "IngestionError",
    "SequenceTooShortError",
    "ShapeError",
    "Tensor",
]

__version__ = "0.1.0"
