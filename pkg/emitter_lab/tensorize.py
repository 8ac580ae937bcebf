"""Preamble -> 4-row real tensor conversion and the conditional label channel.

A tensor has shape ``(4, W, C)``: rows I, Q, ln|z| and arg z of the complex
samples, each column min-max scaled to ``[0, 1]``; channel 1, when present,
carries the label matrix.
"""
import logging
from dataclasses import dataclass

import numpy as np

from . import seeding
from .exceptions import ShapeError
from .nn import Network, dense, embedding

logger = logging.getLogger(__name__)

TENSOR_ROWS = 4
MAGNITUDE_FLOOR = 1e-12
EMBEDDING_DIM = 50
SUPPORTED_WIDTHS = (40, 80, 160, 320)


@dataclass(frozen=True, eq=False)
class PreambleTensor:
    data: np.ndarray
    label: int
    snr_db: float = float('inf')

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[0] != TENSOR_ROWS or self.data.shape[2] not in (1, 2):
            raise ShapeError(f"preamble tensor must have shape (4, W, 1|2), got {self.data.shape}")

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]


def raw_rows(samples):
    """Unnormalized rows ``[I, Q, ln|z|, arg z]`` for each row of ``samples``: shape (B, 4, L)."""
    z = np.atleast_2d(np.asarray(samples, dtype=np.complex128))
    if z.shape[-1] == 0:
        raise ValueError("cannot tensorize an empty preamble")
    if not np.all(np.isfinite(z)):
        raise ValueError("preamble contains non-finite samples")
    magnitude = np.maximum(np.abs(z), MAGNITUDE_FLOOR)
    return np.stack([z.real, z.imag, np.log(magnitude), np.angle(z)], axis=1)


def minmax_columns(rows):
    """Scale each column (axis -2) of ``rows`` to [0, 1]; constant columns become 0."""
    low = rows.min(axis=-2, keepdims=True)
    span = rows.max(axis=-2, keepdims=True) - low
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (rows - low) / safe, 0.0)


def tensorize_rows(samples):
    """Normalized tensors for a block of preambles: shape (B, 4, L), float64."""
    return minmax_columns(raw_rows(samples))


def to_tensor(record):
    data = tensorize_rows(record.sequence.samples)[0][..., np.newaxis]
    return PreambleTensor(data=data, label=record.emitter_id, snr_db=record.snr_db)


class LabelEmbedder:
    """Label -> 4 x W matrix: a frozen R x 50 embedding followed by a linear head per width."""

    def __init__(self, emitter_count, seed, widths=SUPPORTED_WIDTHS):
        if emitter_count < 1:
            raise ValueError(f"emitter_count must be >= 1, got {emitter_count}")
        self.emitter_count = int(emitter_count)
        self.seed = int(seed)
        self.lookup = Network([embedding(self.emitter_count, EMBEDDING_DIM)], input_shape=(),
                              seed=seeding.derive_seed(self.seed, seeding.LABEL, 0), name='label-embedding')
        self.heads = {
            int(width): Network([dense(TENSOR_ROWS * width)], input_shape=(EMBEDDING_DIM,),
                                seed=seeding.derive_seed(self.seed, seeding.LABEL, width), name=f'label-head-{width}')
            for width in widths
        }

    @property
    def table(self):
        return self.lookup.params[0]

    def head(self, width):
        if width not in self.heads:
            raise ShapeError(f"no label head for width {width}; supported: {sorted(self.heads)}")
        return self.heads[width]

    def _indices(self, labels):
        labels = np.atleast_1d(np.asarray(labels))
        if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 1 or labels.max() > self.emitter_count:
            raise ValueError(f"labels must be emitter ids in [1, {self.emitter_count}], got {labels}")
        return labels.astype(np.int64) - 1

    def vectors(self, labels):
        """Embedding vectors (B, 50) for emitter ids ``labels``."""
        return self.lookup.forward(self._indices(labels))

    def matrices(self, labels, width):
        """Label matrices (B, 4, W); row-major reshape of the head output."""
        out = self.head(width).forward(self.vectors(labels))
        return out.reshape(-1, TENSOR_ROWS, width)

    def backward(self, grad, width):
        """Accumulate head gradients from ``grad`` with respect to the (B, 4, W) matrices."""
        grad = np.asarray(grad)
        self.head(width).backward(grad.reshape(grad.shape[0], TENSOR_ROWS * width))
        return self.head(width).grads


def label_channel(embedder, label, width):
    """The 4 x W conditioning matrix of one emitter id."""
    return embedder.matrices(np.array([int(label)]), width)[0]


def attach_label(tensor, matrix):
    """Append ``matrix`` as channel 1 of a single-channel tensor."""
    matrix = np.asarray(matrix)
    if tensor.channels != 1:
        raise ShapeError(f"label channel already attached (tensor has {tensor.channels} channels)")
    if matrix.shape != (TENSOR_ROWS, tensor.width):
        raise ShapeError(f"label matrix shape {matrix.shape} does not match tensor width {tensor.width}")
    data = np.concatenate([tensor.data, matrix.astype(tensor.data.dtype)[..., np.newaxis]], axis=-1)
    return PreambleTensor(data=data, label=tensor.label, snr_db=tensor.snr_db)


def strip_label(tensor):
    """Drop channel 1, returning the single-channel tensor."""
    return PreambleTensor(data=tensor.data[..., :1], label=tensor.label, snr_db=tensor.snr_db)


def conditioned_batch(tensors, matrices):
    """Stack (B, 4, W) tensors and (B, 4, W) label matrices into a (B, 4, W, 2) network input."""
    return np.stack([tensors, matrices.astype(tensors.dtype, copy=False)], axis=-1)
