"""Layer kinds of the sequential network kernel.

Activations are NHWC: ``(batch, rows, cols, channels)``. Every layer knows its
per-example output shape once built; ``forward`` caches what ``backward`` needs.
"""
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from ..exceptions import ShapeError

LAYER_KINDS = ('conv2d', 'dense', 'relu', 'sigmoid', 'maxpool2d', 'upsample2d', 'embedding', 'softmax', 'flatten')
ACTIVATION_HEADS = ('sigmoid', 'softmax')


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer: a kind plus its hyperparameters."""
    kind: str
    options: tuple = ()

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}; expected one of {LAYER_KINDS}")

    def get(self, key, default=None):
        return dict(self.options).get(key, default)

    def to_dict(self):
        return {'kind': self.kind, **{k: list(v) if isinstance(v, tuple) else v for k, v in self.options}}

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        kind = data.pop('kind')
        return cls(kind, tuple(sorted((k, tuple(v) if isinstance(v, list) else v) for k, v in data.items())))

    def __str__(self):
        return f"{self.kind}({json.dumps(dict(self.options))})" if self.options else self.kind


def _spec(kind, **options):
    return LayerSpec(kind, tuple(sorted(options.items())))


def conv2d(filters, kernel=(1, 3), stride=(1, 1), padding='same'):
    return _spec('conv2d', filters=int(filters), kernel=tuple(kernel), stride=tuple(stride), padding=padding)


def dense(units):
    return _spec('dense', units=int(units))


def relu():
    return _spec('relu')


def sigmoid():
    return _spec('sigmoid')


def softmax():
    return _spec('softmax')


def flatten():
    return _spec('flatten')


def maxpool2d(pool=(1, 2)):
    return _spec('maxpool2d', pool=tuple(pool))


def upsample2d(factor=(1, 2)):
    return _spec('upsample2d', factor=tuple(factor))


def embedding(vocab, dim):
    return _spec('embedding', vocab=int(vocab), dim=int(dim))


def he_uniform(rng, shape, fan_in, dtype):
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base layer: no parameters, identity shape."""

    def __init__(self, spec):
        self.spec = spec
        self.params = []
        self.grads = []
        self.input_shape = None
        self.output_shape = None

    @property
    def kind(self):
        return self.spec.kind

    def build(self, input_shape, rng, dtype, rectified):
        self.input_shape = tuple(input_shape)
        self.output_shape = self.infer_shape(self.input_shape)
        self.dtype = dtype
        return self.output_shape

    def infer_shape(self, input_shape):
        return input_shape

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def _require_rank(self, input_shape, rank):
        if len(input_shape) != rank:
            raise ShapeError(f"{self.kind} expects a rank-{rank} example shape, got {input_shape}")


class Conv2D(Layer):

    def infer_shape(self, input_shape):
        self._require_rank(input_shape, 3)
        rows, cols, _ = input_shape
        (kh, kw), (sh, sw) = self.spec.get('kernel'), self.spec.get('stride')
        if self.spec.get('padding') == 'same':
            out_rows, out_cols = -(-rows // sh), -(-cols // sw)
            pad_rows = max((out_rows - 1) * sh + kh - rows, 0)
            pad_cols = max((out_cols - 1) * sw + kw - cols, 0)
            self.padding = ((pad_rows // 2, pad_rows - pad_rows // 2), (pad_cols // 2, pad_cols - pad_cols // 2))
        elif self.spec.get('padding') == 'valid':
            out_rows, out_cols = (rows - kh) // sh + 1, (cols - kw) // sw + 1
            self.padding = ((0, 0), (0, 0))
        else:
            raise ValueError(f"conv2d padding must be 'same' or 'valid', got {self.spec.get('padding')!r}")
        if out_rows < 1 or out_cols < 1:
            raise ShapeError(f"conv2d kernel {(kh, kw)} does not fit input {input_shape}")
        return (out_rows, out_cols, self.spec.get('filters'))

    def build(self, input_shape, rng, dtype, rectified):
        shape = super().build(input_shape, rng, dtype, rectified)
        kh, kw = self.spec.get('kernel')
        channels, filters = input_shape[2], self.spec.get('filters')
        fan_in, fan_out = kh * kw * channels, kh * kw * filters
        if rectified:
            weight = he_uniform(rng, (kh, kw, channels, filters), fan_in, dtype)
        else:
            weight = glorot_uniform(rng, (kh, kw, channels, filters), fan_in, fan_out, dtype)
        self.params = [weight, np.zeros(filters, dtype=dtype)]
        self.grads = [np.zeros_like(p) for p in self.params]
        return shape

    def _windows(self):
        (kh, kw), (sh, sw) = self.spec.get('kernel'), self.spec.get('stride')
        out_rows, out_cols, _ = self.output_shape
        for i in range(kh):
            for j in range(kw):
                yield i, j, (slice(None), slice(i, i + sh * (out_rows - 1) + 1, sh),
                             slice(j, j + sw * (out_cols - 1) + 1, sw), slice(None))

    def forward(self, x):
        weight, bias = self.params
        self._padded = np.pad(x, ((0, 0),) + self.padding + ((0, 0),))
        y = np.zeros((x.shape[0],) + self.output_shape, dtype=self.dtype)
        for i, j, window in self._windows():
            y += self._padded[window] @ weight[i, j]
        y += bias
        return y

    def backward(self, dy):
        weight, _ = self.params
        d_padded = np.zeros_like(self._padded)
        d_weight = np.empty_like(weight)
        for i, j, window in self._windows():
            d_weight[i, j] = np.tensordot(self._padded[window], dy, axes=([0, 1, 2], [0, 1, 2]))
            d_padded[window] += dy @ weight[i, j].T
        self.grads = [d_weight, dy.sum(axis=(0, 1, 2), dtype=np.float64).astype(self.dtype)]
        (top, _), (left, _) = self.padding
        rows, cols, _ = self.input_shape
        return d_padded[:, top:top + rows, left:left + cols, :]


class Dense(Layer):

    def infer_shape(self, input_shape):
        self._require_rank(input_shape, 1)
        return (self.spec.get('units'),)

    def build(self, input_shape, rng, dtype, rectified):
        shape = super().build(input_shape, rng, dtype, rectified)
        fan_in, fan_out = input_shape[0], self.spec.get('units')
        if rectified:
            weight = he_uniform(rng, (fan_in, fan_out), fan_in, dtype)
        else:
            weight = glorot_uniform(rng, (fan_in, fan_out), fan_in, fan_out, dtype)
        self.params = [weight, np.zeros(fan_out, dtype=dtype)]
        self.grads = [np.zeros_like(p) for p in self.params]
        return shape

    def forward(self, x):
        self._x = x
        weight, bias = self.params
        return x @ weight + bias

    def backward(self, dy):
        weight, _ = self.params
        self.grads = [self._x.T @ dy, dy.sum(axis=0, dtype=np.float64).astype(self.dtype)]
        return dy @ weight.T


class ReLU(Layer):

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(self.dtype, copy=False)

    def backward(self, dy):
        return dy * self._mask


class Sigmoid(Layer):

    def forward(self, x):
        self._y = special.expit(x).astype(self.dtype, copy=False)
        return self._y

    def backward(self, dy):
        return dy * self._y * (1 - self._y)


class Softmax(Layer):

    def forward(self, x):
        self._y = special.softmax(x.astype(np.float64), axis=-1).astype(self.dtype)
        return self._y

    def backward(self, dy):
        inner = np.sum(dy * self._y, axis=-1, keepdims=True, dtype=np.float64).astype(self.dtype)
        return self._y * (dy - inner)


class Flatten(Layer):

    def infer_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class MaxPool2D(Layer):
    """Non-overlapping max pooling; trailing rows/cols that do not fill a window are dropped."""

    def infer_shape(self, input_shape):
        self._require_rank(input_shape, 3)
        (ph, pw), (rows, cols, channels) = self.spec.get('pool'), input_shape
        if rows // ph < 1 or cols // pw < 1:
            raise ShapeError(f"maxpool2d window {(ph, pw)} does not fit input {input_shape}")
        return (rows // ph, cols // pw, channels)

    def forward(self, x):
        ph, pw = self.spec.get('pool')
        out_rows, out_cols, channels = self.output_shape
        batch = x.shape[0]
        kept = x[:, :out_rows * ph, :out_cols * pw, :]
        windows = (kept.reshape(batch, out_rows, ph, out_cols, pw, channels)
                   .transpose(0, 1, 3, 5, 2, 4)
                   .reshape(batch, out_rows, out_cols, channels, ph * pw))
        self._argmax = windows.argmax(axis=-1)[..., np.newaxis]
        self._x_shape = x.shape
        return np.take_along_axis(windows, self._argmax, axis=-1)[..., 0]

    def backward(self, dy):
        ph, pw = self.spec.get('pool')
        out_rows, out_cols, channels = self.output_shape
        batch = dy.shape[0]
        d_windows = np.zeros((batch, out_rows, out_cols, channels, ph * pw), dtype=dy.dtype)
        np.put_along_axis(d_windows, self._argmax, dy[..., np.newaxis], axis=-1)
        d_kept = (d_windows.reshape(batch, out_rows, out_cols, channels, ph, pw)
                  .transpose(0, 1, 4, 2, 5, 3)
                  .reshape(batch, out_rows * ph, out_cols * pw, channels))
        dx = np.zeros(self._x_shape, dtype=dy.dtype)
        dx[:, :out_rows * ph, :out_cols * pw, :] = d_kept
        return dx


class UpSample2D(Layer):
    """Nearest-neighbour upsampling by integer row/col factors."""

    def infer_shape(self, input_shape):
        self._require_rank(input_shape, 3)
        (fh, fw), (rows, cols, channels) = self.spec.get('factor'), input_shape
        return (rows * fh, cols * fw, channels)

    def forward(self, x):
        fh, fw = self.spec.get('factor')
        return x.repeat(fh, axis=1).repeat(fw, axis=2)

    def backward(self, dy):
        fh, fw = self.spec.get('factor')
        rows, cols, channels = self.input_shape
        return dy.reshape(dy.shape[0], rows, fh, cols, fw, channels).sum(axis=(2, 4))


class Embedding(Layer):
    """Lookup table indexed by integer ids in ``[0, vocab)``."""

    def infer_shape(self, input_shape):
        if input_shape != ():
            raise ShapeError(f"embedding expects scalar ids per example, got {input_shape}")
        return (self.spec.get('dim'),)

    def build(self, input_shape, rng, dtype, rectified):
        shape = super().build(input_shape, rng, dtype, rectified)
        table = rng.uniform(-0.05, 0.05, size=(self.spec.get('vocab'), self.spec.get('dim'))).astype(dtype)
        self.params = [table]
        self.grads = [np.zeros_like(table)]
        return shape

    def forward(self, x):
        ids = np.asarray(x)
        if not np.issubdtype(ids.dtype, np.integer):
            raise ShapeError(f"embedding ids must be integers, got dtype {ids.dtype}")
        vocab = self.spec.get('vocab')
        if ids.size and (ids.min() < 0 or ids.max() >= vocab):
            raise ValueError(f"embedding id out of range [0, {vocab}): {ids.min()}..{ids.max()}")
        self._ids = ids
        return self.params[0][ids]

    def backward(self, dy):
        d_table = np.zeros_like(self.params[0])
        np.add.at(d_table, self._ids, dy)
        self.grads = [d_table]
        return None


LAYER_CLASSES = {
    'conv2d': Conv2D,
    'dense': Dense,
    'relu': ReLU,
    'sigmoid': Sigmoid,
    'softmax': Softmax,
    'flatten': Flatten,
    'maxpool2d': MaxPool2D,
    'upsample2d': UpSample2D,
    'embedding': Embedding,
}


def make_layer(spec):
    return LAYER_CLASSES[spec.kind](spec)
