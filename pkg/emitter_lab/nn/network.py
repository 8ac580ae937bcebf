import logging

import numpy as np
from django.conf import settings

from .. import seeding
from ..exceptions import NumericError, ShapeError
from .layers import ACTIVATION_HEADS, make_layer

logger = logging.getLogger(__name__)


class Network:
    """A fixed sequential stack of layers built from ``LayerSpec`` declarations.

    ``input_shape`` is the per-example shape (no batch axis). Parameters are
    initialized from ``seed`` with one derived generator per layer, so two
    networks with the same specs and seed are identical.
    """

    def __init__(self, specs, input_shape, seed=0, dtype=np.float32, checked=None, name='network'):
        self.specs = tuple(specs)
        if not self.specs:
            raise ValueError("a network needs at least one layer")
        self.input_shape = tuple(int(d) for d in input_shape)
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self.checked = settings.SEI_LAB_CHECKED if checked is None else bool(checked)
        self.name = name
        self.layers = []
        shape = self.input_shape
        for index, spec in enumerate(self.specs):
            layer = make_layer(spec)
            rectified = index + 1 < len(self.specs) and self.specs[index + 1].kind == 'relu'
            shape = layer.build(shape, seeding.derive_rng(self.seed, seeding.INIT, index), self.dtype, rectified)
            self.layers.append(layer)
        self.output_shape = shape
        self._cached = False
        logger.debug(f"Built {self.name}: {self.input_shape} -> {self.output_shape}, "
                      f"{self.parameter_count} parameters")

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self):
        return [g for layer in self.layers for g in layer.grads]

    @property
    def parameter_count(self):
        return int(sum(p.size for p in self.params))

    @property
    def head(self):
        return self.specs[-1].kind

    def get_weights(self):
        return [p.copy() for p in self.params]

    def set_weights(self, weights):
        params = self.params
        if len(weights) != len(params):
            raise ShapeError(f"{self.name} has {len(params)} parameter tensors, got {len(weights)}")
        for param, value in zip(params, weights):
            value = np.asarray(value)
            if value.shape != param.shape:
                raise ShapeError(f"{self.name} parameter shape {param.shape} does not match {value.shape}")
            param[...] = value

    def _check_finite(self, array, where):
        if array is not None and not np.all(np.isfinite(array)):
            raise NumericError(f"{self.name}: non-finite values after {where}")

    def forward(self, x):
        x = np.asarray(x)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"{self.name} expects input of shape (batch, {', '.join(map(str, self.input_shape))}), "
                             f"got {x.shape}")
        if self.specs[0].kind != 'embedding':
            x = x.astype(self.dtype, copy=False)
        for index, layer in enumerate(self.layers):
            x = layer.forward(x)
            if self.checked:
                if x.shape[1:] != layer.output_shape:
                    raise ShapeError(f"{self.name} layer {index} ({layer.kind}) produced {x.shape[1:]}, "
                                     f"declared {layer.output_shape}")
                self._check_finite(x, f"forward through layer {index} ({layer.kind})")
        self._cached = True
        return x

    def predict(self, x, batch_size=256):
        """Forward in chunks; returns the stacked outputs."""
        x = np.asarray(x)
        outputs = [self.forward(x[start:start + batch_size]) for start in range(0, len(x), batch_size)]
        return np.concatenate(outputs) if outputs else np.empty((0,) + self.output_shape, dtype=self.dtype)

    def backward(self, loss_grad, from_logits=False):
        """Propagate ``loss_grad`` back through the cached forward pass.

        Fills every layer's ``grads`` and returns the gradient with respect to
        the network input (``None`` for an embedding input). With
        ``from_logits`` the gradient is taken with respect to the input of the
        final sigmoid/softmax, which is skipped.
        """
        if not self._cached:
            raise RuntimeError(f"{self.name}: backward called before forward")
        layers = self.layers
        if from_logits:
            if self.head not in ACTIVATION_HEADS:
                raise ValueError(f"{self.name} ends with {self.head}, not an activation head")
            layers = layers[:-1]
        grad = np.asarray(loss_grad, dtype=self.dtype)
        expected = layers[-1].output_shape
        if grad.shape[1:] != expected:
            raise ShapeError(f"{self.name} loss gradient must have shape (batch, {expected}), got {grad.shape}")
        for index in range(len(layers) - 1, -1, -1):
            grad = layers[index].backward(grad)
            if self.checked:
                self._check_finite(grad, f"backward through layer {index} ({layers[index].kind})")
                for g in layers[index].grads:
                    self._check_finite(g, f"gradient of layer {index} ({layers[index].kind})")
        return grad

    def zero_grads(self):
        for layer in self.layers:
            layer.grads = [np.zeros_like(p) for p in layer.params]

    def __repr__(self):
        return f"<Network {self.name} {self.input_shape}->{self.output_shape} layers={len(self.layers)}>"
