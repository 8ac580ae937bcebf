from .layers import (
    LayerSpec, conv2d, dense, embedding, flatten, maxpool2d, relu, sigmoid, softmax, upsample2d,
)
from .losses import GanLosses, loss_categorical_ce, loss_gan_terms
from .network import Network
from .optim import AdamState, MomentumState, adam_step, momentum_sgd_step, sgd_step

__all__ = [
    'LayerSpec', 'Network', 'AdamState', 'MomentumState', 'GanLosses',
    'conv2d', 'dense', 'embedding', 'flatten', 'maxpool2d', 'relu', 'sigmoid', 'softmax', 'upsample2d',
    'loss_categorical_ce', 'loss_gan_terms', 'adam_step', 'sgd_step', 'momentum_sgd_step',
]
