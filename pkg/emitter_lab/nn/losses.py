"""Loss functions returning the scalar loss together with its gradients."""
from dataclasses import dataclass

import numpy as np

PROB_EPS = 1e-7


def loss_categorical_ce(probs, labels):
    """Mean categorical cross-entropy of softmax ``probs`` against class indices ``labels``.

    Returns ``(loss, grad)`` where ``grad`` is taken with respect to the
    softmax logits, ``(probs - one_hot) / batch``.
    """
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ValueError(f"expected probs (batch, classes) and labels (batch,), got {probs.shape} and {labels.shape}")
    batch, classes = probs.shape
    if batch == 0:
        raise ValueError("empty batch")
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= classes:
        raise ValueError(f"labels must be integers in [0, {classes}), got {labels.min()}..{labels.max()}")
    picked = np.clip(probs[np.arange(batch), labels].astype(np.float64), PROB_EPS, 1.0)
    loss = float(-np.mean(np.log(picked)))
    one_hot = np.zeros_like(probs)
    one_hot[np.arange(batch), labels] = 1
    return loss, (probs - one_hot) / batch


@dataclass(frozen=True)
class GanLosses:
    """Adversarial losses plus their gradients.

    ``*_prob_grad`` are taken with respect to D's output probabilities;
    ``*_logit_grad`` with respect to the pre-sigmoid logits, which stay
    informative when a probability saturates against the clamp.
    """
    d_loss: float
    g_loss: float
    d_real_prob_grad: np.ndarray
    d_fake_prob_grad: np.ndarray
    g_fake_prob_grad: np.ndarray
    d_real_logit_grad: np.ndarray
    d_fake_logit_grad: np.ndarray
    g_fake_logit_grad: np.ndarray

    def __iter__(self):
        return iter((self.d_loss, self.g_loss))


def _inside(p):
    return ((p > PROB_EPS) & (p < 1 - PROB_EPS)).astype(np.float64)


def loss_gan_terms(d_real, d_fake, literal=False):
    """Discriminator and generator losses of the conditional minimax game.

    ``d_loss = -mean(ln D(real)) - mean(ln(1 - D(fake)))``. The generator loss
    is the non-saturating ``-mean(ln D(fake))``, or ``mean(ln(1 - D(fake)))``
    with ``literal``. Probabilities are clamped to ``[eps, 1 - eps]``.
    """
    d_real = np.asarray(d_real, dtype=np.float64)
    d_fake = np.asarray(d_fake, dtype=np.float64)
    real = np.clip(d_real, PROB_EPS, 1 - PROB_EPS)
    fake = np.clip(d_fake, PROB_EPS, 1 - PROB_EPS)
    n_real, n_fake = max(real.size, 1), max(fake.size, 1)

    d_loss = float(-np.mean(np.log(real)) - np.mean(np.log1p(-fake)))
    if literal:
        g_loss = float(np.mean(np.log1p(-fake)))
        g_prob = -_inside(d_fake) / (n_fake * (1 - fake))
        g_logit = -d_fake / n_fake
    else:
        g_loss = float(-np.mean(np.log(fake)))
        g_prob = -_inside(d_fake) / (n_fake * fake)
        g_logit = -(1 - d_fake) / n_fake

    return GanLosses(
        d_loss=d_loss,
        g_loss=g_loss,
        d_real_prob_grad=-_inside(d_real) / (n_real * real),
        d_fake_prob_grad=_inside(d_fake) / (n_fake * (1 - fake)),
        g_fake_prob_grad=g_prob,
        d_real_logit_grad=-(1 - d_real) / n_real,
        d_fake_logit_grad=d_fake / n_fake,
        g_fake_logit_grad=g_logit,
    )
