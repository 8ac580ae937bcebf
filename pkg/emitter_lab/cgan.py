"""Conditional GAN: a convolutional autoencoder generator that restores 20 MHz
tensors from F_L tensors, a CNN discriminator, alternating training and the
post-training upsampling service.
"""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import seeding
from .exceptions import DatasetFormatError, MissingPrerequisite, ShapeError
from .nn import (
    AdamState, MomentumState, Network, adam_step, conv2d, dense, flatten, loss_gan_terms, maxpool2d,
    momentum_sgd_step, relu, sigmoid, upsample2d,
)
from .nn.checkpoint import load_network, save_network
from .spectro import online_augment
from .synthesis import FULL_RATE_HZ, LOW_RATES_HZ, PREAMBLE_LENGTH, decimate_rows
from .tensorize import LabelEmbedder, PreambleTensor, conditioned_batch, tensorize_rows

logger = logging.getLogger(__name__)

EQUILIBRIUM_EPS = 0.02
LOG_FIELDS = ('epoch', 'd_loss', 'g_loss', 'mean_d_real', 'mean_d_fake', 'd_steps', 'g_steps', 'early_stop')


def low_width(f_low):
    if f_low not in LOW_RATES_HZ:
        raise ValueError(f"unsupported F_L {f_low} Hz; expected one of {LOW_RATES_HZ}")
    return int(round(PREAMBLE_LENGTH * f_low / FULL_RATE_HZ))


def generator_specs(f_low):
    """Layer stack of the CAE generator for input width ``320 * f_low / 20 MHz``."""
    width = low_width(f_low)
    specs = [conv2d(16), relu(), conv2d(32), relu()]
    if f_low == min(LOW_RATES_HZ):
        # The narrowest input cannot afford another width halving.
        specs.append(upsample2d((1, 2)))
        width *= 2
    else:
        specs.append(maxpool2d((1, 2)))
        width //= 2
    specs += [conv2d(64), relu(), maxpool2d((2, 2)), conv2d(2, kernel=(1, 1)), relu()]
    width //= 2

    specs += [upsample2d((2, 2)), conv2d(32), relu()]
    width *= 2
    filters = 16
    while width < PREAMBLE_LENGTH:
        specs += [upsample2d((1, 2)), conv2d(filters), relu()]
        width *= 2
    specs += [conv2d(2), sigmoid()]
    return specs


def build_generator(f_low, seed, dtype=np.float32):
    net = Network(generator_specs(f_low), (4, low_width(f_low), 2), seed=seed, dtype=dtype,
                  name=f'generator-{f_low / 1e6:g}MHz')
    if net.output_shape != (4, PREAMBLE_LENGTH, 2):
        raise ShapeError(f"generator for F_L={f_low} produces {net.output_shape}, expected (4, 320, 2)")
    return net


def bottleneck_shape(net):
    """Per-example shape of the narrowest activation of ``net``."""
    shapes = [layer.output_shape for layer in net.layers]
    return min(shapes, key=lambda s: int(np.prod(s)))


def discriminator_trunk():
    """Conv/ReLU/pool feature extractor shared by the discriminator and the SEI classifier."""
    return [conv2d(16), relu(), maxpool2d((1, 2)), conv2d(32), relu(), maxpool2d((1, 2)),
            flatten(), dense(64), relu()]


def build_discriminator(seed, dtype=np.float32):
    return Network(discriminator_trunk() + [dense(1), sigmoid()], (4, PREAMBLE_LENGTH, 2),
                   seed=seed, dtype=dtype, name='discriminator')


@dataclass(frozen=True)
class AugmentConfig:
    snr_low: float = 9.0
    snr_high: float = 30.0

    def __post_init__(self):
        if self.snr_low > self.snr_high:
            raise ValueError(f"augmentation SNR range is empty: {self.snr_low}..{self.snr_high}")


@dataclass(frozen=True)
class CganConfig:
    f_low: float
    seed: int = 0
    minibatch: int = 256
    epochs: int = 1000
    k: int = 1
    equilibrium_eps: float = EQUILIBRIUM_EPS
    d_lr: float = 1e-3
    g_lr: float = 1e-2
    g_momentum: float = 0.9
    l1_weight: float = 0.0
    literal_g_loss: bool = False
    augment: AugmentConfig = None

    def __post_init__(self):
        low_width(self.f_low)
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.minibatch < 1 or self.epochs < 1:
            raise ValueError(f"minibatch and epochs must be positive, got {self.minibatch} and {self.epochs}")
        if self.equilibrium_eps <= 0:
            raise ValueError(f"equilibrium tolerance must be positive, got {self.equilibrium_eps}")


@dataclass
class EpochLog:
    epoch: int
    d_loss: float
    g_loss: float
    mean_d_real: float
    mean_d_fake: float
    d_steps: int
    g_steps: int
    early_stop: bool = False

    def as_row(self):
        return [self.epoch, f"{self.d_loss:.6f}", f"{self.g_loss:.6f}", f"{self.mean_d_real:.6f}",
                f"{self.mean_d_fake:.6f}", self.d_steps, self.g_steps, int(self.early_stop)]


@dataclass
class TrainedGenerator:
    generator: Network
    f_low: float
    embedder: LabelEmbedder
    log: list = field(default_factory=list)

    def upsample_rows(self, samples, labels):
        """Restore a block of F_L preambles: (B, W_L) complex -> (B, 4, 320) tensors."""
        samples = np.atleast_2d(samples)
        if samples.shape[-1] != low_width(self.f_low):
            raise ShapeError(f"expected {low_width(self.f_low)} samples at F_L={self.f_low}, got {samples.shape[-1]}")
        labels = np.atleast_1d(labels)
        out = []
        for start in range(0, samples.shape[0], 256):
            chunk = slice(start, start + 256)
            cond = self.embedder.matrices(labels[chunk], samples.shape[-1])
            x = conditioned_batch(tensorize_rows(samples[chunk]), cond)
            out.append(self.generator.forward(x)[..., 0])
        return np.concatenate(out).astype(np.float64)

    def upsample(self, record, label=None):
        """Upsample one F_L record to a 4 x 320 x 1 tensor, conditioned on ``label``."""
        if record.sequence.fs != self.f_low:
            raise ValueError(f"generator was trained for F_L={self.f_low} Hz, record is at {record.sequence.fs} Hz")
        label = record.emitter_id if label is None else label
        data = self.upsample_rows(record.sequence.samples, [label])[0][..., np.newaxis]
        return PreambleTensor(data=data, label=int(label), snr_db=record.snr_db)


def check_pairing(high, low, labels, f_low):
    """Reject training pairs where ``low[i]`` is not the decimated twin of ``high[i]``."""
    high, low, labels = np.asarray(high), np.asarray(low), np.asarray(labels)
    if high.ndim != 2 or high.shape[1] != PREAMBLE_LENGTH:
        raise ShapeError(f"high-rate preambles must have shape (N, 320), got {high.shape}")
    if low.shape != (high.shape[0], low_width(f_low)):
        raise ShapeError(f"low-rate preambles must have shape ({high.shape[0]}, {low_width(f_low)}), got {low.shape}")
    if labels.shape != (high.shape[0],):
        raise ShapeError(f"expected {high.shape[0]} labels, got {labels.shape}")
    twins, _ = decimate_rows(high, FULL_RATE_HZ, int(round(FULL_RATE_HZ / f_low)))
    scale = max(float(np.max(np.abs(twins), initial=0.0)), 1.0)
    if not np.allclose(twins, low, rtol=0, atol=1e-4 * scale):
        bad = int(np.argmax(np.max(np.abs(twins - low), axis=1)))
        raise ValueError(f"low-rate preamble {bad} is not the decimated twin of its high-rate pair")


class CganTrainer:
    """Owns the networks, optimizer states and training log of one cGAN run."""

    def __init__(self, high, low, labels, cfg, emitter_count=None, check=True):
        high = np.asarray(high)
        low = np.asarray(low)
        labels = np.asarray(labels).astype(np.int64)
        if high.shape[0] == 0:
            raise ValueError("empty cGAN training set")
        if check:
            check_pairing(high, low, labels, cfg.f_low)
        if cfg.minibatch > high.shape[0]:
            raise ValueError(f"minibatch {cfg.minibatch} exceeds the training-set size {high.shape[0]}")
        self.high, self.low, self.labels, self.cfg = high, low, labels, cfg
        self.width = low_width(cfg.f_low)
        self.emitter_count = int(emitter_count or labels.max())
        self.generator = build_generator(cfg.f_low, seeding.derive_seed(cfg.seed, seeding.INIT, 1))
        self.discriminator = build_discriminator(seeding.derive_seed(cfg.seed, seeding.INIT, 2))
        self.embedder = LabelEmbedder(self.emitter_count, seeding.derive_seed(cfg.seed, seeding.LABEL))
        self.d_params = self.discriminator.params + self.embedder.head(PREAMBLE_LENGTH).params
        self.g_params = self.generator.params + self.embedder.head(self.width).params
        self.d_state = AdamState.for_params(self.d_params, lr=cfg.d_lr)
        self.g_state = MomentumState.for_params(self.g_params, lr=cfg.g_lr, momentum=cfg.g_momentum)
        self.log = []
        self.epoch = 0
        self.stopped = False

    def _batch(self, idx, epoch, step):
        high, low = self.high[idx], self.low[idx]
        if self.cfg.augment is not None:
            seed = seeding.derive_seed(self.cfg.seed, seeding.AUGMENT, epoch, step)
            high = online_augment(high, (self.cfg.augment.snr_low, self.cfg.augment.snr_high), seed)
            low, _ = decimate_rows(high, FULL_RATE_HZ, int(round(FULL_RATE_HZ / self.cfg.f_low)))
        return tensorize_rows(high), tensorize_rows(low), self.labels[idx]

    def _fakes(self, x_low, labels):
        cond = self.embedder.matrices(labels, self.width)
        return self.generator.forward(conditioned_batch(x_low, cond))

    def train_step(self, x_high, x_low, labels):
        """k discriminator updates then one generator update on one minibatch."""
        batch = x_high.shape[0]
        d_outputs = []
        for _ in range(self.cfg.k):
            fake = self._fakes(x_low, labels)
            cond_high = self.embedder.matrices(labels, PREAMBLE_LENGTH)
            d_in = np.concatenate([conditioned_batch(x_high, cond_high), conditioned_batch(fake[..., 0], cond_high)])
            d_out = self.discriminator.forward(d_in)[:, 0]
            terms = loss_gan_terms(d_out[:batch], d_out[batch:], literal=self.cfg.literal_g_loss)
            grad = np.concatenate([terms.d_real_logit_grad, terms.d_fake_logit_grad])[:, np.newaxis]
            d_in_grad = self.discriminator.backward(grad, from_logits=True)
            self.embedder.backward(d_in_grad[:batch, ..., 1] + d_in_grad[batch:, ..., 1], PREAMBLE_LENGTH)
            adam_step(self.d_state, self.d_params,
                      self.discriminator.grads + self.embedder.head(PREAMBLE_LENGTH).grads)
            d_outputs.append(d_out)
        d_real = d_out[:batch]

        # Generator update through the refreshed discriminator; D's gradients are discarded.
        fake = self.generator.forward(conditioned_batch(x_low, self.embedder.matrices(labels, self.width)))
        cond_high = self.embedder.matrices(labels, PREAMBLE_LENGTH)
        d_fake = self.discriminator.forward(conditioned_batch(fake[..., 0], cond_high))[:, 0]
        terms_g = loss_gan_terms(d_real, d_fake, literal=self.cfg.literal_g_loss)
        d_in_grad = self.discriminator.backward(terms_g.g_fake_logit_grad[:, np.newaxis], from_logits=True)
        g_out_grad = np.zeros_like(fake)
        g_out_grad[..., 0] = d_in_grad[..., 0]
        g_loss = terms_g.g_loss
        if self.cfg.l1_weight:
            diff = fake[..., 0] - x_high
            g_loss += self.cfg.l1_weight * float(np.mean(np.abs(diff)))
            g_out_grad[..., 0] += self.cfg.l1_weight * np.sign(diff) / diff.size
        g_in_grad = self.generator.backward(g_out_grad)
        self.embedder.backward(g_in_grad[..., 1], self.width)
        momentum_sgd_step(self.g_state, self.g_params, self.generator.grads + self.embedder.head(self.width).grads)

        return {
            'd_loss': terms.d_loss,
            'g_loss': g_loss,
            'd_real': d_real,
            'd_fake': d_out[batch:],
            'd_outputs': np.concatenate(d_outputs),
            'd_steps': self.cfg.k,
            'g_steps': 1,
        }

    def run_epoch(self):
        epoch = self.epoch + 1
        order = seeding.derive_rng(self.cfg.seed, seeding.EPOCH, epoch).permutation(self.high.shape[0])
        steps = self.high.shape[0] // self.cfg.minibatch
        d_losses, g_losses, reals, fakes, everything = [], [], [], [], []
        d_steps = g_steps = 0
        for step in range(steps):
            idx = order[step * self.cfg.minibatch:(step + 1) * self.cfg.minibatch]
            stats = self.train_step(*self._batch(idx, epoch, step))
            d_losses.append(stats['d_loss'])
            g_losses.append(stats['g_loss'])
            reals.append(stats['d_real'])
            fakes.append(stats['d_fake'])
            everything.append(stats['d_outputs'])
            d_steps += stats['d_steps']
            g_steps += stats['g_steps']

        outputs = np.concatenate(everything).astype(np.float64)
        early_stop = bool(np.max(np.abs(outputs - 0.5)) < self.cfg.equilibrium_eps)
        entry = EpochLog(
            epoch=epoch,
            d_loss=float(np.mean(d_losses)),
            g_loss=float(np.mean(g_losses)),
            mean_d_real=float(np.mean(np.concatenate(reals), dtype=np.float64)),
            mean_d_fake=float(np.mean(np.concatenate(fakes), dtype=np.float64)),
            d_steps=d_steps,
            g_steps=g_steps,
            early_stop=early_stop,
        )
        self.log.append(entry)
        self.epoch = epoch
        self.stopped = early_stop
        logger.info(f"cGAN F_L={self.cfg.f_low / 1e6:g} MHz epoch {epoch}: d_loss={entry.d_loss:.4f} "
                    f"g_loss={entry.g_loss:.4f} D(real)={entry.mean_d_real:.3f} D(fake)={entry.mean_d_fake:.3f}"
                    + (" [equilibrium]" if early_stop else ""))
        return entry

    def run(self, on_epoch=None):
        while self.epoch < self.cfg.epochs and not self.stopped:
            entry = self.run_epoch()
            if on_epoch is not None:
                on_epoch(self, entry)
        return self.result()

    def result(self):
        return TrainedGenerator(self.generator, self.cfg.f_low, self.embedder, list(self.log))

    def state_arrays(self):
        """Everything needed to continue this run bit-identically, as named arrays."""
        arrays = {'epoch': np.array(self.epoch), 'stopped': np.array(self.stopped),
                  'd_step': np.array(self.d_state.step), 'g_step': np.array(self.g_state.step),
                  'log': np.array([[getattr(e, f) for f in LOG_FIELDS] for e in self.log], dtype=np.float64)
                  .reshape(-1, len(LOG_FIELDS))}
        for prefix, values in (('d', self.d_params), ('g', self.g_params),
                               ('dm', self.d_state.moments()), ('gm', self.g_state.moments())):
            for i, value in enumerate(values):
                arrays[f'{prefix}_{i}'] = value
        return arrays

    def restore(self, arrays):
        def block(prefix, count):
            return [arrays[f'{prefix}_{i}'] for i in range(count)]

        for param, value in zip(self.d_params, block('d', len(self.d_params))):
            param[...] = value
        for param, value in zip(self.g_params, block('g', len(self.g_params))):
            param[...] = value
        self.d_state.load_moments(block('dm', 2 * len(self.d_params)), arrays['d_step'])
        self.g_state.load_moments(block('gm', len(self.g_params)), arrays['g_step'])
        self.epoch = int(arrays['epoch'])
        self.stopped = bool(arrays['stopped'])
        self.log = [EpochLog(int(row[0]), float(row[1]), float(row[2]), float(row[3]), float(row[4]),
                             int(row[5]), int(row[6]), bool(row[7]))
                    for row in arrays['log']]
        logger.info(f"Resumed cGAN training after epoch {self.epoch}")


def train_cgan(high, low, labels, cfg, emitter_count=None, on_epoch=None):
    """Train a cGAN on paired (20 MHz, F_L) preambles; returns the trained generator."""
    return CganTrainer(high, low, labels, cfg, emitter_count).run(on_epoch)


def label_head_path(path):
    return Path(path).with_suffix('.label.seiw')


def save_generator(trained, path, config_hash=''):
    extra = {'f_low': trained.f_low, 'emitters': trained.embedder.emitter_count, 'embed_seed': trained.embedder.seed}
    save_network(trained.generator, path, config_hash, extra=extra)
    save_network(trained.embedder.head(low_width(trained.f_low)), label_head_path(path), config_hash)


def load_generator(path, hint=None, expected_hash=None):
    generator, config_hash, extra = load_network(path, hint=hint, expected_hash=expected_hash)
    try:
        f_low, emitters, embed_seed = float(extra['f_low']), int(extra['emitters']), int(extra['embed_seed'])
    except KeyError as exc:
        raise DatasetFormatError(f"{path}: not a generator checkpoint (missing {exc})") from exc
    embedder = LabelEmbedder(emitters, embed_seed)
    head_path = label_head_path(path)
    if not head_path.exists():
        raise MissingPrerequisite(f"label head checkpoint not found: {head_path}", hint=hint)
    head, _, _ = load_network(head_path, hint=hint, expected_hash=expected_hash)
    embedder.head(low_width(f_low)).set_weights(head.params)
    return TrainedGenerator(generator, f_low, embedder), config_hash


def write_training_log(path, log, config_hash=''):
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        if config_hash:
            handle.write(f"# config_sha256={config_hash}\n")
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(LOG_FIELDS)
        for entry in log:
            writer.writerow(entry.as_row())
