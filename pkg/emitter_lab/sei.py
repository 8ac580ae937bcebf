"""Specific emitter identification: the CNN classifier, accuracy reports and the
method comparison (cGAN, CNN-only, LAI, CSI, full-rate reference).
"""
import copy
import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import seeding
from .cgan import discriminator_trunk, load_generator, low_width
from .dataset import load_split
from .exceptions import MissingPrerequisite, ShapeError
from .nn import AdamState, Network, adam_step, dense, loss_categorical_ce, softmax
from .nn.checkpoint import load_network, save_network
from .resample import upsample_rows
from .spectro import online_augment
from .synthesis import FULL_RATE_HZ, PREAMBLE_LENGTH
from .tensorize import PreambleTensor, tensorize_rows

logger = logging.getLogger(__name__)

METHODS = ('cgan', 'cnn_only', 'lai', 'csi', 'full_rate')
GRID_METHODS = ('cgan', 'cnn_only', 'lai', 'csi')
DEFAULT_TRAIN_SNR_MAP = ((9, 9), (12, 9), (15, 9), (18, 12), (21, 15), (24, 15), (27, 15), (30, 18))
REPORT_FIELDS = ('method', 'f_low_hz', 'snr_db', 'emitter_id', 'accuracy_pct')
PLOTDATA_FIELDS = ('figure', 'series', 'f_low_hz', 'snr_db', 'emitter_id', 'accuracy_pct')
CLASSIFIER_LOG_FIELDS = ('epoch', 'train_loss', 'val_loss', 'val_accuracy', 'best')


class TrainSnrMap:
    """Test SNR -> SNR of the data the classifier for that test SNR is trained on."""

    def __init__(self, pairs=DEFAULT_TRAIN_SNR_MAP):
        self.pairs = tuple((float(test), float(train)) for test, train in pairs)
        for test, train in self.pairs:
            if train > test:
                raise ValueError(f"train SNR {train:g} dB exceeds its test SNR {test:g} dB")
        tests = [test for test, _ in self.pairs]
        if len(set(tests)) != len(tests):
            raise ValueError(f"duplicate test SNRs in map: {tests}")

    def train_snr(self, test_snr):
        for test, train in self.pairs:
            if np.isclose(test, test_snr):
                return train
        raise ValueError(f"no train SNR mapped for test SNR {test_snr:g} dB")

    @property
    def test_snrs(self):
        return tuple(test for test, _ in self.pairs)

    @property
    def train_snrs(self):
        return tuple(sorted({train for _, train in self.pairs}))


def build_classifier(width, classes, seed):
    """Discriminator-style conv trunk with a softmax head over ``classes`` emitters."""
    return Network(discriminator_trunk() + [dense(classes), softmax()], (4, width, 1), seed=seed,
                   name=f'classifier-{width}')


@dataclass(frozen=True)
class ClassifierConfig:
    seed: int = 0
    epochs: int = 200
    patience: int = 20
    holdout_fraction: float = 0.1
    minibatch: int = 128
    lr: float = 1e-3
    l2: float = 1e-4
    augment: tuple = None

    def __post_init__(self):
        if self.epochs < 1 or self.patience < 1 or self.minibatch < 1:
            raise ValueError("epochs, patience and minibatch must be positive")
        if not 0 < self.holdout_fraction < 1:
            raise ValueError(f"holdout_fraction must lie in (0, 1), got {self.holdout_fraction}")


@dataclass
class ClassifierEpoch:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    best: bool

    def as_row(self):
        return [self.epoch, f"{self.train_loss:.6f}", f"{self.val_loss:.6f}", f"{self.val_accuracy:.4f}",
                int(self.best)]


class ClassifierTrainer:
    """Adam + l2 training with a held-out early-stopping set.

    ``tensors`` is (N, 4, W) or (N, 4, W, 1); labels are emitter ids 1..R.
    With ``cfg.augment = (snr_low, snr_high)`` and ``rows`` (the complex
    preambles behind ``tensors``) every training minibatch is re-noised.
    """

    def __init__(self, tensors, labels, cfg, classes=None, rows=None):
        tensors = np.asarray(tensors)
        if tensors.ndim == 3:
            tensors = tensors[..., np.newaxis]
        labels = np.asarray(labels).astype(np.int64)
        if tensors.shape[0] == 0:
            raise ValueError("empty classifier training set")
        if labels.shape != (tensors.shape[0],) or labels.min() < 1:
            raise ValueError(f"expected {tensors.shape[0]} emitter ids >= 1, got shape {labels.shape}")
        if cfg.augment is not None and rows is None:
            raise ValueError("online augmentation needs the complex preambles behind the tensors")
        self.cfg = cfg
        self.classes = int(classes or labels.max())
        self.net = build_classifier(tensors.shape[2], self.classes,
                                    seeding.derive_seed(cfg.seed, seeding.INIT, tensors.shape[2]))
        self.state = AdamState.for_params(self.net.params, lr=cfg.lr, l2=cfg.l2)

        order = seeding.derive_rng(cfg.seed, seeding.HOLDOUT).permutation(tensors.shape[0])
        held = max(1, int(round(cfg.holdout_fraction * tensors.shape[0]))) if tensors.shape[0] > 1 else 0
        self.val_idx, self.train_idx = np.sort(order[:held]), np.sort(order[held:])
        if self.train_idx.size == 0:
            self.train_idx = self.val_idx
        self.tensors, self.labels, self.rows = tensors, labels, rows
        self.epoch = 0
        self.best_loss = np.inf
        self.best_weights = self.net.get_weights()
        self.stale = 0
        self.log = []

    @property
    def stopped(self):
        return self.stale >= self.cfg.patience

    def _minibatch(self, idx, epoch, step):
        if self.cfg.augment is None:
            return self.tensors[idx]
        seed = seeding.derive_seed(self.cfg.seed, seeding.AUGMENT, epoch, step)
        return tensorize_rows(online_augment(self.rows[idx], self.cfg.augment, seed))[..., np.newaxis]

    def validation(self):
        if self.val_idx.size == 0:
            return 0.0, 1.0
        probs = self.net.predict(self.tensors[self.val_idx])
        loss, _ = loss_categorical_ce(probs, self.labels[self.val_idx] - 1)
        accuracy = float(np.mean(np.argmax(probs, axis=1) + 1 == self.labels[self.val_idx]))
        return loss, accuracy

    def run_epoch(self):
        epoch = self.epoch + 1
        order = self.train_idx[seeding.derive_rng(self.cfg.seed, seeding.EPOCH, epoch).permutation(self.train_idx.size)]
        losses = []
        for step, start in enumerate(range(0, order.size, self.cfg.minibatch)):
            idx = order[start:start + self.cfg.minibatch]
            probs = self.net.forward(self._minibatch(idx, epoch, step))
            loss, grad = loss_categorical_ce(probs, self.labels[idx] - 1)
            self.net.backward(grad, from_logits=True)
            adam_step(self.state, self.net.params, self.net.grads)
            losses.append(loss)

        val_loss, val_accuracy = self.validation()
        best = val_loss < self.best_loss
        if best:
            self.best_loss, self.best_weights, self.stale = val_loss, self.net.get_weights(), 0
        else:
            self.stale += 1
        entry = ClassifierEpoch(epoch, float(np.mean(losses)), float(val_loss), val_accuracy, best)
        self.log.append(entry)
        self.epoch = epoch
        logger.debug(f"{self.net.name} epoch {epoch}: loss={entry.train_loss:.4f} val_loss={val_loss:.4f} "
                     f"val_acc={val_accuracy:.3f}")
        return entry

    def run(self, on_epoch=None):
        while self.epoch < self.cfg.epochs and not self.stopped:
            entry = self.run_epoch()
            if on_epoch is not None:
                on_epoch(self, entry)
        self.net.set_weights(self.best_weights)
        logger.info(f"{self.net.name} trained for {self.epoch} epochs, best held-out loss {self.best_loss:.4f}")
        return self.net

    def state_arrays(self):
        arrays = {'epoch': np.array(self.epoch), 'stale': np.array(self.stale), 'best_loss': np.array(self.best_loss),
                  'step': np.array(self.state.step),
                  'log': np.array([[getattr(e, f) for f in CLASSIFIER_LOG_FIELDS] for e in self.log],
                                  dtype=np.float64).reshape(-1, len(CLASSIFIER_LOG_FIELDS))}
        for prefix, values in (('p', self.net.params), ('b', self.best_weights), ('m', self.state.moments())):
            for i, value in enumerate(values):
                arrays[f'{prefix}_{i}'] = value
        return arrays

    def restore(self, arrays):
        count = len(self.net.params)
        self.net.set_weights([arrays[f'p_{i}'] for i in range(count)])
        self.best_weights = [np.array(arrays[f'b_{i}']) for i in range(count)]
        self.state.load_moments([arrays[f'm_{i}'] for i in range(2 * count)], arrays['step'])
        self.epoch = int(arrays['epoch'])
        self.stale = int(arrays['stale'])
        self.best_loss = float(arrays['best_loss'])
        self.log = [ClassifierEpoch(int(row[0]), float(row[1]), float(row[2]), float(row[3]), bool(row[4]))
                    for row in arrays['log']]


def train_classifier(tensors, labels, cfg, classes=None, rows=None, on_epoch=None):
    """Train an SEI classifier on normalized tensors; returns the network at its best held-out loss."""
    return ClassifierTrainer(tensors, labels, cfg, classes, rows).run(on_epoch)


def classify_probs(probs):
    """Emitter ids (1-based) of the largest probability per row; ties go to the lowest id."""
    return np.argmax(np.asarray(probs), axis=-1) + 1


def classify(net, tensor):
    data = tensor.data if isinstance(tensor, PreambleTensor) else np.asarray(tensor)
    if data.shape != net.input_shape:
        raise ShapeError(f"classifier expects a tensor of shape {net.input_shape}, got {data.shape}")
    return int(classify_probs(net.forward(data[np.newaxis]))[0])


def classify_batch(net, tensors):
    tensors = np.asarray(tensors)
    if tensors.ndim == 3:
        tensors = tensors[..., np.newaxis]
    return classify_probs(net.predict(tensors))


@dataclass
class EvalReport:
    method: str
    f_low: float
    cells: dict = field(default_factory=dict)
    averages: dict = field(default_factory=dict)

    def rows(self):
        """CSV rows at 0.1 % resolution; emitter 0 holds the per-SNR average, missing cells are blank."""
        def fmt(value):
            return '' if value is None else f"{value:.1f}"

        emitters = sorted({eid for _, eid in self.cells})
        out = []
        for snr in sorted(self.averages):
            for eid in emitters:
                out.append([self.method, f"{self.f_low:.0f}", f"{snr:g}", eid, fmt(self.cells.get((snr, eid)))])
            out.append([self.method, f"{self.f_low:.0f}", f"{snr:g}", 0, fmt(self.averages[snr])])
        return out


def evaluate_predictions(predicted, labels, snr_db, method, f_low, snr_grid=None, emitter_ids=None):
    """Accuracy per (SNR, emitter) and per-SNR averages over emitters."""
    predicted, labels, snr_db = np.asarray(predicted), np.asarray(labels), np.asarray(snr_db, dtype=np.float64)
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    snr_grid = sorted(set(snr_db.tolist())) if snr_grid is None else [float(s) for s in snr_grid]
    emitter_ids = sorted(set(labels.tolist())) if emitter_ids is None else list(emitter_ids)
    report = EvalReport(method=method, f_low=float(f_low))
    for snr in snr_grid:
        at_snr = np.isclose(snr_db, snr)
        present = []
        for eid in emitter_ids:
            mask = at_snr & (labels == eid)
            if mask.any():
                value = 100.0 * float(np.mean(predicted[mask] == labels[mask]))
                present.append(value)
            else:
                value = None
            report.cells[(snr, int(eid))] = value
        report.averages[snr] = float(np.mean(present)) if present else None
    return report


def evaluate(net, tensors, labels, snr_db, method, f_low, **options):
    """Classify ``tensors`` with ``net`` and build an :class:`EvalReport`."""
    return evaluate_predictions(classify_batch(net, tensors), labels, snr_db, method, f_low, **options)


def write_report_csv(path, report, config_hash=''):
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        if config_hash:
            handle.write(f"# config_sha256={config_hash}\n")
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(REPORT_FIELDS)
        writer.writerows(report.rows())


def write_classifier_log(path, log, config_hash=''):
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        if config_hash:
            handle.write(f"# config_sha256={config_hash}\n")
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(CLASSIFIER_LOG_FIELDS)
        for entry in log:
            writer.writerow(entry.as_row())


def report_file_name(report):
    return f"report_{report.method}_{report.f_low / 1e3:.0f}k.csv"


def _series_label(report):
    return f"{report.method}@{report.f_low / 1e6:g}MHz"


def plotdata_rows(reports):
    """Plot-ready series: cGAN vs CNN-only and LAI vs CSI averages, and per-emitter curves for every report."""
    figures = (('cgan_vs_cnn_only', ('cgan', 'cnn_only')), ('lai_vs_csi', ('lai', 'csi')))
    rows = []
    for figure, methods in figures:
        for report in reports:
            if report.method not in methods:
                continue
            for snr in sorted(report.averages):
                value = report.averages[snr]
                rows.append([figure, _series_label(report), f"{report.f_low:.0f}", f"{snr:g}", 0,
                             '' if value is None else f"{value:.1f}"])
    for report in reports:
        for (snr, eid), value in sorted(report.cells.items(), key=lambda item: (item[0][1], item[0][0])):
            rows.append(['per_emitter', f"{_series_label(report)}/emitter{eid}", f"{report.f_low:.0f}", f"{snr:g}",
                         eid, '' if value is None else f"{value:.1f}"])
    return rows


def write_plotdata(path, reports, config_hash=''):
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        if config_hash:
            handle.write(f"# config_sha256={config_hash}\n")
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(PLOTDATA_FIELDS)
        writer.writerows(plotdata_rows(reports))


def _augment_suffix(augmented):
    return '_aug' if augmented else ''


def classifier_file_name(width, train_snr, augmented=False):
    return f"classifier_{width}w_{train_snr:g}db{_augment_suffix(augmented)}.seiw"


def generator_file_name(f_low, augmented=False):
    return f"cgan_{f_low / 1e3:.0f}k{_augment_suffix(augmented)}.seiw"


def train_command(stage, f_low=None, config='<config>', augment=False, force=False):
    command = f"python manage.py train --config {config} --stage {stage}"
    if f_low is not None:
        command += f" --f-low {f_low / 1e6:g}"
    if augment:
        command += " --augment"
    if force:
        command += " --force"
    return command


@dataclass(frozen=True)
class ComparisonConfig:
    classifier: ClassifierConfig
    snr_map: TrainSnrMap
    emitter_count: int
    realizations: int = None
    train_realizations: int = None
    config_path: str = '<config>'
    config_hash: str = ''
    workers: int = 1

    @property
    def augmented(self):
        """Checkpoints of an augmented run live under their own ``_aug`` names."""
        return self.classifier.augment is not None


def training_rows(dataset_dir, fs, train_snr, realizations=None):
    """Training records at ``fs`` and ``train_snr`` (optionally the first ``realizations`` only)."""
    batch = load_split(dataset_dir, 'train', fs).at_snr(train_snr)
    if realizations is not None:
        batch = batch.select(batch.realizations <= realizations)
    if len(batch) == 0:
        raise ValueError(f"no training records at {train_snr:g} dB and {fs:g} Hz in {dataset_dir}")
    return batch


def classifier_trainer(dataset_dir, fs, train_snr, cfg):
    """A :class:`ClassifierTrainer` over the training records at ``fs`` and ``train_snr``."""
    batch = training_rows(dataset_dir, fs, train_snr, cfg.train_realizations)
    rows = batch.samples.astype(np.complex128)
    logger.info(f"Classifier for {fs / 1e6:g} MHz at {train_snr:g} dB: {len(batch)} training records")
    return ClassifierTrainer(tensorize_rows(rows), batch.emitter_ids, cfg.classifier, cfg.emitter_count,
                             rows=rows if cfg.classifier.augment else None)


def save_classifier(net, path, train_snr, config_hash=''):
    save_network(net, path, config_hash, extra={'width': net.input_shape[1], 'train_snr_db': train_snr})


def classifier_for(dataset_dir, checkpoint_dir, width, fs, train_snr, cfg):
    """Load the cached classifier for (width, train SNR) or train and cache it."""
    path = Path(checkpoint_dir) / classifier_file_name(width, train_snr, cfg.augmented)
    if path.exists():
        hint = train_command('classifier', None, cfg.config_path, cfg.augmented, force=True)
        net, _, _ = load_network(path, hint=hint, expected_hash=cfg.config_hash)
        return net
    net = classifier_trainer(dataset_dir, fs, train_snr, cfg).run()
    save_classifier(net, path, train_snr, cfg.config_hash)
    return net


def _test_tensors(method, batch, f_low, generator):
    rows = batch.samples.astype(np.complex128)
    if method in ('full_rate', 'cnn_only'):
        return tensorize_rows(rows)
    factor = int(round(FULL_RATE_HZ / f_low))
    if method in ('lai', 'csi'):
        return tensorize_rows(upsample_rows(method, rows, factor))
    return generator.upsample_rows(rows, batch.emitter_ids)


def run_comparison(dataset_dir, checkpoint_dir, f_lows, methods, cfg, progress=None):
    """Evaluate every (F_L, method) pair plus the full-rate reference; returns the reports in order."""
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}; expected a subset of {METHODS}")
    checkpoint_dir = Path(checkpoint_dir)

    generators = {}
    if 'cgan' in methods:
        for f_low in f_lows:
            path = checkpoint_dir / generator_file_name(f_low, cfg.augmented)
            if not path.exists():
                raise MissingPrerequisite(f"cGAN checkpoint not found: {path}",
                                          hint=train_command('cgan', f_low, cfg.config_path, cfg.augmented))
            hint = train_command('cgan', f_low, cfg.config_path, cfg.augmented, force=True)
            generators[f_low], _ = load_generator(path, hint=hint, expected_hash=cfg.config_hash)

    jobs = [(method, f_low) for f_low in f_lows for method in GRID_METHODS if method in methods]
    jobs.append(('full_rate', FULL_RATE_HZ))

    classifiers = {}
    for method, f_low in jobs:
        width = low_width(f_low) if method == 'cnn_only' else PREAMBLE_LENGTH
        fs = f_low if method == 'cnn_only' else FULL_RATE_HZ
        for train_snr in cfg.snr_map.train_snrs:
            if (width, train_snr) not in classifiers:
                classifiers[(width, train_snr)] = classifier_for(dataset_dir, checkpoint_dir, width, fs, train_snr, cfg)

    def run_job(job):
        method, f_low = job
        test = load_split(dataset_dir, 'test', f_low if method != 'full_rate' else FULL_RATE_HZ)
        if cfg.realizations is not None:
            test = test.select(test.realizations <= cfg.realizations)
        # Layers cache activations, so every job classifies with its own copies.
        own = {}
        width = low_width(f_low) if method == 'cnn_only' else PREAMBLE_LENGTH
        predicted = np.zeros(len(test), dtype=np.int64)
        for snr in cfg.snr_map.test_snrs:
            mask = np.isclose(test.snr_db, snr)
            if not mask.any():
                continue
            key = (width, cfg.snr_map.train_snr(snr))
            if key not in own:
                own[key] = copy.deepcopy(classifiers[key])
            net = own[key]
            predicted[mask] = classify_batch(net, _test_tensors(method, test.select(mask), f_low, generators.get(f_low)))
        report = evaluate_predictions(predicted, test.emitter_ids, test.snr_db, method, f_low,
                                      snr_grid=cfg.snr_map.test_snrs, emitter_ids=range(1, cfg.emitter_count + 1))
        logger.info(f"Evaluated {method} at F_L={f_low / 1e6:g} MHz")
        if progress is not None:
            progress(1)
        return report

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(run_job, jobs))
    return [run_job(job) for job in jobs]
