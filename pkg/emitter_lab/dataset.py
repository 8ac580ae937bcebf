"""Dataset layout: noisy preamble records, the SEIR file format and the manifest."""
import csv
import logging
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import seeding
from .exceptions import DatasetFormatError, MissingPrerequisite
from .synthesis import (
    FULL_RATE_HZ,
    LOW_RATES_HZ,
    PREAMBLE_LENGTH,
    SNR_GRID_DB,
    ComplexSequence,
    EmitterProfile,
    apply_impairments,
    awgn_rows,
    decimate_rows,
    normalize_power,
    synth_clean_preamble,
)

logger = logging.getLogger(__name__)

MAGIC = b'SEIR'
FORMAT_VERSION = 2
DATASET_RATES_HZ = (FULL_RATE_HZ,) + tuple(sorted(LOW_RATES_HZ, reverse=True))
MANIFEST_NAME = 'manifest.txt'
SPLIT_LEDGER_NAME = 'split.csv'

_HEADER = struct.Struct('<4sHI')
_RECORD_HEAD = np.dtype([
    ('emitter_id', '<u2'),
    ('snr_db', '<f4'),
    ('realization', '<u2'),
    ('fs_khz', '<u4'),
    ('length', '<u4'),
])


def _record_dtype(length):
    return np.dtype(_RECORD_HEAD.descr + [('iq', '<f4', (length, 2))])


@dataclass(frozen=True)
class PreambleRecord:
    """One labeled example: emitter, SNR, noise realization and samples."""
    emitter_id: int
    snr_db: float
    realization: int
    sequence: ComplexSequence

    def __post_init__(self):
        if self.emitter_id < 1:
            raise ValueError(f"emitter_id must be >= 1, got {self.emitter_id}")
        if self.realization < 1:
            raise ValueError(f"realization must be >= 1, got {self.realization}")
        if math.isclose(self.sequence.fs, FULL_RATE_HZ) and len(self.sequence) != PREAMBLE_LENGTH:
            raise ValueError(f"a 20 MHz preamble has {PREAMBLE_LENGTH} samples, got {len(self.sequence)}")


@dataclass(frozen=True)
class DatasetManifest:
    """Everything that determines a generated dataset."""
    fleet: tuple
    seed: int
    per_emitter_count: int = 2000
    train_count_per_realization: int = 1600
    snr_grid: tuple = SNR_GRID_DB
    realizations: int = 10

    def __post_init__(self):
        object.__setattr__(self, 'fleet', tuple(self.fleet))
        object.__setattr__(self, 'snr_grid', tuple(float(s) for s in self.snr_grid))
        if not self.fleet:
            raise ValueError("fleet must contain at least one emitter")
        ids = [profile.emitter_id for profile in self.fleet]
        if len(set(ids)) != len(ids):
            raise ValueError(f"emitter ids must be unique, got {ids}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not 0 < self.train_count_per_realization < self.per_emitter_count:
            raise ValueError(
                f"train_count ({self.train_count_per_realization}) must be positive and smaller "
                f"than per_emitter_count ({self.per_emitter_count})"
            )
        if not self.snr_grid or any(b <= a for a, b in zip(self.snr_grid, self.snr_grid[1:])):
            raise ValueError(f"snr_grid must be nonempty and strictly increasing, got {self.snr_grid}")
        if self.realizations < 1:
            raise ValueError(f"realizations must be >= 1, got {self.realizations}")

    @property
    def emitter_ids(self):
        return tuple(profile.emitter_id for profile in self.fleet)

    @property
    def test_count_per_realization(self):
        return self.per_emitter_count - self.train_count_per_realization


@dataclass
class RecordBatch:
    """Column view of many records sharing one sampling frequency."""
    emitter_ids: np.ndarray
    snr_db: np.ndarray
    realizations: np.ndarray
    fs: float
    samples: np.ndarray

    def __len__(self):
        return self.emitter_ids.size

    @property
    def width(self):
        return self.samples.shape[1]

    def select(self, mask):
        return RecordBatch(
            emitter_ids=self.emitter_ids[mask],
            snr_db=self.snr_db[mask],
            realizations=self.realizations[mask],
            fs=self.fs,
            samples=self.samples[mask],
        )

    def at_snr(self, snr_db):
        return self.select(np.isclose(self.snr_db, snr_db))

    def records(self):
        for i in range(len(self)):
            yield PreambleRecord(
                emitter_id=int(self.emitter_ids[i]),
                snr_db=float(self.snr_db[i]),
                realization=int(self.realizations[i]),
                sequence=ComplexSequence(self.samples[i], self.fs),
            )


@dataclass
class DatasetSummary:
    base_preambles: int
    counts: dict = field(default_factory=dict)


def dataset_file_name(split, fs):
    return f"{split}_{int(round(fs / 1e3))}k.seir"


def encode_records(emitter_ids, snr_db, realizations, fs, samples):
    """Pack a block of equal-length records into SEIR record bytes (no file header)."""
    samples = np.asarray(samples)
    block = np.zeros(samples.shape[0], dtype=_record_dtype(samples.shape[1]))
    block['emitter_id'] = emitter_ids
    block['snr_db'] = snr_db
    block['realization'] = realizations
    block['fs_khz'] = int(round(fs / 1e3))
    block['length'] = samples.shape[1]
    block['iq'][..., 0] = samples.real
    block['iq'][..., 1] = samples.imag
    return block.tobytes()


def write_header(handle, fs):
    handle.write(_HEADER.pack(MAGIC, FORMAT_VERSION, int(round(fs / 1e3))))


def read_records(path):
    """Read a SEIR file into a :class:`RecordBatch`."""
    path = Path(path)
    try:
        payload = path.read_bytes()
    except FileNotFoundError as exc:
        raise MissingPrerequisite(f"dataset file not found: {path}") from exc
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc

    if len(payload) < _HEADER.size:
        raise DatasetFormatError(f"{path}: truncated header")
    magic, version, fs_khz = _HEADER.unpack_from(payload)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported format version {version}")
    if fs_khz == 0:
        raise DatasetFormatError(f"{path}: header carries no sampling frequency")
    fs = float(fs_khz) * 1e3

    body = memoryview(payload)[_HEADER.size:]
    if not body:
        width = int(round(PREAMBLE_LENGTH * fs / FULL_RATE_HZ))
        return RecordBatch(np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.int64), fs,
                           np.zeros((0, width), np.complex64))

    first = np.frombuffer(body, dtype=_RECORD_HEAD, count=1)[0]
    dtype = _record_dtype(int(first['length']))
    if len(body) % dtype.itemsize:
        raise DatasetFormatError(f"{path}: records do not share one length or the file is truncated")
    block = np.frombuffer(body, dtype=dtype)
    if np.any(block['length'] != first['length']) or np.any(block['fs_khz'] != fs_khz):
        raise DatasetFormatError(f"{path}: every record must match the header rate of {fs_khz} kHz")

    iq = block['iq'].astype(np.float32)
    return RecordBatch(
        emitter_ids=block['emitter_id'].astype(np.int64),
        snr_db=block['snr_db'].astype(np.float64),
        realizations=block['realization'].astype(np.int64),
        fs=fs,
        samples=(iq[..., 0] + 1j * iq[..., 1]).astype(np.complex64),
    )


def write_manifest(path, manifest, config_hash=''):
    lines = [
        'format=SEIR',
        f'version={FORMAT_VERSION}',
        f'seed={manifest.seed}',
        f'config_sha256={config_hash}',
        f'per_emitter_count={manifest.per_emitter_count}',
        f'train_count_per_realization={manifest.train_count_per_realization}',
        f'realizations={manifest.realizations}',
        'snr_grid=' + ','.join(f'{snr:g}' for snr in manifest.snr_grid),
        'rates_hz=' + ','.join(f'{rate:.0f}' for rate in DATASET_RATES_HZ),
        f'emitters={len(manifest.fleet)}',
    ]
    for profile in manifest.fleet:
        prefix = f'emitter.{profile.emitter_id}'
        dc = complex(profile.dc_offset)
        lines += [
            f'{prefix}.iq_gain_imbalance={profile.iq_gain_imbalance!r}',
            f'{prefix}.iq_phase_imbalance={profile.iq_phase_imbalance!r}',
            f'{prefix}.cfo={profile.cfo!r}',
            f'{prefix}.phase_noise_std={profile.phase_noise_std!r}',
            f'{prefix}.dc_offset_re={dc.real!r}',
            f'{prefix}.dc_offset_im={dc.imag!r}',
            f'{prefix}.pa_gain_compression={profile.pa_gain_compression!r}',
        ]
    Path(path).write_text('\n'.join(lines) + '\n', encoding='utf-8')


def read_manifest(path):
    """Parse a manifest file; returns ``(DatasetManifest, config_hash)``."""
    path = Path(path)
    if not path.exists():
        raise MissingPrerequisite(f"dataset manifest not found: {path}")
    values = {}
    for number, line in enumerate(path.read_text(encoding='utf-8').splitlines(), start=1):
        if not line.strip() or line.startswith('#'):
            continue
        if '=' not in line:
            raise DatasetFormatError(f"{path}:{number}: expected key=value, got {line!r}")
        key, value = line.split('=', 1)
        values[key.strip()] = value.strip()

    try:
        fleet = []
        for emitter_id in range(1, int(values['emitters']) + 1):
            prefix = f'emitter.{emitter_id}'
            fleet.append(EmitterProfile(
                emitter_id=emitter_id,
                iq_gain_imbalance=float(values[f'{prefix}.iq_gain_imbalance']),
                iq_phase_imbalance=float(values[f'{prefix}.iq_phase_imbalance']),
                cfo=float(values[f'{prefix}.cfo']),
                phase_noise_std=float(values[f'{prefix}.phase_noise_std']),
                dc_offset=complex(float(values[f'{prefix}.dc_offset_re']),
                                  float(values[f'{prefix}.dc_offset_im'])),
                pa_gain_compression=float(values[f'{prefix}.pa_gain_compression']),
            ))
        manifest = DatasetManifest(
            fleet=fleet,
            seed=int(values['seed']),
            per_emitter_count=int(values['per_emitter_count']),
            train_count_per_realization=int(values['train_count_per_realization']),
            snr_grid=[float(s) for s in values['snr_grid'].split(',')],
            realizations=int(values['realizations']),
        )
    except KeyError as exc:
        raise DatasetFormatError(f"{path}: missing key {exc.args[0]}") from exc
    return manifest, values.get('config_sha256', '')


def split_indices(manifest, emitter_id):
    """Training and test preamble indices of one emitter (shared by every SNR and realization)."""
    order = seeding.derive_rng(manifest.seed, seeding.SPLIT, emitter_id).permutation(manifest.per_emitter_count)
    train = np.sort(order[:manifest.train_count_per_realization])
    test = np.sort(order[manifest.train_count_per_realization:])
    return train, test


def impaired_preambles(manifest, profile):
    """Unit-power impaired preambles of one emitter, shape (per_emitter_count, 320)."""
    clean = synth_clean_preamble(FULL_RATE_HZ)
    rows = np.empty((manifest.per_emitter_count, PREAMBLE_LENGTH), dtype=np.complex128)
    for index in range(manifest.per_emitter_count):
        seed = seeding.derive_seed(manifest.seed, seeding.IMPAIRMENT, profile.emitter_id, index)
        rows[index] = apply_impairments(clean, profile, seed).samples
    return normalize_power(rows)


def _generate_cell_block(manifest, profile, snr_index, base):
    """Encode every record of one (emitter, SNR) pair for every rate and split."""
    snr = manifest.snr_grid[snr_index]
    train_idx, test_idx = split_indices(manifest, profile.emitter_id)
    chunks = {(split, rate): [] for split in ('train', 'test') for rate in DATASET_RATES_HZ}

    for realization in range(1, manifest.realizations + 1):
        rng = seeding.derive_rng(manifest.seed, seeding.NOISE, profile.emitter_id, snr_index, realization)
        noisy = awgn_rows(base, FULL_RATE_HZ, snr, rng)
        for split, idx in (('train', train_idx), ('test', test_idx)):
            high = noisy[idx]
            for rate in DATASET_RATES_HZ:
                rows, _ = decimate_rows(high, FULL_RATE_HZ, int(round(FULL_RATE_HZ / rate)))
                count = rows.shape[0]
                chunks[(split, rate)].append(encode_records(
                    np.full(count, profile.emitter_id), np.full(count, snr),
                    np.full(count, realization), rate, rows,
                ))
    return {key: b''.join(parts) for key, parts in chunks.items()}


def _generate_emitter_block(manifest, profile):
    """Encode every record of one emitter, SNR by SNR, from a single set of impaired preambles."""
    base = impaired_preambles(manifest, profile)
    cells = [_generate_cell_block(manifest, profile, snr_index, base)
             for snr_index in range(len(manifest.snr_grid))]
    return {key: b''.join(cell[key] for cell in cells) for key in cells[0]}


def _emitter_job(args):
    return _generate_emitter_block(*args)


def build_dataset(manifest, out_dir, config_hash='', workers=1, progress=None):
    """Generate and persist the dataset described by ``manifest`` under ``out_dir``.

    Writes one SEIR file per (split, rate), the manifest and the split ledger.
    Output bytes depend only on the manifest.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {out_dir}: {exc}") from exc

    jobs = [(manifest, profile) for profile in manifest.fleet]
    logger.info(f"Generating {len(manifest.fleet)} emitters x {manifest.per_emitter_count} preambles "
                f"x {len(manifest.snr_grid)} SNRs x {manifest.realizations} realizations into {out_dir}")

    paths = {(split, rate): out_dir / dataset_file_name(split, rate)
             for split in ('train', 'test') for rate in DATASET_RATES_HZ}
    handles = {}
    try:
        for key, path in paths.items():
            handles[key] = open(path, 'wb')
            write_header(handles[key], key[1])

        if workers > 1:
            executor = ProcessPoolExecutor(max_workers=workers)
            blocks = executor.map(_emitter_job, jobs)
        else:
            executor = None
            blocks = map(_emitter_job, jobs)
        try:
            for block in blocks:
                for key, payload in block.items():
                    handles[key].write(payload)
                if progress is not None:
                    progress(len(manifest.snr_grid))
        finally:
            if executor is not None:
                executor.shutdown()
    except OSError as exc:
        logger.error(f"Dataset write failed: {exc}")
        raise OSError(f"cannot write dataset under {out_dir}: {exc}") from exc
    finally:
        for handle in handles.values():
            handle.close()

    write_manifest(out_dir / MANIFEST_NAME, manifest, config_hash)
    with open(out_dir / SPLIT_LEDGER_NAME, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(['emitter_id', 'preamble_index', 'split'])
        for profile in manifest.fleet:
            train_idx, test_idx = split_indices(manifest, profile.emitter_id)
            labels = np.full(manifest.per_emitter_count, 'test', dtype=object)
            labels[train_idx] = 'train'
            for index, label in enumerate(labels):
                writer.writerow([profile.emitter_id, index, label])

    summary = DatasetSummary(base_preambles=len(manifest.fleet) * manifest.per_emitter_count)
    for profile in manifest.fleet:
        for snr in manifest.snr_grid:
            summary.counts[(profile.emitter_id, snr)] = {
                'train': manifest.train_count_per_realization * manifest.realizations,
                'test': manifest.test_count_per_realization * manifest.realizations,
            }
    logger.info(f"Dataset complete: {summary.base_preambles} base preambles")
    return summary


def load_split(dataset_dir, split, fs):
    """Load the ``split`` records at sampling frequency ``fs`` from ``dataset_dir``."""
    return read_records(Path(dataset_dir) / dataset_file_name(split, fs))


def read_split_ledger(dataset_dir):
    """Return ``{emitter_id: (train_indices, test_indices)}`` from the split ledger."""
    path = Path(dataset_dir) / SPLIT_LEDGER_NAME
    if not path.exists():
        raise MissingPrerequisite(f"split ledger not found: {path}")
    ledger = {}
    with open(path, newline='', encoding='utf-8') as handle:
        for row in csv.DictReader(handle):
            train, test = ledger.setdefault(int(row['emitter_id']), ([], []))
            (train if row['split'] == 'train' else test).append(int(row['preamble_index']))
    return ledger
