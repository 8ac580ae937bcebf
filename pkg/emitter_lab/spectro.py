"""Channel-independent spectrograms and online noise augmentation."""
import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .synthesis import FULL_RATE_HZ, OCCUPIED_HALF_BANDWIDTH_HZ, ComplexSequence, awgn_rows

logger = logging.getLogger(__name__)

SPREADING_FACTOR = 7
SYMBOLS_PER_SPAN = 8
MAGNITUDE_FLOOR = 1e-12


def default_bandwidth_hz(f_l):
    """Occupied 802.11a bandwidth at 20 MHz sampling, scaled by ``f_l / 20 MHz``."""
    return 2 * OCCUPIED_HALF_BANDWIDTH_HZ * f_l / FULL_RATE_HZ


@dataclass(frozen=True)
class SpectroConfig:
    f_l: float
    n: int = 64
    r: int = 32
    sf: int = SPREADING_FACTOR
    bandwidth_hz: float = None

    def __post_init__(self):
        if self.n <= 0 or self.r <= 0:
            raise ValueError(f"window length and hop must be positive, got N={self.n} R={self.r}")
        if self.n % self.r:
            raise ValueError(f"window length N={self.n} must be divisible by the hop R={self.r}")
        if self.sf <= 0 or self.f_l <= 0:
            raise ValueError(f"SF and F_L must be positive, got SF={self.sf} F_L={self.f_l}")
        if self.bandwidth_hz is None:
            object.__setattr__(self, 'bandwidth_hz', default_bandwidth_hz(self.f_l))
        if self.bandwidth_hz <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth_hz}")

    @property
    def span_samples(self):
        """Signal length the width formula accounts for: ``8 * 2^SF / B * F_L``."""
        return SYMBOLS_PER_SPAN * (2 ** self.sf) * self.f_l / self.bandwidth_hz


def spectro_width(cfg):
    """Number of STFT columns ``M = floor((8 * 2^SF / B * F_L - N) / R) + 1``."""
    m = math.floor((cfg.span_samples - cfg.n) / cfg.r + 1e-9) + 1
    if m <= 0:
        raise ValueError(f"signal span of {cfg.span_samples:.1f} samples is shorter than one window (N={cfg.n})")
    return m


def required_samples(cfg):
    return (spectro_width(cfg) - 1) * cfg.r + cfg.n


def stft_magnitude(sig, cfg):
    """|STFT| with a Hann window of length N and hop R: shape (N, M), bin k in row k."""
    m = spectro_width(cfg)
    needed = (m - 1) * cfg.r + cfg.n
    samples = np.asarray(sig.samples)
    if samples.size < needed:
        raise ValueError(f"spectrogram needs {needed} samples at F_L={cfg.f_l} Hz, signal has {samples.size}")
    frames = samples[np.arange(m)[:, np.newaxis] * cfg.r + np.arange(cfg.n)]
    window = signal.get_window('hann', cfg.n)
    return np.abs(np.fft.fft(frames * window, axis=1)).T


def channel_independent_spectrogram(sig, cfg):
    """Log-ratio of adjacent STFT column magnitudes: an N x (M - 1) matrix.

    A constant complex gain on the input cancels in every ratio.
    """
    if not np.isclose(sig.fs, cfg.f_l):
        raise ValueError(f"signal is sampled at {sig.fs} Hz, config expects {cfg.f_l} Hz")
    if spectro_width(cfg) < 2:
        raise ValueError("a channel-independent spectrogram needs at least two STFT columns")
    log_mag = np.log(np.maximum(stft_magnitude(sig, cfg), MAGNITUDE_FLOOR))
    return log_mag[:, 1:] - log_mag[:, :-1]


def burst_train(rows, length, fs):
    """Concatenate consecutive preambles from ``rows`` into one sequence of ``length`` samples."""
    rows = np.atleast_2d(rows)
    flat = rows.reshape(-1)
    if flat.size < length:
        raise ValueError(f"{rows.shape[0]} preambles of {rows.shape[1]} samples cannot fill {length} samples")
    return ComplexSequence(flat[:length], fs)


def online_augment(minibatch, snr_range, seed, fs=FULL_RATE_HZ):
    """Return a noisy copy of ``minibatch`` with fresh like-filtered AWGN.

    One SNR is drawn uniformly from ``snr_range`` for the whole minibatch;
    ``(inf, inf)`` returns an unchanged copy.
    """
    minibatch = np.atleast_2d(np.asarray(minibatch))
    if minibatch.shape[0] == 0:
        raise ValueError("cannot augment an empty minibatch")
    low, high = snr_range
    rng = np.random.default_rng(seed)
    snr_db = low if low >= high else rng.uniform(low, high)
    return awgn_rows(minibatch, fs, snr_db, rng)


def augmented_signal_count(steps, minibatch, realizations):
    """Noisy signals one training pass sees under online augmentation."""
    return steps * minibatch * realizations


def write_spectrogram_csv(path, matrix, config_hash=''):
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        if config_hash:
            handle.write(f"# config_sha256={config_hash}\n")
        writer = csv.writer(handle, lineterminator='\n')
        for row in matrix:
            writer.writerow([f"{value:.6f}" for value in row])
    logger.debug(f"Wrote {matrix.shape[0]}x{matrix.shape[1]} spectrogram to {path}")
