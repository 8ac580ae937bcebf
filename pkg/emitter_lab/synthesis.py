"""802.11a preamble synthesis, emitter impairments, like-filtered AWGN and decimation."""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

logger = logging.getLogger(__name__)

FULL_RATE_HZ = 20e6
SUPPORTED_RATES_HZ = (2.5e6, 5e6, 10e6, 20e6)
LOW_RATES_HZ = (2.5e6, 5e6, 10e6)
PREAMBLE_DURATION_S = 16e-6
PREAMBLE_LENGTH = 320
SNR_GRID_DB = tuple(range(9, 31, 3))

FFT_SIZE = 64
SUBCARRIER_SPACING_HZ = FULL_RATE_HZ / FFT_SIZE
# Edge of the outermost used subcarrier (±26) plus half a bin.
OCCUPIED_HALF_BANDWIDTH_HZ = 26.5 * SUBCARRIER_SPACING_HZ

FILTER_TAPS = 81
ANTI_ALIAS_FRACTION = 0.45


@dataclass(frozen=True, eq=False)
class ComplexSequence:
    """Complex baseband samples with their sampling frequency in Hz."""
    samples: np.ndarray
    fs: float

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.complex128)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError(f"samples must be a nonempty 1-D sequence, got shape {samples.shape}")
        if not (self.fs > 0):
            raise ValueError(f"sampling frequency must be positive, got {self.fs}")
        samples.flags.writeable = False
        object.__setattr__(self, 'samples', samples)
        object.__setattr__(self, 'fs', float(self.fs))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.fs

    def is_finite(self):
        return bool(np.all(np.isfinite(self.samples)))


@dataclass(frozen=True)
class EmitterProfile:
    """RF impairments that fingerprint one emitter.

    iq_gain_imbalance is in dB, iq_phase_imbalance and phase_noise_std in
    radians, cfo in Hz, pa_gain_compression is the cubic coefficient ``a`` of
    ``x * (1 - a * |x|^2)``.
    """
    emitter_id: int
    iq_gain_imbalance: float = 0.0
    iq_phase_imbalance: float = 0.0
    cfo: float = 0.0
    phase_noise_std: float = 0.0
    dc_offset: complex = 0j
    pa_gain_compression: float = 0.0

    def __post_init__(self):
        if int(self.emitter_id) < 1:
            raise ValueError(f"emitter_id must be >= 1, got {self.emitter_id}")
        values = (self.iq_gain_imbalance, self.iq_phase_imbalance, self.cfo,
                  self.phase_noise_std, self.pa_gain_compression,
                  complex(self.dc_offset).real, complex(self.dc_offset).imag)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"emitter {self.emitter_id}: impairment values must be finite")
        if self.phase_noise_std < 0:
            raise ValueError(f"emitter {self.emitter_id}: phase_noise_std must be >= 0")

    @property
    def is_identity(self):
        return (self.iq_gain_imbalance == 0 and self.iq_phase_imbalance == 0 and self.cfo == 0
                and self.phase_noise_std == 0 and self.dc_offset == 0 and self.pa_gain_compression == 0)


# Default fleet table: (cfo kHz, gain dB, phase deg, pa coefficient, dc offset)
_FLEET_TABLE = (
    (-2.0, 0.2, 0.5, 0.010, 0.010 + 0.005j),
    (-0.7, 0.5, 1.0, 0.020, -0.008 + 0.004j),
    (0.7, 0.8, 1.5, 0.015, 0.004 - 0.010j),
    (2.0, 1.1, 2.0, 0.025, -0.006 - 0.006j),
)
_FLEET_PHASE_NOISE_STD = 2e-3


def default_fleet(count=4, spread=1.0, cfo_only=False):
    """Build ``count`` emitter profiles whose impairments scale with ``spread``.

    Up to four emitters use the reference table; larger fleets spread each
    impairment linearly between the table's extremes.
    """
    if count < 1:
        raise ValueError(f"fleet needs at least one emitter, got {count}")
    if count <= len(_FLEET_TABLE):
        rows = _FLEET_TABLE[:count]
    else:
        positions = np.linspace(0, len(_FLEET_TABLE) - 1, count)
        anchors = np.arange(len(_FLEET_TABLE))
        columns = [np.array(col) for col in zip(*_FLEET_TABLE)]
        rows = list(zip(*(
            np.interp(positions, anchors, col.real) + 1j * np.interp(positions, anchors, col.imag)
            if np.iscomplexobj(col) else np.interp(positions, anchors, col)
            for col in columns
        )))

    fleet = []
    for index, (cfo_khz, gain_db, phase_deg, pa, dc) in enumerate(rows, start=1):
        profile = EmitterProfile(
            emitter_id=index,
            cfo=float(cfo_khz) * 1e3 * spread,
            iq_gain_imbalance=float(gain_db) * spread,
            iq_phase_imbalance=math.radians(float(phase_deg)) * spread,
            pa_gain_compression=float(pa) * spread,
            dc_offset=complex(dc) * spread,
            phase_noise_std=_FLEET_PHASE_NOISE_STD,
        )
        if cfo_only:
            profile = EmitterProfile(emitter_id=index, cfo=profile.cfo)
        fleet.append(profile)
    return fleet


def short_training_spectrum():
    """Short training field subcarrier values in FFT bin order."""
    spectrum = np.zeros(FFT_SIZE, dtype=np.complex128)
    values = {
        -24: 1 + 1j, -20: -1 - 1j, -16: 1 + 1j, -12: -1 - 1j, -8: -1 - 1j, -4: 1 + 1j,
        4: -1 - 1j, 8: -1 - 1j, 12: 1 + 1j, 16: 1 + 1j, 20: 1 + 1j, 24: 1 + 1j,
    }
    for k, value in values.items():
        spectrum[k] = value
    return spectrum * math.sqrt(13.0 / 6.0)


def long_training_spectrum():
    """Long training field subcarrier values in FFT bin order."""
    spectrum = np.zeros(FFT_SIZE, dtype=np.complex128)
    spectrum[1:27] = [1, -1, -1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, -1, 1, 1, -1, -1, 1, -1, 1, -1, 1, 1, 1, 1]
    spectrum[-26:] = [1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1]
    return spectrum


def _periodic_field(spectrum, start, count):
    period = np.fft.ifft(spectrum)
    return period[np.arange(start, start + count) % FFT_SIZE]


def _full_rate_preamble():
    # Short field: 10 repetitions of 0.8 us. Long field: 1.6 us guard (second
    # half of the symbol) followed by two symbols, i.e. the periodic symbol from
    # sample 32 onwards.
    short = _periodic_field(short_training_spectrum(), 0, 160)
    long = _periodic_field(long_training_spectrum(), FFT_SIZE // 2, 160)
    return np.concatenate([short, long])


def segment_energy(spectrum, start, count):
    """Energy of samples ``start .. start+count-1`` of the periodic IFFT of ``spectrum``.

    Computed in the frequency domain from the generalized Parseval identity
    ``sum_n |x_n|^2 = N^-2 sum_k sum_l X_k conj(X_l) D(k - l)`` with the Dirichlet
    kernel ``D(d) = sum_n exp(2j pi d n / N)`` over the segment.
    """
    n = spectrum.size
    d = np.subtract.outer(np.arange(n), np.arange(n))
    ratio = np.exp(2j * np.pi * d / n)
    whole = (d % n) == 0
    with np.errstate(divide='ignore', invalid='ignore'):
        kernel = np.where(
            whole,
            float(count),
            np.exp(2j * np.pi * d * start / n) * (1 - ratio ** count) / (1 - ratio),
        )
    energy = np.einsum('k,l,kl->', spectrum, np.conj(spectrum), kernel) / n ** 2
    return float(energy.real)


def preamble_mean_power_spectral():
    """Per-sample mean power of the 20 MHz preamble, computed from its spectra."""
    short = segment_energy(short_training_spectrum(), 0, 160)
    long = segment_energy(long_training_spectrum(), FFT_SIZE // 2, 160)
    return (short + long) / PREAMBLE_LENGTH


def synth_clean_preamble(fs=FULL_RATE_HZ):
    """Return the 16 us short + long training preamble sampled at ``fs``.

    Lower rates are the 20 MHz construction passed through :func:`decimate`.
    """
    if not any(math.isclose(fs, rate) for rate in SUPPORTED_RATES_HZ):
        supported = ', '.join(f"{rate / 1e6:g}" for rate in SUPPORTED_RATES_HZ)
        raise ValueError(f"unsupported sampling frequency {fs} Hz; supported rates are {supported} MHz")
    full = ComplexSequence(_full_rate_preamble(), FULL_RATE_HZ)
    factor = int(round(FULL_RATE_HZ / fs))
    return decimate(full, factor)


def apply_impairments(clean, profile, seed):
    """Pass ``clean`` through the emitter's transmit chain.

    Order: IQ imbalance, DC offset, cubic PA compression, CFO rotation,
    phase-noise random walk. Stages whose parameters are zero are skipped, so the
    identity profile returns the input unchanged.
    """
    if profile.is_identity:
        return clean
    x = np.array(clean.samples, dtype=np.complex128)
    n = np.arange(x.size)

    if profile.iq_gain_imbalance != 0 or profile.iq_phase_imbalance != 0:
        gain = 10.0 ** (profile.iq_gain_imbalance / 20.0)
        phi = profile.iq_phase_imbalance
        mu = (1 + gain * np.exp(-1j * phi)) / 2
        nu = (1 - gain * np.exp(1j * phi)) / 2
        x = mu * x + nu * np.conj(x)
    if profile.dc_offset != 0:
        x = x + complex(profile.dc_offset)
    if profile.pa_gain_compression != 0:
        x = x * (1 - profile.pa_gain_compression * np.abs(x) ** 2)
    if profile.cfo != 0:
        x = x * np.exp(1j * 2 * np.pi * profile.cfo * n / clean.fs)
    if profile.phase_noise_std != 0:
        rng = np.random.default_rng(seed)
        walk = np.cumsum(rng.normal(0.0, profile.phase_noise_std, x.size))
        x = x * np.exp(1j * walk)

    return ComplexSequence(x, clean.fs)


def normalize_power(samples):
    """Scale each row of ``samples`` to unit mean power."""
    samples = np.asarray(samples, dtype=np.complex128)
    power = np.mean(np.abs(samples) ** 2, axis=-1, keepdims=True)
    return samples / np.sqrt(power)


def lowpass_taps(cutoff_hz, fs):
    """81-tap linear-phase Hamming-windowed sinc low-pass."""
    return signal.firwin(FILTER_TAPS, cutoff_hz, window='hamming', fs=fs)


def noise_cutoff_hz(fs):
    """Occupied bandwidth used to like-filter noise at sampling rate ``fs``."""
    return min(OCCUPIED_HALF_BANDWIDTH_HZ, ANTI_ALIAS_FRACTION * fs)


def _filter_rows(samples, taps):
    # Centered ("same") convolution keeps the linear-phase filter zero-delay.
    samples = np.atleast_2d(samples)
    return signal.convolve(samples, taps[np.newaxis, :], mode='same', method='direct')


def awgn_rows(samples, fs, snr_db, rng):
    """Add like-filtered complex AWGN at ``snr_db`` to every row of ``samples``.

    The filtered noise realization is scaled so its realized mean power is
    exactly ``P_signal / 10^(snr/10)`` for each row.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.complex128))
    if not np.all(np.isfinite(samples)):
        raise ValueError("signal contains non-finite samples")
    if math.isinf(snr_db) and snr_db > 0:
        return samples.copy()
    if not math.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite or +inf, got {snr_db}")

    white = (rng.standard_normal(samples.shape) + 1j * rng.standard_normal(samples.shape)) / math.sqrt(2)
    noise = _filter_rows(white, lowpass_taps(noise_cutoff_hz(fs), fs))
    signal_power = np.mean(np.abs(samples) ** 2, axis=-1, keepdims=True)
    noise_power = np.mean(np.abs(noise) ** 2, axis=-1, keepdims=True)
    target = signal_power / 10.0 ** (snr_db / 10.0)
    return samples + noise * np.sqrt(target / noise_power)


def add_awgn(sig, snr_db, seed):
    """Return ``sig`` plus like-filtered AWGN at ``snr_db`` (``+inf`` is a no-op)."""
    if not sig.is_finite():
        raise ValueError("signal contains non-finite samples")
    if math.isinf(snr_db) and snr_db > 0:
        return sig
    noisy = awgn_rows(sig.samples, sig.fs, snr_db, np.random.default_rng(seed))
    return ComplexSequence(noisy[0], sig.fs)


def pick_samples(samples, factor):
    """Keep every ``factor``-th sample along the last axis, starting at index 0."""
    return np.asarray(samples)[..., ::factor]


def decimate_rows(samples, fs, factor):
    """Anti-alias filter and downsample each row by ``factor``; returns (rows, new fs)."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.complex128))
    factor = int(factor)
    if factor < 1:
        raise ValueError(f"decimation factor must be >= 1, got {factor}")
    if samples.shape[-1] % factor:
        raise ValueError(f"decimation factor {factor} does not divide length {samples.shape[-1]}")
    if factor == 1:
        return samples.copy(), fs
    taps = lowpass_taps(ANTI_ALIAS_FRACTION * fs / factor, fs)
    return pick_samples(_filter_rows(samples, taps), factor), fs / factor


def decimate(sig, factor):
    """Downsample ``sig`` by the integer ``factor`` after an anti-alias low-pass."""
    factor = int(factor)
    if factor == 1:
        return sig
    rows, fs = decimate_rows(sig.samples, sig.fs, factor)
    return ComplexSequence(rows[0], fs)


def fingerprint_distance(a, b, fs=FULL_RATE_HZ):
    """RMS difference between the clean preamble as transmitted by ``a`` and by ``b``."""
    clean = synth_clean_preamble(fs)
    xa = apply_impairments(clean, a, seed=0).samples
    xb = apply_impairments(clean, b, seed=0).samples
    return float(np.sqrt(np.mean(np.abs(xa - xb) ** 2)))
