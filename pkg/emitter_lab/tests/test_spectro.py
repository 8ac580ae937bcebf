import numpy as np
from django.test import SimpleTestCase

from emitter_lab.spectro import (
    SpectroConfig, augmented_signal_count, burst_train, channel_independent_spectrogram, online_augment,
    required_samples, spectro_width, stft_magnitude,
)
from emitter_lab.synthesis import ComplexSequence, synth_clean_preamble


def noise_sequence(length, fs, seed=0):
    rng = np.random.default_rng(seed)
    return ComplexSequence(rng.standard_normal(length) + 1j * rng.standard_normal(length), fs)


class WidthTests(SimpleTestCase):

    def test_lora_example(self):
        cfg = SpectroConfig(f_l=250e3, n=64, r=32, sf=7, bandwidth_hz=125e3)
        self.assertEqual(spectro_width(cfg), 63)
        self.assertEqual(required_samples(cfg), 2048)

    def test_wifi_widths_use_the_same_span(self):
        for f_l in (2.5e6, 5e6, 10e6):
            cfg = SpectroConfig(f_l=f_l)
            self.assertAlmostEqual(cfg.span_samples, SpectroConfig(f_l=5e6).span_samples)

    def test_span_shorter_than_window(self):
        with self.assertRaises(ValueError):
            spectro_width(SpectroConfig(f_l=250e3, n=4096, r=32, sf=7, bandwidth_hz=125e3))

    def test_window_must_be_multiple_of_hop(self):
        with self.assertRaises(ValueError):
            SpectroConfig(f_l=5e6, n=64, r=24)


class SpectrogramTests(SimpleTestCase):

    def test_output_drops_one_column(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            r = int(rng.choice([8, 16, 32]))
            n = r * int(rng.integers(1, 5))
            cfg = SpectroConfig(f_l=250e3, n=n, r=r, sf=int(rng.integers(6, 9)), bandwidth_hz=125e3)
            m = spectro_width(cfg)
            sig = noise_sequence(required_samples(cfg), cfg.f_l, seed=int(rng.integers(1000)))
            self.assertEqual(stft_magnitude(sig, cfg).shape, (n, m))
            self.assertEqual(channel_independent_spectrogram(sig, cfg).shape, (n, m - 1))

    def test_constant_gain_cancels(self):
        cfg = SpectroConfig(f_l=250e3, n=64, r=32, sf=7, bandwidth_hz=125e3)
        sig = noise_sequence(required_samples(cfg), cfg.f_l)
        scaled = ComplexSequence(sig.samples * (0.3 - 1.7j), sig.fs)
        np.testing.assert_allclose(channel_independent_spectrogram(scaled, cfg),
                                   channel_independent_spectrogram(sig, cfg), atol=1e-6)

    def test_stft_matches_windowed_dft(self):
        cfg = SpectroConfig(f_l=250e3, n=64, r=32, sf=7, bandwidth_hz=125e3)
        n = np.arange(required_samples(cfg))
        tone = ComplexSequence(np.exp(2j * np.pi * 5 * n / 64), cfg.f_l)
        magnitude = stft_magnitude(tone, cfg)
        frame = tone.samples[32:96] * np.hanning(65)[:-1]
        np.testing.assert_allclose(magnitude[:, 1], np.abs(np.fft.fft(frame)), atol=1e-9)
        self.assertEqual(int(np.argmax(magnitude[:, 0])), 5)

    def test_short_signal_rejected(self):
        cfg = SpectroConfig(f_l=250e3, n=64, r=32, sf=7, bandwidth_hz=125e3)
        with self.assertRaisesMessage(ValueError, 'needs 2048 samples'):
            stft_magnitude(noise_sequence(2000, cfg.f_l), cfg)

    def test_rate_mismatch_rejected(self):
        cfg = SpectroConfig(f_l=5e6)
        with self.assertRaises(ValueError):
            channel_independent_spectrogram(noise_sequence(required_samples(cfg), 10e6), cfg)

    def test_burst_train_from_preambles(self):
        cfg = SpectroConfig(f_l=5e6)
        rows = np.tile(synth_clean_preamble(5e6).samples, (20, 1))
        burst = burst_train(rows, required_samples(cfg), 5e6)
        self.assertEqual(len(burst), required_samples(cfg))
        np.testing.assert_array_equal(burst.samples[80:160], rows[1])
        with self.assertRaisesMessage(ValueError, 'cannot fill'):
            burst_train(rows[:2], required_samples(cfg), 5e6)


class AugmentTests(SimpleTestCase):

    def test_signal_count(self):
        self.assertEqual(augmented_signal_count(13, 128, 10), 16640)

    def test_infinite_snr_is_identity(self):
        rows = synth_clean_preamble().samples[np.newaxis]
        np.testing.assert_array_equal(online_augment(rows, (np.inf, np.inf), seed=1), rows)

    def test_seeds_give_different_noise(self):
        rows = np.tile(synth_clean_preamble().samples, (4, 1))
        a = online_augment(rows, (9, 30), seed=1)
        b = online_augment(rows, (9, 30), seed=2)
        self.assertEqual(a.shape, rows.shape)
        self.assertFalse(np.allclose(a, b))
        np.testing.assert_array_equal(a, online_augment(rows, (9, 30), seed=1))

    def test_fixed_snr(self):
        rows = np.tile(synth_clean_preamble().samples, (2, 1))
        noisy = online_augment(rows, (12, 12), seed=3)
        noise = np.mean(np.abs(noisy - rows) ** 2, axis=1)
        signal = np.mean(np.abs(rows) ** 2, axis=1)
        np.testing.assert_allclose(10 * np.log10(signal / noise), 12.0, atol=1e-9)

    def test_empty_minibatch(self):
        with self.assertRaises(ValueError):
            online_augment(np.empty((0, 320), dtype=complex), (9, 30), seed=0)
