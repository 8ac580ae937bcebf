import math

import numpy as np
from django.test import SimpleTestCase

from emitter_lab.synthesis import (
    FULL_RATE_HZ, PREAMBLE_LENGTH, SNR_GRID_DB, ComplexSequence, EmitterProfile, add_awgn, apply_impairments,
    decimate, decimate_rows, default_fleet, fingerprint_distance, pick_samples, preamble_mean_power_spectral,
    synth_clean_preamble,
)


def measured_snr_db(clean, noisy):
    noise = noisy - clean
    return 10 * math.log10(np.mean(np.abs(clean) ** 2) / np.mean(np.abs(noise) ** 2))


class CleanPreambleTests(SimpleTestCase):

    def test_full_rate_length(self):
        self.assertEqual(len(synth_clean_preamble(FULL_RATE_HZ)), PREAMBLE_LENGTH)

    def test_lower_rate_lengths(self):
        for fs, length in ((10e6, 160), (5e6, 80), (2.5e6, 40)):
            sig = synth_clean_preamble(fs)
            self.assertEqual(len(sig), length)
            self.assertEqual(sig.fs, fs)

    def test_short_field_repeats_every_16_samples(self):
        short = synth_clean_preamble().samples[:160]
        self.assertLess(np.max(np.abs(short[16:] - short[:-16])), 1e-9)

    def test_mean_power_matches_spectral_computation(self):
        samples = synth_clean_preamble().samples
        time_domain = float(np.mean(np.abs(samples) ** 2))
        self.assertAlmostEqual(time_domain / preamble_mean_power_spectral(), 1.0, delta=1e-6)

    def test_unsupported_rate_rejected(self):
        with self.assertRaisesMessage(ValueError, 'unsupported sampling frequency'):
            synth_clean_preamble(7e6)

    def test_sequence_rejects_empty_and_bad_rate(self):
        with self.assertRaises(ValueError):
            ComplexSequence(np.zeros(0), 20e6)
        with self.assertRaises(ValueError):
            ComplexSequence(np.ones(4), 0)

    def test_duration_is_16_microseconds(self):
        for fs in (20e6, 10e6, 5e6, 2.5e6):
            self.assertAlmostEqual(synth_clean_preamble(fs).duration, 16e-6, places=15)


class ImpairmentTests(SimpleTestCase):

    def setUp(self):
        self.clean = synth_clean_preamble()

    def test_identity_profile_is_bit_exact(self):
        out = apply_impairments(self.clean, EmitterProfile(emitter_id=1), seed=3)
        np.testing.assert_array_equal(out.samples, self.clean.samples)

    def test_cfo_rotation_matches_closed_form(self):
        out = apply_impairments(self.clean, EmitterProfile(emitter_id=1, cfo=100e3), seed=0)
        n = np.arange(PREAMBLE_LENGTH)
        expected = self.clean.samples * np.exp(1j * 2 * np.pi * 100e3 * n / 20e6)
        self.assertLess(np.max(np.abs(out.samples - expected)), 1e-12)

    def test_phase_noise_depends_on_seed(self):
        profile = EmitterProfile(emitter_id=2, phase_noise_std=0.01)
        a = apply_impairments(self.clean, profile, seed=1).samples
        b = apply_impairments(self.clean, profile, seed=2).samples
        again = apply_impairments(self.clean, profile, seed=1).samples
        self.assertFalse(np.allclose(a, b))
        np.testing.assert_array_equal(a, again)

    def test_length_and_rate_preserved(self):
        profile = default_fleet(1)[0]
        out = apply_impairments(self.clean, profile, seed=5)
        self.assertEqual(len(out), len(self.clean))
        self.assertEqual(out.fs, self.clean.fs)

    def test_non_finite_profile_rejected(self):
        with self.assertRaises(ValueError):
            EmitterProfile(emitter_id=1, cfo=float('nan'))
        with self.assertRaises(ValueError):
            EmitterProfile(emitter_id=0)

    def test_default_fleet_cfo_table(self):
        fleet = default_fleet(4)
        self.assertEqual([p.emitter_id for p in fleet], [1, 2, 3, 4])
        self.assertEqual([round(p.cfo, 6) for p in fleet], [-2000.0, -700.0, 700.0, 2000.0])
        self.assertEqual([round(p.iq_gain_imbalance, 6) for p in fleet], [0.2, 0.5, 0.8, 1.1])

    def test_fingerprint_distance_grows_with_spread(self):
        distances = []
        for spread in (0.5, 1.0, 2.0):
            a, b = default_fleet(2, spread=spread, cfo_only=True)
            distances.append(fingerprint_distance(a, b))
        self.assertLess(distances[0], distances[1])
        self.assertLess(distances[1], distances[2])

    def test_cfo_only_distance_is_analytic(self):
        a, b = default_fleet(2, cfo_only=True)
        samples = synth_clean_preamble().samples
        n = np.arange(PREAMBLE_LENGTH)
        delta = np.exp(1j * 2 * np.pi * a.cfo * n / 20e6) - np.exp(1j * 2 * np.pi * b.cfo * n / 20e6)
        expected = math.sqrt(np.mean(np.abs(samples * delta) ** 2))
        self.assertAlmostEqual(fingerprint_distance(a, b), expected, places=12)


class AwgnTests(SimpleTestCase):

    def test_grid_has_eight_points(self):
        self.assertEqual(tuple(SNR_GRID_DB), (9, 12, 15, 18, 21, 24, 27, 30))

    def test_infinite_snr_is_identity(self):
        sig = synth_clean_preamble()
        self.assertIs(add_awgn(sig, float('inf'), seed=1), sig)

    def test_snr_calibration_over_grid(self):
        rng = np.random.default_rng(11)
        for snr in SNR_GRID_DB:
            errors = []
            for trial in range(100):
                samples = rng.standard_normal(320) + 1j * rng.standard_normal(320)
                sig = ComplexSequence(samples, 20e6)
                noisy = add_awgn(sig, snr, seed=trial)
                errors.append(measured_snr_db(sig.samples, noisy.samples) - snr)
            self.assertLess(abs(np.mean(errors)), 0.1)
            self.assertLess(np.max(np.abs(errors)), 0.5)

    def test_deterministic_given_seed(self):
        sig = synth_clean_preamble()
        np.testing.assert_array_equal(add_awgn(sig, 9, seed=4).samples, add_awgn(sig, 9, seed=4).samples)
        self.assertFalse(np.allclose(add_awgn(sig, 9, seed=4).samples, add_awgn(sig, 9, seed=5).samples))

    def test_non_finite_signal_rejected(self):
        samples = np.ones(320, dtype=np.complex128)
        samples[3] = np.nan
        with self.assertRaisesMessage(ValueError, 'non-finite'):
            add_awgn(ComplexSequence(samples, 20e6), 9, seed=0)


class DecimationTests(SimpleTestCase):

    def test_lengths(self):
        sig = synth_clean_preamble()
        for factor, length in ((2, 160), (4, 80), (8, 40)):
            out = decimate(sig, factor)
            self.assertEqual(len(out), length)
            self.assertEqual(out.fs, 20e6 / factor)

    def test_factor_one_is_identity(self):
        sig = synth_clean_preamble()
        self.assertIs(decimate(sig, 1), sig)

    def test_non_divisor_rejected(self):
        with self.assertRaisesMessage(ValueError, 'does not divide'):
            decimate(synth_clean_preamble(), 3)

    def test_sample_picking_composes(self):
        x = np.arange(320) + 1j * np.arange(320)[::-1]
        np.testing.assert_array_equal(pick_samples(x, 8), pick_samples(pick_samples(x, 2), 4))

    def test_rows_match_single_sequence(self):
        sig = synth_clean_preamble()
        rows, fs = decimate_rows(np.stack([sig.samples, 2 * sig.samples]), sig.fs, 4)
        self.assertEqual(fs, 5e6)
        np.testing.assert_allclose(rows[0], decimate(sig, 4).samples, atol=1e-12)
        np.testing.assert_allclose(rows[1], 2 * rows[0], atol=1e-12)
