import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, override_settings
from scipy.special import expit, softmax as reference_softmax

from emitter_lab.exceptions import DatasetFormatError, MissingPrerequisite, NumericError, ShapeError
from emitter_lab.nn import (
    AdamState, MomentumState, Network, adam_step, conv2d, dense, embedding, flatten, loss_categorical_ce,
    loss_gan_terms, maxpool2d, momentum_sgd_step, relu, sgd_step, sigmoid, softmax, upsample2d,
)
from emitter_lab.nn.checkpoint import decode_network, encode_network, load_network, save_network
from emitter_lab.nn.gradcheck import check_network, numerical_gradient, relative_error

TOLERANCE = 1e-4


def away_from_zero(rng, shape, margin=0.1):
    """Values with |x| >= margin, so no ReLU kink sits inside a finite-difference step."""
    magnitude = rng.uniform(margin, 1.0, size=shape)
    return magnitude * rng.choice([-1.0, 1.0], size=shape)


def distinct_values(rng, shape, spacing=0.05):
    """A random arrangement of well-separated values, so max-pool windows never tie."""
    count = int(np.prod(shape))
    return (rng.permutation(count) * spacing).reshape(shape)


class LayerGradientTests(SimpleTestCase):

    def assert_gradients(self, specs, input_shape, x, seed=0):
        net = Network(specs, input_shape, seed=seed, dtype=np.float64)
        rng = np.random.default_rng(seed + 100)
        upstream = rng.standard_normal((x.shape[0],) + net.output_shape)
        errors = check_network(net, x, upstream)
        for name, error in errors.items():
            self.assertLess(error, TOLERANCE, f"{specs[0]} {input_shape} {name}")

    def test_conv2d(self):
        rng = np.random.default_rng(1)
        cases = (
            ([conv2d(3, kernel=(1, 3))], (4, 6, 2)),
            ([conv2d(2, kernel=(2, 3), stride=(1, 2), padding='valid')], (3, 7, 1)),
            ([conv2d(4, kernel=(1, 1))], (2, 5, 3)),
        )
        for specs, shape in cases:
            self.assert_gradients(specs, shape, rng.standard_normal((2,) + shape))

    def test_dense(self):
        rng = np.random.default_rng(2)
        for shape, units in (((5,), 3), ((3,), 1), ((8,), 6)):
            self.assert_gradients([dense(units)], shape, rng.standard_normal((3,) + shape))

    def test_relu(self):
        rng = np.random.default_rng(3)
        for shape in ((6,), (2, 4, 3), (1, 8, 2)):
            self.assert_gradients([relu()], shape, away_from_zero(rng, (2,) + shape))

    def test_sigmoid(self):
        rng = np.random.default_rng(4)
        for shape in ((1,), (5,), (2, 3, 2)):
            self.assert_gradients([sigmoid()], shape, rng.standard_normal((3,) + shape))

    def test_softmax(self):
        rng = np.random.default_rng(5)
        for shape in ((2,), (4,), (7,)):
            self.assert_gradients([softmax()], shape, rng.standard_normal((3,) + shape))

    def test_flatten(self):
        rng = np.random.default_rng(6)
        for shape in ((2, 3, 1), (4, 2, 2), (1, 5, 3)):
            self.assert_gradients([flatten()], shape, rng.standard_normal((2,) + shape))

    def test_maxpool2d(self):
        rng = np.random.default_rng(7)
        for pool, shape in (((1, 2), (2, 6, 2)), ((2, 2), (4, 4, 1)), ((2, 2), (5, 7, 2))):
            self.assert_gradients([maxpool2d(pool)], shape, distinct_values(rng, (2,) + shape))

    def test_upsample2d(self):
        rng = np.random.default_rng(8)
        for factor, shape in (((1, 2), (2, 3, 2)), ((2, 2), (1, 4, 1)), ((1, 4), (4, 2, 3))):
            self.assert_gradients([upsample2d(factor)], shape, rng.standard_normal((2,) + shape))

    def test_embedding(self):
        for vocab, dim, ids in ((4, 3, [0, 2, 2]), (2, 5, [1]), (6, 2, [5, 0, 3, 1])):
            self.assert_gradients([embedding(vocab, dim)], (), np.array(ids))

    def test_small_stack(self):
        rng = np.random.default_rng(9)
        specs = [conv2d(2, kernel=(1, 3)), upsample2d((1, 2)), flatten(), dense(3), sigmoid()]
        self.assert_gradients(specs, (2, 4, 2), rng.standard_normal((2, 2, 4, 2)))

    def test_zero_upstream_gives_zero_gradients(self):
        net = Network([conv2d(2), relu(), flatten(), dense(3)], (4, 8, 1), seed=3, dtype=np.float64)
        x = np.random.default_rng(0).standard_normal((2, 4, 8, 1))
        net.forward(x)
        net.backward(np.zeros((2, 3)))
        for grad in net.grads:
            self.assertFalse(np.any(grad))

    def test_dense_closed_form(self):
        net = Network([dense(4)], (3,), seed=1, dtype=np.float64)
        x = np.array([[0.5, -1.0, 2.0]])
        delta = np.array([[1.0, -2.0, 0.25, 3.0]])
        net.forward(x)
        net.backward(delta)
        np.testing.assert_allclose(net.grads[0], x.T @ delta, rtol=0, atol=1e-12)
        np.testing.assert_allclose(net.grads[1], delta[0], rtol=0, atol=1e-12)


class LayerForwardTests(SimpleTestCase):

    def test_identity_convolution(self):
        net = Network([conv2d(2, kernel=(1, 3))], (4, 5, 2), dtype=np.float64)
        weight = np.zeros((1, 3, 2, 2))
        weight[0, 1] = np.eye(2)
        net.set_weights([weight, np.zeros(2)])
        x = np.random.default_rng(0).standard_normal((3, 4, 5, 2))
        np.testing.assert_array_equal(net.forward(x), x)

    def test_uniform_softmax(self):
        net = Network([softmax()], (4,))
        np.testing.assert_allclose(net.forward(np.zeros((1, 4))), [[0.25, 0.25, 0.25, 0.25]])

    def test_softmax_matches_reference(self):
        x = np.random.default_rng(1).standard_normal((3, 5))
        net = Network([softmax()], (5,), dtype=np.float64)
        np.testing.assert_allclose(net.forward(x), reference_softmax(x, axis=-1), atol=1e-12)

    def test_sigmoid_matches_reference(self):
        x = np.linspace(-5, 5, 11)[:, np.newaxis]
        net = Network([sigmoid()], (1,), dtype=np.float64)
        np.testing.assert_allclose(net.forward(x), expit(x), atol=1e-12)

    def test_maxpool_window(self):
        net = Network([maxpool2d((2, 2))], (2, 2, 1))
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1)
        self.assertEqual(net.forward(x).item(), 4.0)

    def test_upsample_repeats(self):
        net = Network([upsample2d((1, 2))], (1, 2, 1))
        out = net.forward(np.array([1.0, 2.0]).reshape(1, 1, 2, 1))
        np.testing.assert_array_equal(out.reshape(-1), [1, 1, 2, 2])


class NetworkTests(SimpleTestCase):

    def specs(self):
        return [conv2d(4), relu(), maxpool2d(), flatten(), dense(2), softmax()]

    def test_same_seed_same_parameters(self):
        a = Network(self.specs(), (4, 8, 1), seed=5)
        b = Network(self.specs(), (4, 8, 1), seed=5)
        c = Network(self.specs(), (4, 8, 1), seed=6)
        for pa, pb in zip(a.params, b.params):
            np.testing.assert_array_equal(pa, pb)
        self.assertFalse(np.array_equal(a.params[0], c.params[0]))
        self.assertEqual(a.parameter_count, c.parameter_count)

    def test_wrong_input_shape(self):
        net = Network(self.specs(), (4, 8, 1))
        with self.assertRaisesMessage(ShapeError, '(2, 4, 8, 2)'):
            net.forward(np.zeros((2, 4, 8, 2)))

    def test_backward_before_forward(self):
        net = Network(self.specs(), (4, 8, 1))
        with self.assertRaises(RuntimeError):
            net.backward(np.zeros((1, 2)))

    def test_from_logits_skips_head(self):
        net = Network([dense(3), softmax()], (2,), dtype=np.float64)
        x = np.array([[0.3, -0.4]])
        probs = net.forward(x)
        _, grad = loss_categorical_ce(probs, np.array([1]))
        net.backward(grad, from_logits=True)
        fused = [g.copy() for g in net.grads]

        net.forward(x)
        net.backward(-(np.eye(3)[[1]]) / probs)
        for a, b in zip(fused, net.grads):
            np.testing.assert_allclose(a, b, atol=1e-10)

    def test_checked_mode_flags_non_finite(self):
        net = Network([dense(2)], (2,), checked=True)
        with self.assertRaises(NumericError):
            net.forward(np.array([[np.nan, 1.0]]))

    @override_settings(SEI_LAB_CHECKED=True)
    def test_checked_mode_follows_settings(self):
        self.assertTrue(Network([dense(2)], (2,)).checked)

    def test_predict_batches(self):
        net = Network(self.specs(), (4, 8, 1), seed=2)
        x = np.random.default_rng(0).random((7, 4, 8, 1))
        np.testing.assert_allclose(net.predict(x, batch_size=3), net.forward(x), atol=1e-6)


class LossTests(SimpleTestCase):

    def test_perfect_prediction(self):
        loss, _ = loss_categorical_ce(np.eye(4), np.arange(4))
        self.assertAlmostEqual(loss, 0.0)

    def test_uniform_prediction(self):
        loss, _ = loss_categorical_ce(np.full((2, 4), 0.25), np.array([0, 3]))
        self.assertAlmostEqual(loss, math.log(4), places=12)

    def test_hand_computed_batch(self):
        probs = np.array([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]])
        loss, grad = loss_categorical_ce(probs, np.array([0, 2]))
        self.assertAlmostEqual(loss, -(math.log(0.7) + math.log(0.6)) / 2, delta=1e-6)
        np.testing.assert_allclose(grad, [[-0.15, 0.1, 0.05], [0.05, 0.15, -0.2]], atol=1e-12)

    def test_cross_entropy_logit_gradient(self):
        rng = np.random.default_rng(1)
        for batch, classes in ((2, 3), (4, 4), (3, 6)):
            logits = rng.standard_normal((batch, classes))
            labels = rng.integers(0, classes, batch)
            _, analytic = loss_categorical_ce(reference_softmax(logits, axis=1), labels)
            numeric = numerical_gradient(
                lambda: loss_categorical_ce(reference_softmax(logits, axis=1), labels)[0], logits)
            self.assertLess(relative_error(analytic, numeric), TOLERANCE)

    def test_bad_labels(self):
        with self.assertRaises(ValueError):
            loss_categorical_ce(np.full((1, 3), 1 / 3), np.array([3]))

    def test_perfect_discriminator(self):
        d_loss, _ = loss_gan_terms(np.ones(4), np.zeros(4))
        self.assertAlmostEqual(d_loss, 0.0, places=6)

    def test_equilibrium_identity(self):
        d_loss, _ = loss_gan_terms(np.full(8, 0.5), np.full(8, 0.5))
        self.assertAlmostEqual(d_loss, 2 * math.log(2), delta=1e-6)

    def test_gan_probability_gradients(self):
        rng = np.random.default_rng(2)
        for literal in (False, True):
            for size in (1, 4, 9):
                real = rng.uniform(0.1, 0.9, size)
                fake = rng.uniform(0.1, 0.9, size)
                terms = loss_gan_terms(real, fake, literal=literal)
                self.assertLess(relative_error(
                    terms.d_real_prob_grad, numerical_gradient(lambda: loss_gan_terms(real, fake).d_loss, real)),
                    TOLERANCE)
                self.assertLess(relative_error(
                    terms.d_fake_prob_grad, numerical_gradient(lambda: loss_gan_terms(real, fake).d_loss, fake)),
                    TOLERANCE)
                g_numeric = numerical_gradient(lambda: loss_gan_terms(real, fake, literal=literal).g_loss, fake)
                self.assertLess(relative_error(terms.g_fake_prob_grad, g_numeric), TOLERANCE)

    def test_gan_logit_gradients(self):
        rng = np.random.default_rng(3)
        for literal in (False, True):
            real_logits = rng.standard_normal(5)
            fake_logits = rng.standard_normal(5)
            terms = loss_gan_terms(expit(real_logits), expit(fake_logits), literal=literal)

            def d_loss():
                return loss_gan_terms(expit(real_logits), expit(fake_logits)).d_loss

            def g_loss():
                return loss_gan_terms(expit(real_logits), expit(fake_logits), literal=literal).g_loss

            self.assertLess(relative_error(terms.d_real_logit_grad, numerical_gradient(d_loss, real_logits)), TOLERANCE)
            self.assertLess(relative_error(terms.d_fake_logit_grad, numerical_gradient(d_loss, fake_logits)), TOLERANCE)
            self.assertLess(relative_error(terms.g_fake_logit_grad, numerical_gradient(g_loss, fake_logits)), TOLERANCE)


class OptimizerTests(SimpleTestCase):

    def test_adam_zero_gradient(self):
        w = np.array([1.0, -2.0])
        state = AdamState.for_params([w])
        adam_step(state, [w], [np.zeros(2)])
        np.testing.assert_array_equal(w, [1.0, -2.0])

    def test_adam_first_step_follows_sign(self):
        w = np.zeros(3)
        state = AdamState.for_params([w], lr=0.01)
        adam_step(state, [w], [np.array([0.5, -2.0, 3.0])])
        np.testing.assert_allclose(w, [-0.01, 0.01, -0.01], atol=1e-8)

    def test_adam_descends_parabola(self):
        w = np.zeros(1)
        state = AdamState.for_params([w], lr=0.1)
        for _ in range(100):
            adam_step(state, [w], [2 * (w - 3)])
        self.assertLess(abs(w[0] - 3), 0.05)

    def test_adam_l2_changes_weights(self):
        plain, decayed = np.ones(2), np.ones(2)
        plain_state = AdamState.for_params([plain])
        decayed_state = AdamState.for_params([decayed], l2=0.1)
        for _ in range(3):
            adam_step(plain_state, [plain], [np.full(2, 0.5)])
            adam_step(decayed_state, [decayed], [np.full(2, 0.5)])
        self.assertFalse(np.allclose(plain, decayed))

    def test_sgd(self):
        w = np.array([1.0])
        sgd_step([w], [np.array([2.0])], lr=0)
        self.assertEqual(w[0], 1.0)
        sgd_step([w], [np.array([2.0])], lr=0.5)
        self.assertEqual(w[0], 0.0)

    def test_sgd_descends_parabola(self):
        w = np.zeros(1)
        for _ in range(100):
            sgd_step([w], [2 * (w - 3)], lr=0.1)
        self.assertLess(abs(w[0] - 3), 1e-6)

    def test_momentum(self):
        w = np.zeros(1)
        state = MomentumState.for_params([w], lr=0.1, momentum=0.5)
        momentum_sgd_step(state, [w], [np.array([1.0])])
        momentum_sgd_step(state, [w], [np.array([1.0])])
        self.assertAlmostEqual(w[0], -0.1 - 0.15)

    def test_mismatched_shapes(self):
        with self.assertRaises(ShapeError):
            sgd_step([np.zeros(2)], [np.zeros(3)], lr=0.1)


class CheckpointTests(SimpleTestCase):

    def setUp(self):
        self.net = Network([conv2d(2), relu(), flatten(), dense(3), softmax()], (4, 8, 1), seed=4, name='tiny')

    def test_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = save_network(self.net, Path(tmp) / 'nested' / 'tiny.seiw', 'cafe', extra={'width': 8})
            loaded, config_hash, extra = load_network(path)
        self.assertEqual(config_hash, 'cafe')
        self.assertEqual(extra, {'width': 8})
        self.assertEqual(loaded.specs, self.net.specs)
        for a, b in zip(loaded.params, self.net.params):
            np.testing.assert_array_equal(a, b)

    def test_encoding_is_deterministic(self):
        twin = Network(self.net.specs, (4, 8, 1), seed=4, name='tiny')
        self.assertEqual(encode_network(self.net, 'x'), encode_network(twin, 'x'))

    def test_missing_checkpoint(self):
        with self.assertRaises(MissingPrerequisite) as ctx:
            load_network('/nonexistent/tiny.seiw', hint='python manage.py train')
        self.assertIn('Run: python manage.py train', str(ctx.exception))

    def test_config_hash_mismatch(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = save_network(self.net, Path(tmp) / 'tiny.seiw', 'cafe')
            _, config_hash, _ = load_network(path, expected_hash='cafe')
            with self.assertRaises(MissingPrerequisite) as ctx:
                load_network(path, hint='python manage.py train --force', expected_hash='beef')
        self.assertEqual(config_hash, 'cafe')
        self.assertIn('trained under config cafe, not beef', str(ctx.exception))
        self.assertIn('Run: python manage.py train --force', str(ctx.exception))

    def test_corrupt_checkpoint(self):
        with self.assertRaises(DatasetFormatError):
            decode_network(b'JUNK\x01\x00')
        with self.assertRaises(DatasetFormatError):
            decode_network(encode_network(self.net)[:-4])
