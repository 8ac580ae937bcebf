import csv
import tempfile
from io import StringIO
from pathlib import Path
from unittest import skipUnless

import numpy as np
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from emitter_lab.cgan import CganTrainer
from emitter_lab.dataset import dataset_file_name
from emitter_lab.experiment import load_experiment
from emitter_lab.management.commands.train import resume_path
from emitter_lab.sei import classifier_file_name, generator_file_name, training_rows
from emitter_lab.synthesis import FULL_RATE_HZ

TINY_CONFIG = """\
[experiment]
seed = 3
output_dir = {output_dir}

[dataset]
emitters = 2
per_emitter_count = 24
train_count = 8
realizations = 1
snr_grid = 9, 30

[cgan]
f_lows = 5
minibatch = 8
epochs = 2
equilibrium_eps = 1e-9

[classifier]
epochs = 2
patience = 5
minibatch = 8
snr_map = 9:9, 30:30

[evaluation]
methods = cgan, lai
f_lows = 5

[spectro]
f_lows = 5
snr_db = 30
"""


def run(name, *args, **options):
    out = StringIO()
    call_command(name, *args, stdout=out, verbosity=0, **options)
    return out.getvalue()


class CommandTestCase(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.output_dir = Path(self.tmp.name) / 'out'
        self.config = self.write_config(TINY_CONFIG.format(output_dir=self.output_dir))

    def write_config(self, text, name='tiny.ini'):
        path = Path(self.tmp.name) / name
        path.write_text(text, encoding='utf-8')
        return str(path)

    def assertExitCode(self, code, name, *args, **options):
        with self.assertRaises(CommandError) as caught:
            run(name, *args, **options)
        self.assertEqual(caught.exception.returncode, code)
        return str(caught.exception)


class ErrorExitTests(CommandTestCase):

    def test_bad_config_exits_with_2(self):
        config = self.write_config("[experiment]\nseed = -1\n", name='bad.ini')
        message = self.assertExitCode(2, 'generate', config=config)
        self.assertIn('[experiment] seed', message)

    def test_unsupported_f_low_exits_with_2(self):
        self.assertExitCode(2, 'train', '--f-low', '4', config=self.config, stage='cgan')

    def test_missing_dataset_exits_with_3(self):
        message = self.assertExitCode(3, 'train', config=self.config, stage='cgan')
        self.assertIn(f'python manage.py generate --config {self.config}', message)

    def test_missing_generator_exits_with_3(self):
        run('generate', config=self.config)
        message = self.assertExitCode(3, 'resample', config=self.config, method='cgan')
        self.assertIn('--stage cgan --f-low 5', message)


class GenerateCommandTests(CommandTestCase):

    def test_summary_table(self):
        output = run('generate', config=self.config)
        self.assertIn('48 base preambles (2 emitters x 24)', output)
        self.assertIn('emitter  snr_db  train  test', output)
        self.assertIn('      1       9      8    16', output)
        self.assertTrue((self.output_dir / 'dataset' / 'manifest.txt').exists())

    def test_refuses_to_overwrite(self):
        run('generate', config=self.config)
        message = self.assertExitCode(1, 'generate', config=self.config)
        self.assertIn('--force', message)

    def test_force_rebuilds_identically(self):
        run('generate', config=self.config)
        path = self.output_dir / 'dataset' / dataset_file_name('train', FULL_RATE_HZ)
        first = path.read_bytes()
        run('generate', config=self.config, force=True)
        self.assertEqual(first, path.read_bytes())


class PipelineTests(CommandTestCase):

    def setUp(self):
        super().setUp()
        run('generate', config=self.config)
        self.experiment = load_experiment(self.config)

    def test_resample_writes_tensors(self):
        output = run('resample', config=self.config, method='lai')
        path = self.output_dir / 'resampled' / 'lai_5000k.npz'
        self.assertIn('mean |error| vs 20 MHz tensors', output)
        with np.load(path) as arrays:
            self.assertEqual(arrays['tensors'].shape, (64, 4, 320))
            self.assertEqual(str(arrays['config_sha256']), self.experiment.config_hash)
        self.assertExitCode(1, 'resample', config=self.config, method='lai')

    def test_train_then_evaluate(self):
        output = run('train', config=self.config, stage='cgan')
        self.assertIn('cGAN F_L=5 MHz: 2 epochs', output)
        checkpoint = self.experiment.checkpoint_dir / generator_file_name(5e6)
        self.assertTrue(checkpoint.exists())
        self.assertFalse(resume_path(checkpoint).exists())
        self.assertTrue(checkpoint.with_name('cgan_5000k_log.csv').exists())
        self.assertExitCode(1, 'train', config=self.config, stage='cgan')

        run('train', config=self.config, stage='classifier')
        for train_snr in (9.0, 30.0):
            self.assertTrue((self.experiment.checkpoint_dir / classifier_file_name(320, train_snr)).exists())

        output = run('evaluate', config=self.config, pdf=True)
        reports = self.experiment.reports_dir
        self.assertIn('3 reports written', output)
        for name in ('report_cgan_5000k.csv', 'report_lai_5000k.csv', 'report_full_rate_20000k.csv',
                     'plotdata.csv', 'summary.pdf'):
            self.assertTrue((reports / name).exists(), name)
        header = (reports / 'plotdata.csv').read_text().splitlines()[0]
        self.assertEqual(header, f'# config_sha256={self.experiment.config_hash}')
        self.assertExitCode(1, 'evaluate', config=self.config)

    def test_checkpoints_from_another_config_exit_with_3(self):
        run('train', config=self.config, stage='cgan')
        run('train', config=self.config, stage='classifier')
        message = self.assertExitCode(3, 'evaluate', config=self.config, seed=4)
        self.assertIn('--stage cgan --f-low 5 --force', message)
        message = self.assertExitCode(3, 'evaluate', '--method', 'lai', config=self.config, seed=4)
        self.assertIn('--stage classifier --force', message)
        message = self.assertExitCode(3, 'resample', config=self.config, method='cgan', seed=4)
        self.assertIn('--stage cgan --f-low 5 --force', message)
        self.assertFalse((self.experiment.reports_dir / 'plotdata.csv').exists())

    def test_augmented_evaluation_uses_augmented_checkpoints(self):
        run('train', config=self.config, stage='cgan')
        run('train', config=self.config, stage='classifier')
        message = self.assertExitCode(3, 'evaluate', config=self.config, augment=True)
        self.assertIn('cgan_5000k_aug.seiw', message)
        self.assertIn('--augment', message)

        run('train', config=self.config, stage='cgan', augment=True)
        run('train', config=self.config, stage='classifier', augment=True)
        checkpoints = self.experiment.checkpoint_dir
        self.assertTrue((checkpoints / generator_file_name(5e6, augmented=True)).exists())
        self.assertTrue((checkpoints / classifier_file_name(320, 30.0, augmented=True)).exists())
        self.assertTrue((checkpoints / generator_file_name(5e6)).exists())
        output = run('evaluate', config=self.config, augment=True)
        self.assertIn('3 reports written', output)
        header = (self.experiment.reports_dir / 'plotdata.csv').read_text().splitlines()[0]
        augmented = load_experiment(self.config, augment=True)
        self.assertEqual(header, f'# config_sha256={augmented.config_hash}')

    def test_train_resumes_from_last_epoch(self):
        cfg = self.experiment.cgan_config(5e6)
        high = training_rows(self.experiment.dataset_dir, FULL_RATE_HZ, 30)
        low = training_rows(self.experiment.dataset_dir, 5e6, 30)
        trainer = CganTrainer(high.samples.astype(np.complex128), low.samples.astype(np.complex128),
                              high.emitter_ids, cfg, emitter_count=2)
        trainer.run_epoch()
        checkpoint = self.experiment.checkpoint_dir / generator_file_name(5e6)
        checkpoint.parent.mkdir(parents=True)
        np.savez(resume_path(checkpoint), config_sha256=np.array(self.experiment.config_hash),
                 **trainer.state_arrays())

        output = run('train', config=self.config, stage='cgan')
        self.assertIn('Resuming cgan_5000k.seiw after epoch 1', output)
        self.assertIn('2 epochs', output)
        self.assertFalse(resume_path(checkpoint).exists())

    def test_resume_from_another_config_is_refused(self):
        checkpoint = self.experiment.checkpoint_dir / generator_file_name(5e6)
        checkpoint.parent.mkdir(parents=True)
        np.savez(resume_path(checkpoint), config_sha256=np.array('0' * 64), epoch=np.array(1))
        self.assertExitCode(1, 'train', config=self.config, stage='cgan')

    def test_compare_spectro(self):
        output = run('compare_spectro', config=self.config)
        self.assertIn('F_L=5 MHz: M=37, spectrogram 64 x 36', output)
        spectro_dir = self.experiment.spectro_dir
        for emitter_id in (1, 2):
            lines = (spectro_dir / f'spectro_5000k_emitter{emitter_id}.csv').read_text().splitlines()
            self.assertEqual(len(lines), 1 + 64)
            self.assertEqual(len(lines[1].split(',')), 36)
        widths = (spectro_dir / 'widths.csv').read_text().splitlines()
        self.assertEqual(widths[1], 'f_low_hz,n,r,sf,bandwidth_hz,span_samples,stft_columns,output_columns')
        self.assertTrue(widths[2].startswith('5000000,64,32,7,'))


class DeterminismTests(CommandTestCase):

    REPORTS = ('report_cgan_5000k.csv', 'report_lai_5000k.csv', 'report_full_rate_20000k.csv', 'plotdata.csv')

    def pipeline(self, config, root):
        with override_settings(SEI_LAB_OUTPUT_ROOT=root):
            run('generate', config=config)
            run('train', config=config, stage='cgan')
            run('train', config=config, stage='classifier')
            run('evaluate', config=config)
            return load_experiment(config).reports_dir

    def test_two_runs_write_identical_reports(self):
        config = self.write_config(TINY_CONFIG.format(output_dir='tiny'), name='relative.ini')
        first = self.pipeline(config, Path(self.tmp.name) / 'first')
        second = self.pipeline(config, Path(self.tmp.name) / 'second')
        self.assertNotEqual(first, second)
        for name in self.REPORTS:
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes(), name)


def read_averages(reports_dir, method, f_low_khz):
    """``{snr_db: accuracy}`` from the per-SNR average rows of one report."""
    lines = (reports_dir / f'report_{method}_{f_low_khz}k.csv').read_text().splitlines()
    rows = csv.DictReader(line for line in lines if not line.startswith('#'))
    return {float(row['snr_db']): float(row['accuracy_pct']) for row in rows if row['emitter_id'] == '0'}


def mean_accuracy(reports_dir, method, f_low_khz):
    values = read_averages(reports_dir, method, f_low_khz).values()
    return sum(values) / len(values)


@skipUnless(settings.SEI_LAB_SLOW_TESTS, 'set SEI_LAB_SLOW_TESTS=True for the desk-scale run')
class DeskRunTests(SimpleTestCase):
    """The full pipeline on configs/desk.ini; checks which method beats which."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        config = str(Path(settings.BASE_DIR) / 'configs' / 'desk.ini')
        with override_settings(SEI_LAB_OUTPUT_ROOT=Path(cls.tmp.name)):
            run('generate', config=config)
            run('train', config=config, stage='cgan')
            run('train', config=config, stage='classifier')
            run('evaluate', config=config)
            cls.reports = load_experiment(config).reports_dir

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def test_full_rate_is_accurate_at_high_snr(self):
        for snr, accuracy in read_averages(self.reports, 'full_rate', 20000).items():
            if snr >= 21:
                self.assertGreater(accuracy, 90.0, f'{snr:g} dB')

    def test_cgan_beats_low_rate_classifier_at_5_mhz(self):
        self.assertGreaterEqual(mean_accuracy(self.reports, 'cgan', 5000), mean_accuracy(self.reports, 'cnn_only', 5000))

    def test_spline_beats_linear_interpolation(self):
        for f_low_khz in (2500, 5000):
            self.assertGreaterEqual(mean_accuracy(self.reports, 'csi', f_low_khz),
                                    mean_accuracy(self.reports, 'lai', f_low_khz), f'{f_low_khz} kHz')

    def test_full_rate_bounds_the_cgan(self):
        full = mean_accuracy(self.reports, 'full_rate', 20000)
        for f_low_khz in (2500, 5000, 10000):
            self.assertGreaterEqual(full, mean_accuracy(self.reports, 'cgan', f_low_khz), f'{f_low_khz} kHz')
