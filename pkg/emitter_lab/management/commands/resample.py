import logging

import numpy as np

from emitter_lab.cgan import load_generator
from emitter_lab.dataset import load_split
from emitter_lab.resample import upsample_rows
from emitter_lab.sei import generator_file_name, train_command
from emitter_lab.synthesis import FULL_RATE_HZ
from emitter_lab.tensorize import tensorize_rows

from ._base import ExperimentCommand, parse_f_low

logger = logging.getLogger(__name__)


class Command(ExperimentCommand):
    help = 'Upsample the F_L test preambles to 20 MHz tensors with LAI, CSI or a trained cGAN'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--f-low', type=parse_f_low, action='append', dest='f_lows',
                            help='Lower sampling rate in MHz (repeatable; default: [evaluation] f_lows)')
        parser.add_argument('--method', choices=('lai', 'csi', 'cgan'), default='csi')
        parser.add_argument('--augment', action='store_true', help='Use the cGAN trained with online augmentation')
        parser.add_argument('--force', action='store_true', help='Overwrite existing resampled tensors')

    def run(self, experiment, **options):
        dataset_dir = self.require_dataset(experiment)
        method = options['method']
        f_lows = options.get('f_lows') or experiment.evaluation['f_lows']
        out_dir = experiment.resampled_dir
        out_dir.mkdir(parents=True, exist_ok=True)

        truth_batch = load_split(dataset_dir, 'test', FULL_RATE_HZ)
        truth = tensorize_rows(truth_batch.samples.astype(np.complex128))

        for f_low in f_lows:
            path = out_dir / f"{method}_{f_low / 1e3:.0f}k.npz"
            if path.exists() and not options['force']:
                self.refuse_overwrite(path)
            batch = load_split(dataset_dir, 'test', f_low)
            rows = batch.samples.astype(np.complex128)
            if method == 'cgan':
                augmented = experiment.augment_config() is not None
                checkpoint = experiment.checkpoint_dir / generator_file_name(f_low, augmented)
                hint = train_command('cgan', f_low, experiment.path, augmented, force=checkpoint.exists())
                generator, _ = load_generator(checkpoint, hint=hint, expected_hash=experiment.config_hash)
                tensors = generator.upsample_rows(rows, batch.emitter_ids)
            else:
                tensors = tensorize_rows(upsample_rows(method, rows, int(round(FULL_RATE_HZ / f_low))))

            error = float(np.mean(np.abs(tensors - truth)))
            np.savez(path, tensors=tensors.astype(np.float32), emitter_ids=batch.emitter_ids,
                     snr_db=batch.snr_db, realizations=batch.realizations,
                     config_sha256=np.array(experiment.config_hash))
            logger.info(f"Wrote {len(batch)} {method} tensors for F_L={f_low / 1e6:g} MHz to {path}")
            self.stdout.write(f"{method} F_L={f_low / 1e6:g} MHz: {len(batch)} tensors, "
                              f"mean |error| vs 20 MHz tensors {error:.4f} -> {path}")
        return None
