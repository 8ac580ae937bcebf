import logging

import numpy as np
from tqdm import tqdm

from emitter_lab.cgan import CganTrainer, low_width, save_generator, write_training_log
from emitter_lab.sei import (classifier_file_name, classifier_trainer, generator_file_name, save_classifier,
                             training_rows, write_classifier_log)
from emitter_lab.synthesis import FULL_RATE_HZ, PREAMBLE_LENGTH

from ._base import ExperimentCommand, parse_f_low

logger = logging.getLogger(__name__)


def resume_path(checkpoint):
    return checkpoint.with_suffix('.resume.npz')


def log_path(checkpoint):
    return checkpoint.with_name(f"{checkpoint.stem}_log.csv")


class Command(ExperimentCommand):
    help = 'Train the cGAN upsamplers or the SEI classifiers; interrupted runs resume from the last epoch'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--stage', choices=('cgan', 'classifier'), required=True)
        parser.add_argument('--f-low', type=parse_f_low, action='append', dest='f_lows',
                            help='Lower sampling rate in MHz (repeatable)')
        parser.add_argument('--augment', action='store_true', help='Re-noise every training minibatch')
        parser.add_argument('--force', action='store_true',
                            help='Retrain from scratch over existing checkpoints and resume files')

    def run(self, experiment, **options):
        dataset_dir = self.require_dataset(experiment)
        if options['stage'] == 'cgan':
            for f_low in options.get('f_lows') or experiment.cgan['f_lows']:
                self.train_cgan(experiment, dataset_dir, f_low, options)
        else:
            self.train_classifiers(experiment, dataset_dir, options)
        return None

    def _restore(self, trainer, checkpoint, experiment, options):
        """Continue from the resume file next to ``checkpoint`` when there is one."""
        resume = resume_path(checkpoint)
        if options['force'] or not resume.exists():
            if checkpoint.exists() and not options['force']:
                self.refuse_overwrite(checkpoint)
            return
        with np.load(resume) as arrays:
            saved_hash = str(arrays['config_sha256'])
            if saved_hash != experiment.config_hash:
                logger.error(f"{resume} was written by config {saved_hash[:12]}, not {experiment.config_hash[:12]}")
                self.refuse_overwrite(resume)
            trainer.restore({name: arrays[name] for name in arrays.files if name != 'config_sha256'})
        self.stdout.write(f"Resuming {checkpoint.name} after epoch {trainer.epoch}")

    def _checkpointer(self, checkpoint, experiment, bar):
        resume = resume_path(checkpoint)
        partial = resume.with_name(f"{resume.stem}.partial.npz")

        def on_epoch(trainer, entry):
            np.savez(partial, config_sha256=np.array(experiment.config_hash), **trainer.state_arrays())
            partial.replace(resume)
            bar.update(1)

        return on_epoch

    def train_cgan(self, experiment, dataset_dir, f_low, options):
        cfg = experiment.cgan_config(f_low)
        snr = experiment.cgan_train_snr
        realizations = experiment.cgan.get('realizations')
        high = training_rows(dataset_dir, FULL_RATE_HZ, snr, realizations)
        low = training_rows(dataset_dir, f_low, snr, realizations)
        checkpoint = experiment.checkpoint_dir / generator_file_name(f_low, cfg.augment is not None)
        checkpoint.parent.mkdir(parents=True, exist_ok=True)

        trainer = CganTrainer(high.samples.astype(np.complex128), low.samples.astype(np.complex128),
                              high.emitter_ids, cfg, emitter_count=experiment.emitter_count)
        self._restore(trainer, checkpoint, experiment, options)
        logger.info(f"Training cGAN for F_L={f_low / 1e6:g} MHz on {len(high)} pairs at {snr:g} dB")

        with tqdm(total=cfg.epochs, initial=trainer.epoch, desc=f'cgan {f_low / 1e6:g} MHz', unit='epoch',
                  disable=not self.show_progress(options)) as bar:
            trained = trainer.run(self._checkpointer(checkpoint, experiment, bar))

        save_generator(trained, checkpoint, experiment.config_hash)
        write_training_log(log_path(checkpoint), trained.log, experiment.config_hash)
        resume_path(checkpoint).unlink(missing_ok=True)

        last = trained.log[-1]
        status = 'equilibrium reached' if last.early_stop else 'epoch limit reached'
        self.stdout.write(f"cGAN F_L={f_low / 1e6:g} MHz: {len(trained.log)} epochs ({status}), "
                          f"D(real)={last.mean_d_real:.3f} D(fake)={last.mean_d_fake:.3f} -> {checkpoint}")

    def classifier_jobs(self, experiment, options):
        """(width, fs) of every classifier family the evaluation needs."""
        jobs = [(PREAMBLE_LENGTH, FULL_RATE_HZ)]
        if options.get('f_lows'):
            f_lows = options['f_lows']
        elif 'cnn_only' in experiment.evaluation['methods']:
            f_lows = experiment.evaluation['f_lows']
        else:
            f_lows = []
        jobs.extend((low_width(f_low), f_low) for f_low in f_lows)
        return jobs

    def train_classifiers(self, experiment, dataset_dir, options):
        cfg = experiment.comparison_config(self.workers)
        for width, fs in self.classifier_jobs(experiment, options):
            for train_snr in cfg.snr_map.train_snrs:
                checkpoint = experiment.checkpoint_dir / classifier_file_name(width, train_snr, cfg.augmented)
                checkpoint.parent.mkdir(parents=True, exist_ok=True)
                trainer = classifier_trainer(dataset_dir, fs, train_snr, cfg)
                self._restore(trainer, checkpoint, experiment, options)

                with tqdm(total=cfg.classifier.epochs, initial=trainer.epoch, desc=f'classifier {width}w {train_snr:g} dB',
                          unit='epoch', disable=not self.show_progress(options)) as bar:
                    net = trainer.run(self._checkpointer(checkpoint, experiment, bar))

                save_classifier(net, checkpoint, train_snr, experiment.config_hash)
                write_classifier_log(log_path(checkpoint), trainer.log, experiment.config_hash)
                resume_path(checkpoint).unlink(missing_ok=True)
                self.stdout.write(f"classifier {width} columns @ {train_snr:g} dB: {trainer.epoch} epochs, "
                                  f"best held-out loss {trainer.best_loss:.4f} -> {checkpoint}")
