import csv
import logging

import numpy as np

from emitter_lab.dataset import load_split
from emitter_lab.spectro import (burst_train, channel_independent_spectrogram, required_samples, spectro_width,
                                 write_spectrogram_csv)

from ._base import ExperimentCommand, parse_f_low

logger = logging.getLogger(__name__)

WIDTHS_NAME = 'widths.csv'
WIDTH_FIELDS = ('f_low_hz', 'n', 'r', 'sf', 'bandwidth_hz', 'span_samples', 'stft_columns', 'output_columns')


class Command(ExperimentCommand):
    help = 'Write channel-independent spectrograms of F_L burst trains for the spectrogram comparison track'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--f-low', type=parse_f_low, action='append', dest='f_lows',
                            help='Lower sampling rate in MHz (repeatable; default: [spectro] f_lows)')
        parser.add_argument('--force', action='store_true', help='Overwrite existing spectrograms')

    def run(self, experiment, **options):
        dataset_dir = self.require_dataset(experiment)
        f_lows = options.get('f_lows') or experiment.spectro['f_lows']
        snr = experiment.spectro['snr_db']
        out_dir = experiment.spectro_dir
        if (out_dir / WIDTHS_NAME).exists() and not options['force']:
            self.refuse_overwrite(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        widths = []
        for f_low in f_lows:
            cfg = experiment.spectro_config(f_low)
            m = spectro_width(cfg)
            needed = required_samples(cfg)
            widths.append([f"{f_low:.0f}", cfg.n, cfg.r, cfg.sf, f"{cfg.bandwidth_hz:.0f}",
                           f"{cfg.span_samples:.2f}", m, m - 1])

            batch = load_split(dataset_dir, 'test', f_low).at_snr(snr)
            batch = batch.select(batch.realizations == 1)
            if len(batch) == 0:
                raise ValueError(f"no test records at {snr:g} dB for F_L={f_low / 1e6:g} MHz")
            for emitter_id in experiment.manifest.emitter_ids:
                rows = batch.select(batch.emitter_ids == emitter_id).samples.astype(np.complex128)
                burst = burst_train(rows, needed, f_low)
                spectrogram = channel_independent_spectrogram(burst, cfg)
                path = out_dir / f"spectro_{f_low / 1e3:.0f}k_emitter{emitter_id}.csv"
                write_spectrogram_csv(path, spectrogram, experiment.config_hash)
            logger.info(f"F_L={f_low / 1e6:g} MHz: {experiment.emitter_count} spectrograms of {cfg.n}x{m - 1} "
                        f"from {needed}-sample burst trains")
            self.stdout.write(f"F_L={f_low / 1e6:g} MHz: M={m}, spectrogram {cfg.n} x {m - 1}")

        with open(out_dir / WIDTHS_NAME, 'w', newline='', encoding='utf-8') as handle:
            handle.write(f"# config_sha256={experiment.config_hash}\n")
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(WIDTH_FIELDS)
            writer.writerows(widths)
        return None
