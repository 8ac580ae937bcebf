import itertools
import logging
import shutil

from tqdm import tqdm

from emitter_lab.dataset import MANIFEST_NAME, build_dataset
from emitter_lab.synthesis import fingerprint_distance

from ._base import ExperimentCommand

logger = logging.getLogger(__name__)


class Command(ExperimentCommand):
    help = 'Synthesize the impaired, noisy and decimated preamble dataset described by a config'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--force', action='store_true', help='Overwrite an existing dataset')

    def run(self, experiment, **options):
        out_dir = experiment.dataset_dir
        if (out_dir / MANIFEST_NAME).exists():
            if not options['force']:
                self.refuse_overwrite(out_dir)
            logger.info(f"Removing existing dataset at {out_dir}")
            shutil.rmtree(out_dir)

        manifest = experiment.manifest
        for a, b in itertools.combinations(manifest.fleet, 2):
            logger.info(f"Fingerprint distance emitter {a.emitter_id} vs {b.emitter_id}: "
                        f"{fingerprint_distance(a, b):.4f}")

        cells = len(manifest.fleet) * len(manifest.snr_grid)
        with tqdm(total=cells, desc='generate', unit='cell', disable=not self.show_progress(options)) as bar:
            summary = build_dataset(manifest, out_dir, experiment.config_hash, workers=self.workers,
                                    progress=bar.update)

        self.stdout.write(f"Dataset written to {out_dir} (config sha256 {experiment.config_hash[:12]})")
        self.stdout.write(f"{summary.base_preambles} base preambles "
                          f"({len(manifest.fleet)} emitters x {manifest.per_emitter_count})")
        self.stdout.write('emitter  snr_db  train  test')
        for (emitter_id, snr), counts in sorted(summary.counts.items()):
            self.stdout.write(f"{emitter_id:>7}  {snr:>6g}  {counts['train']:>5}  {counts['test']:>4}")
        return None
