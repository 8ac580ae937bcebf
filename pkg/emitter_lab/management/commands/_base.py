import logging

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from emitter_lab.dataset import MANIFEST_NAME
from emitter_lab.exceptions import ConfigError, MissingPrerequisite, NumericError
from emitter_lab.experiment import load_experiment
from emitter_lab.synthesis import LOW_RATES_HZ

logger = logging.getLogger(__name__)

EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERIC = 4


def parse_f_low(value):
    """``--f-low`` is given in MHz."""
    try:
        rate = float(value) * 1e6
    except ValueError:
        raise CommandError(f"--f-low expects a rate in MHz, got {value!r}", returncode=EXIT_CONFIG)
    if rate not in LOW_RATES_HZ:
        choices = ", ".join(f"{r / 1e6:g}" for r in LOW_RATES_HZ)
        raise CommandError(f"--f-low {value} MHz is not supported; choose from {choices}", returncode=EXIT_CONFIG)
    return rate


class ExperimentCommand(BaseCommand):
    """Base for commands driven by an experiment config file.

    Subclasses implement ``run(experiment, **options)``; library errors are
    mapped onto the lab's exit codes.
    """

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Experiment config file (INI)')
        parser.add_argument('--seed', type=int, help='Override [experiment] seed')

    def load(self, options, augment=None):
        return load_experiment(options['config'], seed=options.get('seed'), augment=augment)

    def handle(self, *args, **options):
        try:
            experiment = self.load(options, augment=True if options.get('augment') else None)
            return self.run(experiment, **options)
        except ConfigError as exc:
            logger.error(f"Config error: {exc}")
            raise CommandError(str(exc), returncode=EXIT_CONFIG) from exc
        except MissingPrerequisite as exc:
            logger.error(f"Missing prerequisite: {exc}")
            raise CommandError(str(exc), returncode=EXIT_MISSING) from exc
        except NumericError as exc:
            logger.error(f"Numeric failure: {exc}")
            raise CommandError(str(exc), returncode=EXIT_NUMERIC) from exc
        except (ValueError, OSError) as exc:
            logger.error(f"{self.__module__.rsplit('.', 1)[-1]} failed: {exc}")
            raise CommandError(str(exc), returncode=EXIT_OTHER) from exc

    def run(self, experiment, **options):
        raise NotImplementedError

    def refuse_overwrite(self, path):
        raise CommandError(f"{path} already exists; pass --force to overwrite", returncode=EXIT_OTHER)

    def require_dataset(self, experiment):
        manifest = experiment.dataset_dir / MANIFEST_NAME
        if not manifest.exists():
            raise MissingPrerequisite(f"dataset not found under {experiment.dataset_dir}",
                                      hint=f"python manage.py generate --config {experiment.path}")
        return experiment.dataset_dir

    @property
    def workers(self):
        return max(1, int(settings.SEI_LAB_WORKERS))

    def show_progress(self, options):
        return options.get('verbosity', 1) > 0
