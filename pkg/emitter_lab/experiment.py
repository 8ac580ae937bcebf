"""Experiment config files: sectioned INI text validated section by section.

Every artifact embeds ``config_hash``, the SHA-256 of the canonical resolved
config, so outputs can be traced back to the file that produced them.
"""
import configparser
import dataclasses
import hashlib
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

from django.conf import settings

from .cgan import AugmentConfig, CganConfig
from .dataset import DatasetManifest
from .exceptions import ConfigError
from .sei import ClassifierConfig, ComparisonConfig, TrainSnrMap
from .serializers import SECTION_SERIALIZERS, EmitterSectionSerializer
from .spectro import SpectroConfig
from .synthesis import default_fleet

logger = logging.getLogger(__name__)

_EMITTER_SECTION = re.compile(r'^emitter\.(\d+)$')
_SECTION_LINE = re.compile(r'^\s*\[([^\]]+)\]')
_KEY_LINE = re.compile(r'^\s*([^=:#;\s][^=:]*?)\s*[=:]')


def _line_index(text):
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    index = {}
    section = None
    for number, line in enumerate(text.splitlines(), start=1):
        header = _SECTION_LINE.match(line)
        if header:
            section = header.group(1).strip()
            index.setdefault((section, None), number)
            continue
        key = _KEY_LINE.match(line)
        if key and section is not None:
            index.setdefault((section, key.group(1).strip().lower()), number)
    return index


def _flatten_errors(errors, prefix=''):
    for key, value in errors.items():
        if isinstance(value, dict):
            yield from _flatten_errors(value, f"{prefix}{key}.")
        else:
            messages = value if isinstance(value, (list, tuple)) else [value]
            yield f"{prefix}{key}", '; '.join(str(m) for m in messages)


@dataclass(frozen=True)
class ExperimentConfig:
    path: str
    seed: int
    output_dir: Path
    augment: bool
    manifest: DatasetManifest
    cgan: dict
    classifier: dict
    evaluation: dict
    augmentation: dict
    spectro: dict
    config_hash: str

    @property
    def dataset_dir(self):
        return self.output_dir / 'dataset'

    @property
    def checkpoint_dir(self):
        return self.output_dir / 'checkpoints'

    @property
    def reports_dir(self):
        return self.output_dir / 'reports'

    @property
    def resampled_dir(self):
        return self.output_dir / 'resampled'

    @property
    def spectro_dir(self):
        return self.output_dir / 'spectro'

    @property
    def emitter_count(self):
        return len(self.manifest.fleet)

    def augment_config(self):
        if not self.augment:
            return None
        return AugmentConfig(self.augmentation['snr_low'], self.augmentation['snr_high'])

    def cgan_config(self, f_low):
        options = {key: self.cgan[key] for key in (
            'minibatch', 'epochs', 'k', 'equilibrium_eps', 'd_lr', 'g_lr', 'g_momentum', 'l1_weight', 'literal_g_loss')}
        return CganConfig(f_low=f_low, seed=self.seed, augment=self.augment_config(), **options)

    @property
    def cgan_train_snr(self):
        return self.cgan.get('train_snr_db', max(self.manifest.snr_grid))

    def classifier_config(self):
        augment = self.augment_config()
        return ClassifierConfig(
            seed=self.seed,
            epochs=self.classifier['epochs'],
            patience=self.classifier['patience'],
            holdout_fraction=self.classifier['holdout_fraction'],
            minibatch=self.classifier['minibatch'],
            lr=self.classifier['lr'],
            l2=self.classifier['l2'],
            augment=None if augment is None else (augment.snr_low, augment.snr_high),
        )

    def snr_map(self):
        return TrainSnrMap(self.classifier['snr_map'])

    def comparison_config(self, workers=1):
        return ComparisonConfig(
            classifier=self.classifier_config(),
            snr_map=self.snr_map(),
            emitter_count=self.emitter_count,
            realizations=self.evaluation.get('realizations'),
            train_realizations=self.classifier.get('realizations'),
            config_path=self.path,
            config_hash=self.config_hash,
            workers=workers,
        )

    def spectro_config(self, f_low):
        return SpectroConfig(f_l=f_low, n=self.spectro['n'], r=self.spectro['r'], sf=self.spectro['sf'],
                             bandwidth_hz=self.spectro.get('bandwidth_hz'))


def _validate_section(serializer_class, section, values, path, lines):
    serializer = serializer_class(data=values)
    if not serializer.is_valid():
        problems = []
        for key, message in _flatten_errors(serializer.errors):
            key = None if key == 'non_field_errors' else key
            number = lines.get((section, key)) or lines.get((section, None)) or 0
            problems.append(f"{path}:{number}: [{section}] {key or '*'}: {message}")
        raise ConfigError('\n'.join(problems))
    return dict(serializer.validated_data)


def _fleet(dataset, emitter_sections):
    fleet = default_fleet(dataset['emitters'], spread=dataset['fleet_spread'], cfo_only=dataset['cfo_only'])
    profiles = []
    for profile in fleet:
        overrides = dict(emitter_sections.get(profile.emitter_id, {}))
        if 'dc_offset_re' in overrides or 'dc_offset_im' in overrides:
            dc = complex(profile.dc_offset)
            overrides['dc_offset'] = complex(overrides.pop('dc_offset_re', dc.real), overrides.pop('dc_offset_im', dc.imag))
        profiles.append(dataclasses.replace(profile, **overrides) if overrides else profile)
    return tuple(profiles)


def canonical_hash(resolved):
    payload = json.dumps(resolved, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()


def load_experiment(path, seed=None, augment=None):
    """Parse and validate the config at ``path``.

    ``seed`` and ``augment`` override the matching ``[experiment]`` keys before
    validation, so the overrides are part of the config hash.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except FileNotFoundError as exc:
        raise ConfigError(f"{path}: config file not found") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc

    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#', ';'))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    lines = _line_index(text)

    raw = {section: dict(parser.items(section)) for section in parser.sections()}
    if seed is not None:
        raw.setdefault('experiment', {})['seed'] = str(seed)
    if augment is not None:
        raw.setdefault('experiment', {})['augment'] = 'true' if augment else 'false'
    if 'experiment' not in raw:
        raise ConfigError(f"{path}:0: [experiment] seed: This field is required.")

    resolved = {}
    emitter_sections = {}
    for section, values in raw.items():
        match = _EMITTER_SECTION.match(section)
        serializer_class = EmitterSectionSerializer if match else SECTION_SERIALIZERS.get(section)
        if serializer_class is None:
            raise ConfigError(f"{path}:{lines.get((section, None), 0)}: [{section}] unknown section")
        unknown = set(values) - set(serializer_class().fields)
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"{path}:{lines.get((section, key), 0)}: [{section}] {key}: unknown key")
        validated = _validate_section(serializer_class, section, values, path, lines)
        if match:
            emitter_sections[int(match.group(1))] = validated
        resolved[section] = validated
    for section, serializer_class in SECTION_SERIALIZERS.items():
        if section not in resolved:
            resolved[section] = _validate_section(serializer_class, section, {}, path, lines)

    dataset = resolved['dataset']
    for emitter_id in emitter_sections:
        if not 1 <= emitter_id <= dataset['emitters']:
            raise ConfigError(f"{path}:{lines.get((f'emitter.{emitter_id}', None), 0)}: "
                              f"[emitter.{emitter_id}] emitter id outside 1..{dataset['emitters']}")

    experiment = resolved['experiment']
    try:
        manifest = DatasetManifest(
            fleet=_fleet(dataset, emitter_sections),
            seed=experiment['seed'],
            per_emitter_count=dataset['per_emitter_count'],
            train_count_per_realization=dataset['train_count'],
            snr_grid=dataset['snr_grid'],
            realizations=dataset['realizations'],
        )
    except ValueError as exc:
        raise ConfigError(f"{path}:{lines.get(('dataset', None), 0)}: [dataset] {exc}") from exc

    output_dir = Path(experiment['output_dir'])
    if not output_dir.is_absolute():
        output_dir = Path(settings.SEI_LAB_OUTPUT_ROOT) / output_dir

    config_hash = canonical_hash(resolved)
    logger.debug(f"Loaded {path} (seed={experiment['seed']}, sha256={config_hash[:12]})")
    return ExperimentConfig(
        path=str(path),
        seed=experiment['seed'],
        output_dir=output_dir,
        augment=experiment['augment'],
        manifest=manifest,
        cgan=resolved['cgan'],
        classifier=resolved['classifier'],
        evaluation=resolved['evaluation'],
        augmentation=resolved['augmentation'],
        spectro=resolved['spectro'],
        config_hash=config_hash,
    )
