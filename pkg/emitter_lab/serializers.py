from rest_framework import serializers

from .synthesis import LOW_RATES_HZ, SNR_GRID_DB

F_LOW_CHOICES_MHZ = tuple(rate / 1e6 for rate in LOW_RATES_HZ)
METHOD_CHOICES = ('cgan', 'cnn_only', 'lai', 'csi')


class CommaListField(serializers.ListField):
    """A list written as ``a, b, c`` in the config file."""

    def to_internal_value(self, data):
        if isinstance(data, str):
            data = [item.strip() for item in data.split(',') if item.strip()]
        return super().to_internal_value(data)


class SnrMapField(serializers.Field):
    """``test:train`` pairs, e.g. ``9:9, 12:9, 15:9``."""

    def to_internal_value(self, data):
        pairs = []
        for item in str(data).split(','):
            if not item.strip():
                continue
            try:
                test, train = (float(part) for part in item.split(':'))
            except ValueError:
                raise serializers.ValidationError(f"expected test:train pairs, got {item.strip()!r}")
            if train > test:
                raise serializers.ValidationError(f"train SNR {train:g} exceeds test SNR {test:g}")
            pairs.append((test, train))
        if not pairs:
            raise serializers.ValidationError("at least one test:train pair is required")
        return pairs

    def to_representation(self, value):
        return ', '.join(f"{test:g}:{train:g}" for test, train in value)


class FLowListField(CommaListField):
    """Lower sampling rates written in MHz; validated values are in Hz."""

    def __init__(self, **kwargs):
        kwargs.setdefault('default', list(LOW_RATES_HZ))
        super().__init__(child=serializers.FloatField(), **kwargs)

    def to_internal_value(self, data):
        values = super().to_internal_value(data)
        for value in values:
            if value not in F_LOW_CHOICES_MHZ:
                raise serializers.ValidationError(
                    f"{value:g} MHz is not a supported F_L; choose from "
                    + ", ".join(f"{c:g}" for c in F_LOW_CHOICES_MHZ))
        return [value * 1e6 for value in values]


class ExperimentSectionSerializer(serializers.Serializer):
    seed = serializers.IntegerField(min_value=0, max_value=2 ** 64 - 1)
    output_dir = serializers.CharField(default='sei-lab')
    augment = serializers.BooleanField(default=False)


class DatasetSectionSerializer(serializers.Serializer):
    emitters = serializers.IntegerField(min_value=1, max_value=64, default=4)
    per_emitter_count = serializers.IntegerField(min_value=2, default=2000)
    train_count = serializers.IntegerField(min_value=1, default=1600)
    realizations = serializers.IntegerField(min_value=1, default=10)
    snr_grid = CommaListField(child=serializers.FloatField(), default=list(SNR_GRID_DB))
    fleet_spread = serializers.FloatField(min_value=0.0, default=1.0)
    cfo_only = serializers.BooleanField(default=False)

    def validate(self, attrs):
        if attrs['train_count'] >= attrs['per_emitter_count']:
            raise serializers.ValidationError({'train_count': "must be smaller than per_emitter_count"})
        grid = attrs['snr_grid']
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise serializers.ValidationError({'snr_grid': "must be strictly increasing"})
        return attrs


class CganSectionSerializer(serializers.Serializer):
    f_lows = FLowListField()
    minibatch = serializers.IntegerField(min_value=1, default=256)
    epochs = serializers.IntegerField(min_value=1, default=1000)
    k = serializers.IntegerField(min_value=1, default=1)
    equilibrium_eps = serializers.FloatField(min_value=0.0, default=0.02)
    d_lr = serializers.FloatField(min_value=0.0, default=1e-3)
    g_lr = serializers.FloatField(min_value=0.0, default=1e-2)
    g_momentum = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.9)
    l1_weight = serializers.FloatField(min_value=0.0, default=0.0)
    literal_g_loss = serializers.BooleanField(default=False)
    train_snr_db = serializers.FloatField(required=False)
    realizations = serializers.IntegerField(min_value=1, required=False)

    def validate_equilibrium_eps(self, value):
        if value <= 0:
            raise serializers.ValidationError("must be positive")
        return value


class ClassifierSectionSerializer(serializers.Serializer):
    epochs = serializers.IntegerField(min_value=1, default=200)
    patience = serializers.IntegerField(min_value=1, default=20)
    holdout_fraction = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.1)
    minibatch = serializers.IntegerField(min_value=1, default=128)
    lr = serializers.FloatField(min_value=0.0, default=1e-3)
    l2 = serializers.FloatField(min_value=0.0, default=1e-4)
    snr_map = SnrMapField(default=[(9.0, 9.0), (12.0, 9.0), (15.0, 9.0), (18.0, 12.0),
                                   (21.0, 15.0), (24.0, 15.0), (27.0, 15.0), (30.0, 18.0)])
    realizations = serializers.IntegerField(min_value=1, required=False)

    def validate_holdout_fraction(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError("must lie strictly between 0 and 1")
        return value


class EvaluationSectionSerializer(serializers.Serializer):
    methods = CommaListField(child=serializers.ChoiceField(choices=METHOD_CHOICES), default=list(METHOD_CHOICES))
    f_lows = FLowListField()
    realizations = serializers.IntegerField(min_value=1, required=False)


class AugmentationSectionSerializer(serializers.Serializer):
    snr_low = serializers.FloatField(default=9.0)
    snr_high = serializers.FloatField(default=30.0)

    def validate(self, attrs):
        if attrs['snr_low'] > attrs['snr_high']:
            raise serializers.ValidationError({'snr_low': "must not exceed snr_high"})
        return attrs


class SpectroSectionSerializer(serializers.Serializer):
    n = serializers.IntegerField(min_value=1, default=64)
    r = serializers.IntegerField(min_value=1, default=32)
    sf = serializers.IntegerField(min_value=1, default=7)
    bandwidth_hz = serializers.FloatField(min_value=0.0, required=False)
    f_lows = FLowListField()
    snr_db = serializers.FloatField(default=30.0)

    def validate(self, attrs):
        if attrs['n'] % attrs['r']:
            raise serializers.ValidationError({'n': f"must be divisible by r={attrs['r']}"})
        return attrs


class EmitterSectionSerializer(serializers.Serializer):
    iq_gain_imbalance = serializers.FloatField(required=False)
    iq_phase_imbalance = serializers.FloatField(required=False)
    cfo = serializers.FloatField(required=False)
    phase_noise_std = serializers.FloatField(min_value=0.0, required=False)
    dc_offset_re = serializers.FloatField(required=False)
    dc_offset_im = serializers.FloatField(required=False)
    pa_gain_compression = serializers.FloatField(min_value=0.0, required=False)


SECTION_SERIALIZERS = {
    'experiment': ExperimentSectionSerializer,
    'dataset': DatasetSectionSerializer,
    'cgan': CganSectionSerializer,
    'classifier': ClassifierSectionSerializer,
    'evaluation': EvaluationSectionSerializer,
    'augmentation': AugmentationSectionSerializer,
    'spectro': SpectroSectionSerializer,
}
