from pathlib import Path

from django.conf import settings
from rest_framework import serializers

from dichotomy.conf import lab_setting
from dichotomy.services.experiments import EXPERIMENTS
from dichotomy.services.runners import RUNNERS

EQUATIONS = ('pLaplace', 'PME')
FORMATS = ('csv', 'json')
INPUTS = ('barenblatt', 'barenblatt_gradient', 'separable', 'pme_separable', 'bump', 'pme_bump', 'zero', 'abs')
# 不读取扩散指数的输入与实验
EXPONENT_FREE_INPUTS = ('abs',)
EXPONENT_FREE_EXPERIMENTS = ('eigen_oracle',)


class ExperimentConfigSerializer(serializers.Serializer):
    """
    实验配置校验

    配置文件与命令行覆盖合并后的扁平字典在这里统一检查并补全缺省值
    """
    experiment = serializers.CharField(max_length=64)
    equation = serializers.ChoiceField(choices=EQUATIONS, default='pLaplace')
    p = serializers.FloatField(required=False, allow_null=True, default=None)
    m = serializers.FloatField(required=False, allow_null=True, default=None)
    n = serializers.IntegerField(min_value=1, max_value=3, default=1)
    C = serializers.FloatField(default=1.0)
    L = serializers.FloatField(default=1.0)
    grid = serializers.IntegerField(min_value=4, max_value=8192, default=256)
    cells = serializers.IntegerField(min_value=4, max_value=1024, default=32)
    steps = serializers.IntegerField(min_value=1, max_value=100000, default=64)
    t = serializers.FloatField(default=1.0)
    t_start = serializers.FloatField(required=False, allow_null=True, default=None)
    t_end = serializers.FloatField(default=1.0)
    t0 = serializers.FloatField(default=0.25)
    cfl = serializers.FloatField(required=False)
    seed = serializers.IntegerField(min_value=0, default=0)
    samples = serializers.IntegerField(min_value=1, max_value=100000, default=200)
    c_used = serializers.FloatField(default=1.0)
    epsilon = serializers.FloatField(default=0.05)
    q = serializers.FloatField(required=False, allow_null=True, default=None)
    j = serializers.FloatField(default=1.0)
    input = serializers.ChoiceField(choices=INPUTS, required=False, allow_null=True, default=None)
    target = serializers.CharField(required=False, allow_blank=True, default='')
    trace = serializers.ChoiceField(choices=('separable', 'bounded', 'zero'), default='separable')
    oracle = serializers.BooleanField(default=False)
    out = serializers.CharField(required=False, allow_blank=True)
    format = serializers.ChoiceField(choices=FORMATS, required=False)

    def validate_experiment(self, value):
        if value not in EXPERIMENTS and value not in RUNNERS:
            raise serializers.ValidationError(f"实验不存在: {value}")
        return value

    def validate_cfl(self, value):
        if not 0 < value <= 1:
            raise serializers.ValidationError("CFL 安全系数必须在 (0, 1] 内")
        return value

    @staticmethod
    def needs_exponent(attrs) -> bool:
        return not (attrs.get('input') in EXPONENT_FREE_INPUTS or attrs['experiment'] in EXPONENT_FREE_EXPERIMENTS)

    def validate(self, attrs):
        if attrs.get('p') is not None and not attrs['p'] > 2:
            raise serializers.ValidationError({'p': "只处理 p > 2"})
        if attrs.get('m') is not None and not attrs['m'] > 1:
            raise serializers.ValidationError({'m': "只处理 m > 1"})
        if self.needs_exponent(attrs):
            if attrs['equation'] == 'pLaplace' and attrs.get('p') is None:
                raise serializers.ValidationError({'p': "p-Laplace 分支需要指数 p"})
            if attrs['equation'] == 'PME' and attrs.get('m') is None:
                raise serializers.ValidationError({'m': "PME 分支需要指数 m"})
        if not attrs['t_end'] > (attrs.get('t_start') or 0.0):
            raise serializers.ValidationError({'t_end': "终止时间必须晚于起始时间"})
        for key in ('C', 'L', 'epsilon', 'j', 'c_used'):
            if not attrs[key] > 0:
                raise serializers.ValidationError({key: "必须为正"})
        attrs.setdefault('cfl', float(lab_setting('EVOLUTION', 'CFL_SAFETY')))
        attrs['format'] = attrs.get('format') or lab_setting('OUTPUT', 'FORMAT')

        out = Path(attrs.get('out') or lab_setting('OUTPUT', 'DIR'))
        if not out.is_absolute():
            out = Path(settings.BASE_DIR) / out
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise serializers.ValidationError({'out': f"输出目录不可写: {exc}"})
        attrs['out'] = str(out)
        return attrs
