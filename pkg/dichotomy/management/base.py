"""
实验子命令基类
负责配置合并、产物写出与退出码：0 成功，2 配置错误，3 数值失败，4 结论不确定
"""
import json
import logging
from typing import Any, Callable, Optional

from django.core.management.base import BaseCommand, CommandError

from dichotomy.conf import lab_setting
from dichotomy.serializers.experiment import EQUATIONS, FORMATS, INPUTS
from dichotomy.services.artifacts import ArtifactWriter, _json_value
from dichotomy.services.config_loader import load_config
from dichotomy.services.runners import RunResult
from dichotomy.utils.lab_response import LabResponse, lab_exception_handler

logger = logging.getLogger('dichotomy')

OVERRIDE_KEYS = (
    'equation', 'p', 'm', 'n', 'C', 'L', 'grid', 'cells', 'steps', 't', 't_start', 't_end', 't0', 'cfl', 'seed',
    'samples', 'c_used', 'epsilon', 'q', 'j', 'input', 'target', 'trace', 'oracle', 'out', 'format',
)


class LabCommand(BaseCommand):
    """
    子类设置 experiment 与 runner；positional 为 (参数名, 可选值) 时增加一个位置参数
    """
    experiment: str = ''
    positional: Optional[tuple[str, tuple[str, ...]]] = None
    runner: Optional[Callable[[dict], RunResult]] = None

    def add_arguments(self, parser):
        if self.positional is not None:
            dest, choices = self.positional
            parser.add_argument(dest, nargs='?', choices=choices, default=None)
        parser.add_argument('--config', help="key = value 格式的配置文件")
        parser.add_argument('--equation', choices=EQUATIONS)
        parser.add_argument('--p', type=float, help="p-Laplace 指数 (> 2)")
        parser.add_argument('--m', type=float, help="PME 指数 (> 1)")
        parser.add_argument('--n', type=int, help="空间维数")
        parser.add_argument('--C', type=float, help="Barenblatt 常数")
        parser.add_argument('--L', type=float, help="区域长度或半宽")
        parser.add_argument('--grid', type=int, help="空间单元数")
        parser.add_argument('--cells', type=int, help="辅助网格（环形探针、下卷积等）的单元数")
        parser.add_argument('--steps', type=int, help="名义输出时间层数")
        parser.add_argument('--t', type=float, help="求值时刻")
        parser.add_argument('--t-start', type=float)
        parser.add_argument('--t-end', type=float)
        parser.add_argument('--t0', type=float, help="分离变量解的奇异时刻")
        parser.add_argument('--cfl', type=float)
        parser.add_argument('--seed', type=int)
        parser.add_argument('--samples', type=int)
        parser.add_argument('--out', help="输出目录")
        parser.add_argument('--format', choices=FORMATS)
        parser.add_argument('--input', choices=INPUTS)
        self.add_extra_arguments(parser)

    def add_extra_arguments(self, parser):
        pass

    def experiment_name(self, options: dict[str, Any]) -> str:
        return self.experiment

    def run(self, config: dict[str, Any]) -> RunResult:
        return self.runner(config)

    def handle(self, *args, **options):
        out_dir = options.get('out')
        try:
            overrides = {key: options.get(key) for key in OVERRIDE_KEYS}
            config = load_config(self.experiment_name(options), options.get('config'), overrides)
            out_dir = config['out']
            result = self.run(config)
            writer = ArtifactWriter(out_dir, config['format'])
            data_path = writer.write_table(result.name, result.header, result.rows)
            if result.inconclusive:
                envelope = LabResponse.inconclusive(data=result.summary)
            else:
                envelope = LabResponse.success(data=result.summary)
            envelope['data_file'] = data_path.name
            envelope['config'] = {key: value for key, value in config.items() if key != 'out'}
            summary_path = writer.write_summary(result.name, envelope)
        except Exception as exc:
            record, code = lab_exception_handler(exc)
            logger.error(f"实验失败 (退出码 {code}): {record['message']}")
            self._write_error(record, out_dir)
            self.stderr.write(json.dumps(_json_value(record), ensure_ascii=False, sort_keys=True))
            raise CommandError(record['message'], returncode=code)

        self.stdout.write(json.dumps({'data_file': str(data_path), 'summary_file': str(summary_path),
                                      'code': envelope['code']}, ensure_ascii=False, sort_keys=True))
        if result.inconclusive:
            raise CommandError(envelope['message'], returncode=4)

    @staticmethod
    def _write_error(record: dict, out_dir: Optional[str]) -> None:
        try:
            ArtifactWriter(out_dir or lab_setting('OUTPUT', 'DIR')).write_error(record)
        except OSError as exc:
            logger.warning(f"错误记录写出失败: {exc}")
