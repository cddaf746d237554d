"""
实验配置读取
扁平 `key = value` 文本（# 开头为注释）与命令行覆盖合并，再交给序列化器校验
"""
import logging
from pathlib import Path
from typing import Any, Optional

from dichotomy.serializers.experiment import ExperimentConfigSerializer
from dichotomy.utils.exceptions import ConfigurationError

logger = logging.getLogger('dichotomy')


def _normalize_key(key: str) -> str:
    return key.strip().lstrip('-').replace('-', '_')


def parse_config_file(path: str) -> dict[str, str]:
    """
    读取配置文件
    :param path: 文件路径
    :return: 原始字符串字典，值的类型转换交给序列化器
    """
    file_path = Path(path)
    if not file_path.is_file():
        raise ConfigurationError(f"配置文件不存在: {path}")
    values: dict[str, str] = {}
    for number, raw in enumerate(file_path.read_text(encoding='utf-8').splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigurationError(f"配置文件第 {number} 行格式错误: {raw!r}", detail={'line': number})
        key, value = line.split('=', 1)
        key = _normalize_key(key)
        if not key:
            raise ConfigurationError(f"配置文件第 {number} 行缺少键名", detail={'line': number})
        values[key] = value.strip()
    return values


def load_config(experiment: str, config_path: Optional[str] = None,
                overrides: Optional[dict[str, Any]] = None) -> dict[str, Any]:
    """
    合并并校验实验配置，优先级：命令行 > 配置文件 > 缺省值

    Raises:
        ConfigurationError: 校验失败，detail 中带有逐字段错误
    """
    merged: dict[str, Any] = {}
    if config_path:
        merged.update(parse_config_file(config_path))
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[_normalize_key(key)] = value
    merged['experiment'] = experiment
    serializer = ExperimentConfigSerializer(data=merged)
    if not serializer.is_valid():
        errors = {key: [str(message) for message in messages] for key, messages in serializer.errors.items()}
        raise ConfigurationError("实验配置校验失败", detail={'errors': errors})
    config = dict(serializer.validated_data)
    logger.info(f"实验配置: {experiment}, 输出目录 {config['out']}")
    return config
