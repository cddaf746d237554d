"""
实验室参数读取
所有数值参数集中在 settings.LAB_CONFIG，这里只负责按分组取值
"""
import copy
from typing import Any

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured


def lab_setting(section: str, key: str) -> Any:
    """
    读取一个数值参数
    :param section: 分组名，如 'EVOLUTION'
    :param key: 参数名，如 'CFL_SAFETY'
    :return: 参数值
    """
    try:
        return settings.LAB_CONFIG[section][key]
    except (AttributeError, KeyError) as exc:
        raise ImproperlyConfigured(f"LAB_CONFIG 缺少参数 {section}.{key}") from exc


def lab_config_with(**sections: dict[str, Any]) -> dict[str, dict[str, Any]]:
    """
    返回合并了局部修改的 LAB_CONFIG 副本，供 override_settings 使用
    例：lab_config_with(EIGEN={'MAX_ITERATIONS': 2})
    """
    merged = copy.deepcopy(settings.LAB_CONFIG)
    for section, values in sections.items():
        merged.setdefault(section, {}).update(values)
    return merged
