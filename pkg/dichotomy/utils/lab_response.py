from typing import Any

import numpy as np

from dichotomy.utils.exceptions import LabError


class LabResponse:
    """统一实验结果格式，与错误记录共用 {code, message, data} 结构"""

    @staticmethod
    def success(data=None, message="实验完成", code=0):
        """成功响应"""
        return {
            "code": code,
            "message": message,
            "data": data
        }

    @staticmethod
    def inconclusive(data=None, message="分类结论不确定", code=4):
        """结论不确定，产物照常写出"""
        return {
            "code": code,
            "message": message,
            "data": data
        }

    @staticmethod
    def error(message="实验失败", code=3, data=None):
        """错误响应"""
        return {
            "code": code,
            "message": message,
            "data": data
        }


def _plain(value: Any) -> Any:
    """把 numpy 标量转为 JSON 可序列化的 Python 值"""
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def lab_exception_handler(exc: Exception) -> tuple[dict, int]:
    """
    自定义异常处理器

    Returns:
        tuple: (错误记录, 退出码)
    """
    if isinstance(exc, LabError):
        record = LabResponse.error(
            message=exc.message,
            code=exc.code,
            data={'type': type(exc).__name__, **_plain(exc.detail)}
        )
        return record, exc.code

    # 非实验室异常一律按数值失败处理
    record = LabResponse.error(
        message=str(exc) if str(exc) else "实验内部错误",
        code=3,
        data={'type': type(exc).__name__}
    )
    return record, 3
