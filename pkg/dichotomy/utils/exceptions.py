"""
实验室异常体系
每个异常都带有退出码，命令行层据此返回 2/3/4
"""
from typing import Any, Optional


class LabError(Exception):
    """实验室异常基类"""

    code = 3
    default_message = "数值实验失败"

    def __init__(self, message: Optional[str] = None, detail: Optional[dict[str, Any]] = None):
        super().__init__(message or self.default_message)
        self.message = message or self.default_message
        self.detail = detail or {}


class ConfigurationError(LabError):
    """配置错误"""
    code = 2
    default_message = "配置错误"


class ParameterError(ConfigurationError):
    """指数或网格参数不合法"""
    default_message = "参数不合法"


class DomainError(ConfigurationError):
    """求值点或区域超出定义域"""
    default_message = "超出定义域"


class ContractError(ConfigurationError):
    """输入违反前置条件"""
    default_message = "违反前置条件"


class NumericError(LabError):
    """数值失败（NaN、积分失败等）"""
    code = 3
    default_message = "数值失败"


class StiffnessError(NumericError):
    """显式格式时间步下溢"""
    default_message = "时间步下溢"


class ConvergenceError(NumericError):
    """迭代在预算内未收敛"""
    default_message = "迭代未收敛"

    def __init__(self, message: Optional[str] = None, residual: float = float('nan'),
                 iterations: int = 0):
        super().__init__(message, detail={'residual': residual, 'iterations': iterations})
        self.residual = residual
        self.iterations = iterations


class InconclusiveVerdict(LabError):
    """分类结论不确定"""
    code = 4
    default_message = "分类结论不确定"
