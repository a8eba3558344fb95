"""自定义异常模块"""

from typing import Any, Dict, List, Optional


class PDEForgeException(Exception):
    """PDEForge 基础异常类"""

    def __init__(self, message: str, error_code: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.error_code = error_code
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式"""
        return {
            "error": self.__class__.__name__,
            "message": self.message,
            "error_code": self.error_code,
            "details": self.details
        }


class ConfigurationError(PDEForgeException):
    """配置异常"""

    def __init__(self, message: str, config_key: Optional[str] = None):
        details = {}
        if config_key:
            details["config_key"] = config_key

        super().__init__(message, "CONFIGURATION_ERROR", details)


class ParameterRangeError(PDEForgeException):
    """物理参数越界异常"""

    def __init__(self, message: str, parameter: Optional[str] = None, value: Optional[Any] = None):
        details = {}
        if parameter:
            details["parameter"] = parameter
        if value is not None:
            details["value"] = str(value)

        super().__init__(message, "PARAMETER_RANGE_ERROR", details)


class ShapeMismatchError(PDEForgeException):
    """数组形状不匹配异常"""

    def __init__(self, message: str, expected: Optional[tuple] = None, actual: Optional[tuple] = None):
        details = {}
        if expected is not None:
            details["expected"] = list(expected)
        if actual is not None:
            details["actual"] = list(actual)

        super().__init__(message, "SHAPE_MISMATCH", details)


class DegenerateDensityError(PDEForgeException):
    """非正密度异常"""

    def __init__(self, message: str, node_count: Optional[int] = None):
        details = {}
        if node_count is not None:
            details["node_count"] = node_count

        super().__init__(message, "DEGENERATE_DENSITY", details)


class ReactionEvaluationError(PDEForgeException):
    """反应项求值异常"""

    def __init__(self, message: str, kind: Optional[str] = None):
        details = {}
        if kind:
            details["kind"] = kind

        super().__init__(message, "REACTION_ERROR", details)


class InstabilityError(PDEForgeException):
    """数值失稳异常（出现 NaN/Inf）"""

    def __init__(self, message: str, step: Optional[int] = None):
        details = {}
        if step is not None:
            details["step"] = step
        self.step = step

        super().__init__(message, "INSTABILITY", details)


class OracleInapplicableError(PDEForgeException):
    """解析解不适用异常"""

    def __init__(self, message: str, oracle: Optional[str] = None):
        details = {}
        if oracle:
            details["oracle"] = oracle

        super().__init__(message, "ORACLE_INAPPLICABLE", details)


class NoPeakError(PDEForgeException):
    """常数场无峰值异常"""

    def __init__(self, message: str = "场为常数，无法定位峰值"):
        super().__init__(message, "NO_PEAK", {})


class MeasurementError(PDEForgeException):
    """测量异常"""

    def __init__(self, message: str, measurement: Optional[str] = None):
        details = {}
        if measurement:
            details["measurement"] = measurement

        super().__init__(message, "MEASUREMENT_ERROR", details)


class PreconditionError(PDEForgeException):
    """前置条件不满足异常"""

    def __init__(self, message: str, operation: Optional[str] = None):
        details = {}
        if operation:
            details["operation"] = operation

        super().__init__(message, "PRECONDITION_ERROR", details)


class FileProcessingError(PDEForgeException):
    """文件处理异常"""

    def __init__(self, message: str, filename: Optional[str] = None, operation: Optional[str] = None):
        details = {}
        if filename:
            details["filename"] = filename
        if operation:
            details["operation"] = operation

        super().__init__(message, "FILE_PROCESSING_ERROR", details)


class DescriptionFormatError(PDEForgeException):
    """Math-Algo 描述文件格式异常"""

    def __init__(self, message: str, section: Optional[str] = None, line_number: Optional[int] = None):
        details = {}
        if section:
            details["section"] = section
        if line_number is not None:
            details["line_number"] = line_number

        super().__init__(message, "DESCRIPTION_FORMAT_ERROR", details)


class GenerationFormatError(PDEForgeException):
    """代码生成回复格式异常"""

    def __init__(self, message: str, agent: Optional[str] = None):
        details = {}
        if agent:
            details["agent"] = agent

        super().__init__(message, "GENERATION_FORMAT_ERROR", details)


class InspectionFormatError(PDEForgeException):
    """审查回复格式异常"""

    def __init__(self, message: str, which: Optional[int] = None):
        details = {}
        if which is not None:
            details["inspector"] = which

        super().__init__(message, "INSPECTION_FORMAT_ERROR", details)


class PackerCollisionError(PDEForgeException):
    """合并时文件名冲突异常"""

    def __init__(self, message: str, filenames: Optional[List[str]] = None):
        details = {}
        if filenames:
            details["filenames"] = list(filenames)

        super().__init__(message, "PACKER_COLLISION", details)


class ExternalServiceError(PDEForgeException):
    """外部服务异常"""

    def __init__(
        self,
        message: str,
        service: Optional[str] = None,
        status_code: Optional[int] = None,
        retries: Optional[int] = None,
    ):
        details = {}
        if service:
            details["service"] = service
        if status_code:
            details["status_code"] = status_code
        if retries is not None:
            details["retries"] = retries

        super().__init__(message, "EXTERNAL_SERVICE_ERROR", details)


class SandboxInfrastructureError(PDEForgeException):
    """沙箱基础设施异常（与被测程序失败区分）"""

    def __init__(self, message: str, command: Optional[str] = None):
        details = {}
        if command:
            details["command"] = command

        super().__init__(message, "SANDBOX_INFRASTRUCTURE_ERROR", details)


class RuleParseError(PDEForgeException):
    """规则文件解析异常"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        details = {}
        if line_number is not None:
            details["line_number"] = line_number
        self.line_number = line_number

        super().__init__(message, "RULE_PARSE_ERROR", details)


class RenameConflictError(PDEForgeException):
    """重命名目标标识符已存在异常"""

    def __init__(self, message: str, identifier: Optional[str] = None, filename: Optional[str] = None):
        details = {}
        if identifier:
            details["identifier"] = identifier
        if filename:
            details["filename"] = filename

        super().__init__(message, "RENAME_CONFLICT", details)


# 退出码分组
USAGE_ERRORS = (
    ConfigurationError,
    ParameterRangeError,
    DescriptionFormatError,
    RuleParseError,
)

INFRASTRUCTURE_ERRORS = (
    FileProcessingError,
    SandboxInfrastructureError,
    ExternalServiceError,
)
