"""PDEForge 核心模块

包含应用程序的核心功能：
- 配置管理
- 日志系统
- 异常处理
"""

from .config import settings, Settings
from .logging import get_logger, performance_logger, security_logger
from .exceptions import PDEForgeException

__all__ = [
    'settings',
    'Settings',
    'get_logger',
    'performance_logger',
    'security_logger',
    'PDEForgeException'
]
