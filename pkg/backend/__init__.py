"""PDEForge 后端包"""

__version__ = "1.0.0"
__description__ = "LBM 求解器与多智能体代码生成流水线"
