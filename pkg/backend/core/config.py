"""应用程序配置模块"""

from pathlib import Path
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


BACKEND_DIR = Path(__file__).resolve().parents[1]
DATA_DIR = BACKEND_DIR / "data"


class Settings(BaseSettings):
    """应用程序设置

    字段名与环境变量一一对应（大小写不敏感），例如 ``llm_api_key`` 读取 ``LLM_API_KEY``。
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # 应用基础配置
    app_name: str = "PDEForge"
    app_version: str = "1.0.0"
    debug: bool = Field(default=False)

    # 日志配置
    log_level: str = Field(default="INFO")
    log_file: Optional[str] = Field(default=None)

    # 对话后端配置
    llm_api_url: Optional[str] = Field(default=None)
    llm_api_key: Optional[str] = Field(default=None)
    llm_model: str = Field(default="gpt-4o")
    llm_timeout: float = Field(default=120.0, gt=0)
    llm_max_retries: int = Field(default=2, ge=0)

    # 沙箱配置
    sandbox_run_command: str = Field(default="{python} {tester}")
    sandbox_timeout: float = Field(default=300.0, gt=0)
    sandbox_output_limit: int = Field(default=64 * 1024, gt=0)  # 64 KiB

    # 流水线迭代上限
    max_inspect1: int = Field(default=3, ge=1)
    max_inspect2: int = Field(default=3, ge=1)
    max_debug: int = Field(default=8, ge=1)

    # 文件存储配置
    runs_dir: str = Field(default="./runs")
    packer_subdir: str = Field(default="generated")
    tester_name: str = Field(default="test_case.py")
    codebase_dir: str = Field(default=str(BACKEND_DIR))
    guidelines_path: str = Field(default=str(DATA_DIR / "guidelines.tsv"))

    # 稳态判据
    steady_tol: float = Field(default=1e-8, gt=0)
    steady_check_every: int = Field(default=100, ge=1)
    steady_max_steps: int = Field(default=200_000, ge=1)

    # 批量评估
    batch_parallel: int = Field(default=4, ge=1)

    def get_runs_path(self) -> Path:
        """获取运行输出根目录"""
        return Path(self.runs_dir)

    def get_attempts_path(self) -> Path:
        """获取流水线尝试目录"""
        return self.get_runs_path() / "attempts"

    def ensure_directories(self):
        """确保必要的目录存在"""
        for directory in (self.get_runs_path(), self.get_attempts_path()):
            directory.mkdir(parents=True, exist_ok=True)


# 创建全局设置实例
settings = Settings()
