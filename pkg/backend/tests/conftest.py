"""测试共享夹具"""

import shutil
from pathlib import Path
from typing import Dict

import numpy as np
import pytest

from core.config import BACKEND_DIR
from models.pipeline import Codebase
from models.simulation import (
    BCKind,
    BCRule,
    BoundaryEdge,
    InitKind,
    InitSpec,
    SimulationConfig,
    TaskSpec,
    TransportParams,
)
from services.agent_pipeline import load_codebase
from services.reference_tasks import apply_overrides, load_task
from services.task_descriptions import render_config


def write_fixtures(directory: Path, files: Dict[str, str]) -> Path:
    """按 {文件名: 内容} 写出脚本化回复"""
    directory.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        path = directory / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return directory


def artifact_reply(tester: str, modules: Dict[str, str] = None) -> str:
    """生成带文件名标题的代码块回复"""
    blocks = []
    for name, text in (modules or {}).items():
        blocks.append(f"### {name}\n```python\n{text}```\n")
    blocks.append(f"### test_case.py\n```python\n{tester}```\n")
    return "Here is the code.\n\n" + "\n".join(blocks)


SOLVER_MODULE = '''from models.simulation import TaskSpec
from services.reference_tasks import run_tester
from services.task_descriptions import parse_config_text


def solve(name, config_text):
    config = parse_config_text(config_text)
    return run_tester(TaskSpec(name=name, config=config))
'''

CONSISTENT = "CONSISTENT\nThe code implements every term of the equations.\n"
INCONSISTENT = "INCONSISTENT: missing advection term\nThe streaming step ignores the velocity field.\n"


@pytest.fixture
def ad_task() -> TaskSpec:
    """缩短到 100 步的平流-扩散高斯任务"""
    return apply_overrides(load_task("ad_gaussian"), {"steps": "100", "output_every": "50"})


@pytest.fixture
def good_reply(ad_task) -> str:
    tester = (
        "from ad_solver import solve\n\n"
        f'CONFIG_TEXT = """\n{render_config(ad_task.config, ad_task.name)}"""\n\n'
        f'solve("{ad_task.name}", CONFIG_TEXT)\n'
    )
    return artifact_reply(tester, {"ad_solver.py": SOLVER_MODULE})


@pytest.fixture
def broken_reply() -> str:
    tester = "solve_everything()\n"
    return artifact_reply(tester, {"ad_solver.py": SOLVER_MODULE})


@pytest.fixture
def codebase_copy(tmp_path) -> Codebase:
    """参考代码库（core、models、services）的可写副本"""
    root = tmp_path / "codebase"
    for package in ("core", "models", "services"):
        shutil.copytree(
            BACKEND_DIR / package,
            root / package,
            ignore=shutil.ignore_patterns("__pycache__", "*.pyc"),
        )
    return load_codebase(root)


@pytest.fixture
def happy_fixtures(tmp_path, good_reply) -> Path:
    return write_fixtures(
        tmp_path / "fixtures" / "happy",
        {"generator_1.txt": good_reply, "inspector1_1.txt": CONSISTENT},
    )


@pytest.fixture
def debug_fixtures(tmp_path, good_reply, broken_reply) -> Path:
    return write_fixtures(
        tmp_path / "fixtures" / "debug",
        {
            "generator_1.txt": broken_reply,
            "inspector1_1.txt": CONSISTENT,
            "debugger_1.txt": good_reply,
            "inspector2_1.txt": CONSISTENT,
        },
    )


@pytest.fixture
def perpetual_fixtures(tmp_path, broken_reply) -> Path:
    return write_fixtures(
        tmp_path / "fixtures" / "perpetual",
        {
            "generator_1.txt": broken_reply,
            "inspector1_1.txt": CONSISTENT,
            "debugger_1.txt": broken_reply,
            "inspector2_1.txt": CONSISTENT,
        },
    )


@pytest.fixture
def mixed_bc_config() -> SimulationConfig:
    """小网格上的上/左 Dirichlet、下/右 Neumann 配置"""
    return SimulationConfig(
        nx=12,
        ny=12,
        steps=4000,
        params=TransportParams(diffusivity=1.0, velocity=(0.1, 0.2)),
        bc=[
            BCRule(edge=BoundaryEdge.TOP, kind=BCKind.DIRICHLET, value=0.0),
            BCRule(edge=BoundaryEdge.BOTTOM, kind=BCKind.NEUMANN),
            BCRule(edge=BoundaryEdge.LEFT, kind=BCKind.DIRICHLET, value=1.0),
            BCRule(edge=BoundaryEdge.RIGHT, kind=BCKind.NEUMANN),
        ],
        init=InitSpec(kind=InitKind.UNIFORM, value=1.0),
        output_every=4000,
        steady_state=True,
    )


@pytest.fixture
def gaussian_field() -> np.ndarray:
    x = np.arange(40, dtype=float)[:, None]
    y = np.arange(40, dtype=float)[None, :]
    return np.exp(-((x - 22.0) ** 2 + (y - 17.0) ** 2) / (2 * 4.0 ** 2))
