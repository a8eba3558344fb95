"""VTK 与输出清单读写

写出 legacy ASCII STRUCTURED_POINTS（x 最快变化，15 位有效数字）；
读取时同时接受 legacy ``.vtk`` 与 ASCII ImageData ``.vtu``。
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from lxml import etree
from pydantic import ValidationError

from core.exceptions import FileProcessingError
from models.simulation import OutputManifest


MANIFEST_NAME = "manifest.json"
VTK_SUFFIXES = (".vtk", ".vtu")

_NUMBER_FORMAT = "{:.15g}"

PathLike = Union[str, Path]


@dataclass
class VtkFields:
    """读回的网格场"""

    dimensions: Tuple[int, int]
    fields: Dict[str, np.ndarray] = field(default_factory=dict)

    def scalar(self, name: str) -> Optional[np.ndarray]:
        value = self.fields.get(name)
        if value is None or value.ndim != 2:
            return None
        return value

    def vector(self, name: str) -> Optional[np.ndarray]:
        value = self.fields.get(name)
        if value is None or value.ndim != 3:
            return None
        return value


@dataclass
class SnapshotData:
    timestep: int
    filename: str
    fields: Dict[str, np.ndarray]


@dataclass
class SimulationOutput:
    """一次 Tester 运行的结果：最终场、快照、时间序列与清单"""

    task: str
    output_dir: Path
    final_fields: Dict[str, np.ndarray]
    snapshots: List[SnapshotData]
    time_series: List[Dict[str, Optional[float]]]
    steps_run: int
    converged: Optional[bool] = None
    manifest: Optional[OutputManifest] = None

    def snapshot_at(self, timestep: int) -> Optional[SnapshotData]:
        for snapshot in self.snapshots:
            if snapshot.timestep == timestep:
                return snapshot
        return None

    @property
    def final_scalar(self) -> Optional[np.ndarray]:
        return self.final_fields.get("phi")


def _format(values: np.ndarray) -> str:
    return " ".join(_NUMBER_FORMAT.format(v) for v in values)


def write_vtk(path: PathLike, fields: Dict[str, np.ndarray], title: str = "PDEForge output") -> Path:
    """写 legacy ASCII STRUCTURED_POINTS 文件

    标量场形状 ``(nx, ny)`` 写成 SCALARS，向量场 ``(nx, ny, 2)`` 写成 VECTORS（z 分量补 0）。
    """
    if not fields:
        raise FileProcessingError("没有可写出的场", filename=str(path), operation="write_vtk")
    shapes = {np.shape(a)[:2] for a in fields.values()}
    if len(shapes) != 1:
        raise FileProcessingError("场的网格尺寸不一致", filename=str(path), operation="write_vtk")
    nx, ny = shapes.pop()

    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nx} {ny} 1",
        "ORIGIN 0 0 0",
        "SPACING 1 1 1",
        f"POINT_DATA {nx * ny}",
    ]
    for name, array in fields.items():
        array = np.asarray(array, dtype=float)
        if array.ndim == 2:
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_NUMBER_FORMAT.format(v) for v in array.T.ravel())
        elif array.ndim == 3 and array.shape[2] == 2:
            lines.append(f"VECTORS {name} double")
            rows = array.transpose(1, 0, 2).reshape(-1, 2)
            lines.extend(f"{_format(row)} 0" for row in rows)
        else:
            raise FileProcessingError(f"无法写出形状为 {array.shape} 的场 {name}", filename=str(path), operation="write_vtk")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise FileProcessingError(f"写 VTK 文件失败: {e}", filename=str(path), operation="write_vtk") from e
    return path


def _reshape_points(values: np.ndarray, nx: int, ny: int, components: int) -> np.ndarray:
    if components == 1:
        return values.reshape(ny, nx).T.copy()
    points = values.reshape(ny, nx, components).transpose(1, 0, 2)
    return points[..., :2].copy()


def read_vtk(path: PathLike) -> VtkFields:
    """读取 legacy ASCII STRUCTURED_POINTS 文件"""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").split("\n")
    except (OSError, UnicodeDecodeError) as e:
        raise FileProcessingError(f"读取 VTK 文件失败: {e}", filename=str(path), operation="read_vtk") from e

    def fail(reason: str) -> FileProcessingError:
        return FileProcessingError(f"VTK 文件格式错误: {reason}", filename=str(path), operation="read_vtk")

    if not lines or not lines[0].startswith("# vtk DataFile"):
        raise fail("缺少文件头")
    if len(lines) < 3 or lines[2].strip().upper() != "ASCII":
        raise fail("只支持 ASCII 格式")

    words = " ".join(lines[3:]).split()
    nx = ny = None
    fields: Dict[str, np.ndarray] = {}
    pos = 0
    try:
        while pos < len(words):
            keyword = words[pos].upper()
            if keyword == "DATASET":
                if words[pos + 1].upper() != "STRUCTURED_POINTS":
                    raise fail(f"不支持的数据集 {words[pos + 1]}")
                pos += 2
            elif keyword == "DIMENSIONS":
                nx, ny, nz = (int(w) for w in words[pos + 1:pos + 4])
                if nz != 1:
                    raise fail("只支持二维网格")
                pos += 4
            elif keyword in ("ORIGIN", "SPACING"):
                pos += 4
            elif keyword == "POINT_DATA":
                count = int(words[pos + 1])
                if nx is None or count != nx * ny:
                    raise fail("POINT_DATA 与 DIMENSIONS 不一致")
                pos += 2
            elif keyword == "SCALARS":
                name = words[pos + 1]
                pos += 3
                components = 1
                if words[pos].isdigit():
                    components = int(words[pos])
                    pos += 1
                if words[pos].upper() == "LOOKUP_TABLE":
                    pos += 2
                size = nx * ny * components
                values = np.array(words[pos:pos + size], dtype=float)
                if values.size != size:
                    raise fail(f"场 {name} 数据不足")
                fields[name] = _reshape_points(values, nx, ny, components)
                pos += size
            elif keyword == "VECTORS":
                name = words[pos + 1]
                pos += 3
                size = nx * ny * 3
                values = np.array(words[pos:pos + size], dtype=float)
                if values.size != size:
                    raise fail(f"场 {name} 数据不足")
                fields[name] = _reshape_points(values, nx, ny, 3)
                pos += size
            else:
                raise fail(f"无法识别的关键字 {words[pos]}")
    except (IndexError, ValueError, TypeError) as e:
        raise fail(str(e)) from e

    if nx is None:
        raise fail("缺少 DIMENSIONS")
    return VtkFields(dimensions=(nx, ny), fields=fields)


def read_vtu(path: PathLike) -> VtkFields:
    """读取 ASCII ImageData ``.vtu`` 文件"""
    path = Path(path)

    def fail(reason: str) -> FileProcessingError:
        return FileProcessingError(f"VTU 文件格式错误: {reason}", filename=str(path), operation="read_vtu")

    try:
        root = etree.parse(str(path)).getroot()
    except (OSError, etree.XMLSyntaxError) as e:
        raise fail(str(e)) from e

    image = root.find("ImageData")
    if root.tag != "VTKFile" or image is None:
        raise fail("只支持 ImageData 数据集")
    try:
        x0, x1, y0, y1, z0, z1 = (int(v) for v in image.get("WholeExtent", "").split())
    except ValueError as e:
        raise fail("WholeExtent 无效") from e
    if z1 != z0:
        raise fail("只支持二维网格")
    nx, ny = x1 - x0 + 1, y1 - y0 + 1

    fields: Dict[str, np.ndarray] = {}
    for array in image.iterfind("Piece/PointData/DataArray"):
        if array.get("format", "ascii") != "ascii":
            raise fail("只支持 ascii 数据")
        name = array.get("Name")
        components = int(array.get("NumberOfComponents", "1"))
        try:
            values = np.array((array.text or "").split(), dtype=float)
        except ValueError as e:
            raise fail(str(e)) from e
        if values.size != nx * ny * components:
            raise fail(f"场 {name} 数据长度不符")
        fields[name] = _reshape_points(values, nx, ny, components)
    return VtkFields(dimensions=(nx, ny), fields=fields)


def read_grid_file(path: PathLike) -> VtkFields:
    """按扩展名读取 .vtk 或 .vtu"""
    if Path(path).suffix.lower() == ".vtu":
        return read_vtu(path)
    return read_vtk(path)


def file_checksum(path: PathLike) -> str:
    """文件 SHA-256"""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(output_dir: PathLike, manifest: OutputManifest) -> Path:
    path = Path(output_dir) / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def read_manifest(output_dir: PathLike) -> OutputManifest:
    """读取输出目录中的清单"""
    path = Path(output_dir) / MANIFEST_NAME
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        return OutputManifest.model_validate(data)
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise FileProcessingError(f"读取清单失败: {e}", filename=str(path), operation="read_manifest") from e


def list_grid_files(output_dir: PathLike) -> List[Path]:
    """输出目录中的全部 .vtk / .vtu 文件（递归，按路径排序）"""
    root = Path(output_dir)
    if not root.is_dir():
        return []
    return sorted(p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in VTK_SUFFIXES)
