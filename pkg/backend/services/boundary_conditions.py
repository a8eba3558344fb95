"""逐边边界条件

所有规则都在迁移之后执行，壁面位于最后一层节点与虚拟固体节点之间（半程反弹）。
每个函数接收迁移后的分布 ``f`` 与碰撞后、迁移前的分布 ``f_post``，
对边界节点上每个出射方向 i，改写其反方向 ī 的入射分布。
"""

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import ConfigurationError
from core.logging import get_logger
from models.simulation import EDGE_ORDER, BCKind, BCRule, BoundaryEdge
from services.lbm_core import LatticeD2Q9, d2q9_lattice


logger = get_logger(__name__)

# 边界节点切片 (x, y)
_EDGE_SLICES: Dict[BoundaryEdge, Tuple] = {
    BoundaryEdge.TOP: (slice(None), -1),
    BoundaryEdge.BOTTOM: (slice(None), 0),
    BoundaryEdge.LEFT: (0, slice(None)),
    BoundaryEdge.RIGHT: (-1, slice(None)),
}

# 外法向 (axis, sign)
_EDGE_NORMALS: Dict[BoundaryEdge, Tuple[int, int]] = {
    BoundaryEdge.TOP: (1, 1),
    BoundaryEdge.BOTTOM: (1, -1),
    BoundaryEdge.LEFT: (0, -1),
    BoundaryEdge.RIGHT: (0, 1),
}

_OPPOSITE_EDGE = {
    BoundaryEdge.TOP: BoundaryEdge.BOTTOM,
    BoundaryEdge.BOTTOM: BoundaryEdge.TOP,
    BoundaryEdge.LEFT: BoundaryEdge.RIGHT,
    BoundaryEdge.RIGHT: BoundaryEdge.LEFT,
}


def outgoing_directions(edge: BoundaryEdge, lat: Optional[LatticeD2Q9] = None) -> List[int]:
    """穿过该边离开区域的方向，例如 top → [2, 5, 6]"""
    lat = lat or d2q9_lattice()
    axis, sign = _EDGE_NORMALS[BoundaryEdge(edge)]
    return [i for i, e in enumerate(lat.velocities) if e[axis] == sign]


def _bounce(f: np.ndarray, f_post: np.ndarray, edge: BoundaryEdge, lat: LatticeD2Q9, correction) -> np.ndarray:
    edge = BoundaryEdge(edge)
    out = f.copy()
    node = _EDGE_SLICES[edge]
    for i in outgoing_directions(edge, lat):
        out[node + (lat.opposite[i],)] = correction(i, f_post[node + (i,)])
    return out


def apply_dirichlet_scalar(
    f: np.ndarray,
    f_post: np.ndarray,
    edge: BoundaryEdge,
    phi_const: float,
    lat: Optional[LatticeD2Q9] = None,
) -> np.ndarray:
    """反反弹 Dirichlet：f_ī = −f_i^post + 2 w_i φ_const"""
    lat = lat or d2q9_lattice()
    return _bounce(f, f_post, edge, lat, lambda i, fi: -fi + 2.0 * lat.weights[i] * phi_const)


def apply_neumann_zero_scalar(
    f: np.ndarray,
    f_post: np.ndarray,
    edge: BoundaryEdge,
    lat: Optional[LatticeD2Q9] = None,
) -> np.ndarray:
    """反弹实现的零通量 Neumann：f_ī = f_i^post"""
    lat = lat or d2q9_lattice()
    return _bounce(f, f_post, edge, lat, lambda i, fi: fi)


def apply_noslip(
    f: np.ndarray,
    f_post: np.ndarray,
    edge: BoundaryEdge,
    lat: Optional[LatticeD2Q9] = None,
) -> np.ndarray:
    """静止壁面半程反弹"""
    lat = lat or d2q9_lattice()
    return _bounce(f, f_post, edge, lat, lambda i, fi: fi)


def apply_moving_wall(
    f: np.ndarray,
    f_post: np.ndarray,
    edge: BoundaryEdge,
    u_wall: Sequence[float],
    rho_wall: float = 1.0,
    lat: Optional[LatticeD2Q9] = None,
) -> np.ndarray:
    """移动壁面：f_ī = f_i^post − 6 w_i ρ_wall (e_i·u_wall)

    u_wall = 0 时与 ``apply_noslip`` 逐位相同。
    """
    lat = lat or d2q9_lattice()
    ux, uy = float(u_wall[0]), float(u_wall[1])

    def correction(i, fi):
        eu = lat.velocities[i][0] * ux + lat.velocities[i][1] * uy
        if eu == 0:
            return fi
        return fi - 6.0 * lat.weights[i] * rho_wall * eu

    return _bounce(f, f_post, edge, lat, correction)


@dataclass(frozen=True)
class BoundaryPass:
    """按 top、bottom、left、right 顺序执行的边界处理；后处理的边拥有角点"""

    rules: Tuple[BCRule, ...] = ()

    @property
    def is_periodic(self) -> bool:
        return not self.rules

    def edges(self) -> List[BoundaryEdge]:
        return [rule.edge for rule in self.rules]

    def apply(self, f_streamed: np.ndarray, f_post: np.ndarray) -> np.ndarray:
        """对迁移后的分布依次施加各边规则"""
        lat = d2q9_lattice()
        f = f_streamed
        for rule in self.rules:
            if rule.kind == BCKind.DIRICHLET:
                f = apply_dirichlet_scalar(f, f_post, rule.edge, rule.value, lat)
            elif rule.kind == BCKind.NEUMANN:
                f = apply_neumann_zero_scalar(f, f_post, rule.edge, lat)
            elif rule.kind == BCKind.NOSLIP:
                f = apply_noslip(f, f_post, rule.edge, lat)
            elif rule.kind == BCKind.MOVING_WALL:
                f = apply_moving_wall(f, f_post, rule.edge, rule.wall_velocity, 1.0, lat)
        return f


def assemble_bc_pass(rules: Iterable[BCRule]) -> BoundaryPass:
    """组装边界处理

    未列出的边为周期边界；同一条边出现两次时报配置错误。
    """
    rules = list(rules)
    seen = set()
    for rule in rules:
        if rule.edge in seen:
            raise ConfigurationError(f"{rule.edge.value} 边重复指定了边界条件", config_key=f"bc_{rule.edge.value}")
        seen.add(rule.edge)

    active = sorted(
        (r for r in rules if r.kind != BCKind.PERIODIC),
        key=lambda r: EDGE_ORDER.index(r.edge),
    )
    active_edges = {r.edge for r in active}
    for edge in (r.edge for r in active):
        if _OPPOSITE_EDGE[edge] not in active_edges:
            logger.warning(
                f"{edge.value} 边有边界条件而 {_OPPOSITE_EDGE[edge].value} 边为周期边界，"
                f"从 {_OPPOSITE_EDGE[edge].value} 边离开的分布将被 {edge.value} 边覆盖"
            )
    return BoundaryPass(rules=tuple(active))
