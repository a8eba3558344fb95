"""D2Q9 格子 Boltzmann 内核

标量输运（平流-扩散-反应）与流体（牛顿 / 幂律非牛顿）共用同一套 BGK 碰撞、迁移和矩计算。
分布函数数组形状为 ``(nx, ny, 9)``，第一维为 x。
"""

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np

from core.exceptions import (
    DegenerateDensityError,
    InstabilityError,
    ParameterRangeError,
    ReactionEvaluationError,
    ShapeMismatchError,
)
from core.logging import get_logger
from models.simulation import (
    InitKind,
    NewtonianFluid,
    PowerLawModel,
    ReactionKind,
    ReactionTerm,
    SimulationConfig,
    TransportParams,
)


logger = get_logger(__name__)

ArrayLike = Union[float, np.ndarray]

# 粘度换算使用的参考密度（格子单位）
REFERENCE_DENSITY = 1.0


@dataclass(frozen=True)
class LatticeD2Q9:
    """D2Q9 格子常数"""

    velocities: np.ndarray  # (9, 2) 整数
    weights: np.ndarray  # (9,)
    opposite: np.ndarray  # (9,)
    cs2: float = 1.0 / 3.0

    @property
    def q(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=1)
def d2q9_lattice() -> LatticeD2Q9:
    """返回标准 D2Q9 格子"""
    velocities = np.array(
        [[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1], [1, 1], [-1, 1], [-1, -1], [1, -1]],
        dtype=np.int64,
    )
    weights = np.array([4 / 9] + [1 / 9] * 4 + [1 / 36] * 4)
    opposite = np.array([0, 3, 4, 1, 2, 7, 8, 5, 6], dtype=np.int64)
    velocities.setflags(write=False)
    weights.setflags(write=False)
    opposite.setflags(write=False)
    return LatticeD2Q9(velocities=velocities, weights=weights, opposite=opposite)


# ---------------------------------------------------------------------------
# 松弛参数
# ---------------------------------------------------------------------------

def _check_freq_val(freq_val: ArrayLike, name: str = "freq_val"):
    values = np.ravel(np.asarray(freq_val, dtype=float))
    invalid = ~((values > 0) & (values < 2))  # NaN 也算越界
    if np.any(invalid):
        raise ParameterRangeError(
            "松弛频率必须位于 (0, 2) 内",
            parameter=name,
            value=float(values[invalid][0]),
        )


def omega_from_diffusivity(diffusivity: float) -> float:
    """由扩散系数求松弛频率 ω = 1 / (3D + 1/2)"""
    if not np.isfinite(diffusivity) or diffusivity <= 0:
        raise ParameterRangeError("扩散系数必须为正", parameter="diffusivity", value=diffusivity)
    freq_val = 1.0 / (3.0 * diffusivity + 0.5)
    _check_freq_val(freq_val)
    return freq_val


def omega_from_viscosity(viscosity: ArrayLike) -> ArrayLike:
    """由运动粘度求松弛频率，支持逐点数组"""
    nu = np.asarray(viscosity, dtype=float)
    if not np.all(np.isfinite(nu)) or np.any(nu <= 0):
        raise ParameterRangeError("运动粘度必须为正", parameter="viscosity", value=float(np.min(nu)))
    freq_val = 1.0 / (3.0 * nu + 0.5)
    return float(freq_val) if freq_val.ndim == 0 else freq_val


def diffusivity_from_omega(freq_val: ArrayLike) -> ArrayLike:
    """ω 的逆关系：D（或 ν）= c_s² (1/ω − 1/2)"""
    _check_freq_val(freq_val)
    value = (1.0 / np.asarray(freq_val, dtype=float) - 0.5) / 3.0
    return float(value) if value.ndim == 0 else value


# ---------------------------------------------------------------------------
# 平衡态、碰撞、源项、迁移
# ---------------------------------------------------------------------------

def _velocity_field(u, shape: Tuple[int, int]) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape == (2,):
        return np.broadcast_to(u, (*shape, 2))
    if u.shape != (*shape, 2):
        raise ShapeMismatchError("速度场形状与标量场不一致", expected=(*shape, 2), actual=u.shape)
    return u


def _projections(u: np.ndarray, lat: LatticeD2Q9) -> np.ndarray:
    # e_i·u，形状 (nx, ny, 9)
    return u @ lat.velocities.T.astype(float)


def equilibrium_scalar(phi: np.ndarray, u, lat: Optional[LatticeD2Q9] = None) -> np.ndarray:
    """标量平衡分布 f_i^eq = w_i φ (1 + e_i·u / c_s²)，对 u 线性"""
    lat = lat or d2q9_lattice()
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2:
        raise ShapeMismatchError("标量场必须是二维数组", actual=phi.shape)
    u = _velocity_field(u, phi.shape)
    eu = _projections(u, lat)
    return lat.weights * phi[..., None] * (1.0 + eu / lat.cs2)


def equilibrium_fluid(rho: np.ndarray, u, lat: Optional[LatticeD2Q9] = None) -> np.ndarray:
    """二阶 Navier–Stokes 平衡分布"""
    lat = lat or d2q9_lattice()
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 2:
        raise ShapeMismatchError("密度场必须是二维数组", actual=rho.shape)
    if np.any(rho <= 0):
        raise DegenerateDensityError("密度必须处处为正", node_count=int(np.sum(rho <= 0)))
    u = _velocity_field(u, rho.shape)
    eu = _projections(u, lat)
    usq = np.sum(u * u, axis=-1)[..., None]
    cs2 = lat.cs2
    return lat.weights * rho[..., None] * (
        1.0 + eu / cs2 + eu * eu / (2.0 * cs2 * cs2) - usq / (2.0 * cs2)
    )


def collide_bgk(f: np.ndarray, feq: np.ndarray, freq_val: ArrayLike) -> np.ndarray:
    """BGK 碰撞 f' = f − ω (f − f^eq)；ω 可以是标量或逐点场"""
    if f.shape != feq.shape:
        raise ShapeMismatchError("f 与 f^eq 形状不一致", expected=f.shape, actual=feq.shape)
    _check_freq_val(freq_val)
    if np.ndim(freq_val) == 0:
        return f - float(freq_val) * (f - feq)
    freq_val = np.asarray(freq_val, dtype=float)
    if freq_val.shape != f.shape[:-1]:
        raise ShapeMismatchError("逐点 ω 形状与网格不一致", expected=f.shape[:-1], actual=freq_val.shape)
    return f - freq_val[..., None] * (f - feq)


def reaction_rate(term: ReactionTerm, phi: np.ndarray) -> np.ndarray:
    """计算反应速率 R(φ)

    logistic 为 rφ(1−φ)；表格型在采样点间线性插值，区间外取端点值。
    """
    phi = np.asarray(phi, dtype=float)
    if term.kind == ReactionKind.NONE:
        return np.zeros_like(phi)
    if term.kind == ReactionKind.LOGISTIC:
        rate = term.rate * phi * (1.0 - phi)
    else:
        xs = np.array([p for p, _ in term.table])
        ys = np.array([r for _, r in term.table])
        rate = np.interp(phi, xs, ys)
    if not np.all(np.isfinite(rate)):
        raise ReactionEvaluationError("反应项出现非有限值", kind=term.kind.value)
    return rate


def apply_reaction_source(
    f: np.ndarray,
    phi: np.ndarray,
    term: ReactionTerm,
    lat: Optional[LatticeD2Q9] = None,
    dt: float = 1.0,
) -> np.ndarray:
    """显式 Euler 源项 f_i ← f_i + w_i R(φ) Δt"""
    if term.kind == ReactionKind.NONE:
        return f
    lat = lat or d2q9_lattice()
    return f + lat.weights * (dt * reaction_rate(term, phi))[..., None]


def stream(f: np.ndarray, lat: Optional[LatticeD2Q9] = None) -> np.ndarray:
    """周期迁移 f_i(x + e_i) ← f_i(x)"""
    lat = lat or d2q9_lattice()
    out = np.empty_like(f)
    for i, (ex, ey) in enumerate(lat.velocities):
        out[..., i] = np.roll(f[..., i], shift=(int(ex), int(ey)), axis=(0, 1))
    return out


# ---------------------------------------------------------------------------
# 宏观量
# ---------------------------------------------------------------------------

def moments_scalar(f: np.ndarray) -> np.ndarray:
    return f.sum(axis=-1)


def moments_fluid(f: np.ndarray, lat: Optional[LatticeD2Q9] = None) -> Tuple[np.ndarray, np.ndarray]:
    """返回 (ρ, u)"""
    lat = lat or d2q9_lattice()
    rho = f.sum(axis=-1)
    degenerate = ~(rho > 0)
    if np.any(degenerate):
        raise DegenerateDensityError("密度必须处处为正", node_count=int(np.sum(degenerate)))
    momentum = f @ lat.velocities.astype(float)
    return rho, momentum / rho[..., None]


def strain_rate_noneq(
    f: np.ndarray,
    feq: np.ndarray,
    rho: np.ndarray,
    freq_val: ArrayLike,
    lat: Optional[LatticeD2Q9] = None,
) -> np.ndarray:
    """由非平衡矩恢复应变率张量

    E_αβ = −(3ω / 2ρ) Σ_i e_iα e_iβ (f_i − f_i^eq)，使用碰撞前的 f。
    返回形状 ``(nx, ny, 2, 2)``，按构造对称。
    """
    lat = lat or d2q9_lattice()
    if f.shape != feq.shape:
        raise ShapeMismatchError("f 与 f^eq 形状不一致", expected=f.shape, actual=feq.shape)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise DegenerateDensityError("密度必须处处为正", node_count=int(np.sum(rho <= 0)))

    e = lat.velocities.astype(float)
    fneq = f - feq
    pi_xx = fneq @ (e[:, 0] * e[:, 0])
    pi_yy = fneq @ (e[:, 1] * e[:, 1])
    pi_xy = fneq @ (e[:, 0] * e[:, 1])

    scale = -1.5 * np.asarray(freq_val, dtype=float) / rho
    strain = np.empty((*rho.shape, 2, 2))
    strain[..., 0, 0] = scale * pi_xx
    strain[..., 1, 1] = scale * pi_yy
    strain[..., 0, 1] = scale * pi_xy
    strain[..., 1, 0] = strain[..., 0, 1]
    return strain


def shear_rate(strain: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """γ̇ = max(√(2 E:E), floor)"""
    contraction = np.sum(strain * strain, axis=(-2, -1))
    return np.maximum(np.sqrt(2.0 * contraction), floor)


def apparent_viscosity(strain: np.ndarray, model: PowerLawModel) -> np.ndarray:
    """幂律表观粘度 μ = K γ̇^(n−1)，未截断"""
    gamma = shear_rate(strain, model.shear_floor)
    return model.consistency * np.power(gamma, model.behavior_index - 1.0)


def powerlaw_viscosity(strain: np.ndarray, model: PowerLawModel) -> np.ndarray:
    """逐点运动粘度 ν = clamp(μ / ρ₀, ν_min, ν_max)"""
    nu_min, nu_max = model.viscosity_bounds
    mu = apparent_viscosity(strain, model)
    return np.clip(mu / REFERENCE_DENSITY, nu_min, nu_max)


# ---------------------------------------------------------------------------
# 状态与时间推进
# ---------------------------------------------------------------------------

@dataclass
class ScalarState:
    """标量输运状态"""

    f: np.ndarray
    phi: np.ndarray
    velocity: np.ndarray
    step: int = 0


@dataclass
class FluidState:
    """流体状态；幂律流体的 freq_val 为上一步的逐点松弛频率"""

    f: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    freq_val: ArrayLike
    step: int = 0


def initial_scalar_field(config: SimulationConfig) -> np.ndarray:
    init = config.init
    if init.kind == InitKind.UNIFORM:
        return np.full((config.nx, config.ny), float(init.value))
    xc, yc = init.resolved_center(config.nx, config.ny)
    x = np.arange(config.nx, dtype=float)[:, None]
    y = np.arange(config.ny, dtype=float)[None, :]
    r2 = (x - xc) ** 2 + (y - yc) ** 2
    return init.amplitude * np.exp(-r2 / (2.0 * init.sigma ** 2))


def init_scalar_state(config: SimulationConfig, lat: Optional[LatticeD2Q9] = None) -> ScalarState:
    """按配置构造标量初始状态（分布取平衡态）"""
    if config.is_fluid:
        raise ParameterRangeError("配置描述的是流体而不是标量输运", parameter="params")
    phi = initial_scalar_field(config)
    velocity = np.array(_velocity_field(config.params.velocity, phi.shape))
    f = equilibrium_scalar(phi, velocity * config.time_step, lat)
    return ScalarState(f=f, phi=phi, velocity=velocity)


def init_fluid_state(config: SimulationConfig, lat: Optional[LatticeD2Q9] = None) -> FluidState:
    """静止流体初始状态，ρ = 1，u = 0"""
    if not config.is_fluid:
        raise ParameterRangeError("配置描述的是标量输运而不是流体", parameter="params")
    shape = (config.nx, config.ny)
    rho = np.ones(shape)
    u = np.zeros((*shape, 2))
    f = equilibrium_fluid(rho, u, lat)
    params = config.params
    if isinstance(params, NewtonianFluid):
        freq_val: ArrayLike = omega_from_viscosity(params.viscosity)
    else:
        freq_val = omega_from_viscosity(powerlaw_viscosity(np.zeros((*shape, 2, 2)), params))
    return FluidState(f=f, rho=rho, u=u, freq_val=freq_val)


def _check_finite(step: int, *arrays: np.ndarray):
    for array in arrays:
        if not np.all(np.isfinite(array)):
            logger.error(f"第 {step} 步出现非有限值")
            raise InstabilityError(f"数值失稳：第 {step} 步出现 NaN/Inf", step=step)


def _identity_pass(f_streamed: np.ndarray, f_post: np.ndarray) -> np.ndarray:
    return f_streamed


def step_scalar(state: ScalarState, config: SimulationConfig, boundary=None) -> ScalarState:
    """推进一步：碰撞 → 反应源 → 迁移 → 边界 → 矩

    ``boundary`` 为 ``BoundaryPass``（或任何 ``apply(f_streamed, f_post)`` 可调用对象），缺省为全周期。
    物理量按 Δx = 1、Δt = ``config.time_step`` 换算为格子单位：D Δt、u Δt、R Δt。
    """
    params: TransportParams = config.params
    lat = d2q9_lattice()
    dt = config.time_step
    freq_val = omega_from_diffusivity(params.diffusivity * dt)

    feq = equilibrium_scalar(state.phi, state.velocity * dt, lat)
    f_post = collide_bgk(state.f, feq, freq_val)
    f_post = apply_reaction_source(f_post, state.phi, config.reaction, lat, dt)
    f_new = stream(f_post, lat)
    apply = boundary.apply if boundary is not None else _identity_pass
    f_new = apply(f_new, f_post)
    phi = moments_scalar(f_new)

    step = state.step + 1
    _check_finite(step, phi)
    return replace(state, f=f_new, phi=phi, step=step)


def relaxation_field(
    state: FluidState,
    feq: np.ndarray,
    params: Union[NewtonianFluid, PowerLawModel],
    lat: Optional[LatticeD2Q9] = None,
) -> ArrayLike:
    """本步使用的松弛频率

    牛顿流体为常数；幂律流体用上一步的 ω 计算应变率，再迭代
    ``fixed_point_iterations`` 次得到逐点 ω。
    """
    if isinstance(params, NewtonianFluid):
        return omega_from_viscosity(params.viscosity)
    freq_val = state.freq_val
    for _ in range(params.fixed_point_iterations):
        strain = strain_rate_noneq(state.f, feq, state.rho, freq_val, lat)
        freq_val = omega_from_viscosity(powerlaw_viscosity(strain, params))
    return freq_val


def step_fluid(state: FluidState, config: SimulationConfig, boundary=None) -> FluidState:
    """推进一步：矩 → 平衡态 → (幂律) 逐点 ω → 碰撞 → 迁移 → 边界 → 矩"""
    lat = d2q9_lattice()
    feq = equilibrium_fluid(state.rho, state.u, lat)
    freq_val = relaxation_field(state, feq, config.params, lat)

    f_post = collide_bgk(state.f, feq, freq_val)
    f_new = stream(f_post, lat)
    apply = boundary.apply if boundary is not None else _identity_pass
    f_new = apply(f_new, f_post)

    step = state.step + 1
    _check_finite(step, f_new)
    try:
        rho, u = moments_fluid(f_new, lat)
    except DegenerateDensityError as e:
        raise InstabilityError(f"数值失稳：第 {step} 步密度非正", step=step) from e
    return FluidState(f=f_new, rho=rho, u=u, freq_val=freq_val, step=step)
