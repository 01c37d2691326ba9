"""
선형 동적 시스템
Linear Dynamical System (plant + sensor)

플랜트 x' = F x + B u + m,  m ~ N(0, Q)
센서   y  = H x + n,        n ~ N(0, R)

주요 기능:
- LdsModel: F, B, H, Q, R, g, r 및 초기 상태 분포
- RngStream: (seed, stream id) 단위의 재현 가능한 난수 스트림
- step_plant() / measure(): 한 스텝 시뮬레이션
- simulate_ensemble(): 특징(feature)마다 독립 스트림을 쓰는 궤적 앙상블
- simulate_block(): 10⁵ 규모 몬테카를로용 벡터화 시뮬레이터

사용법:
    from core.lds import LdsModel, RngStream, simulate_ensemble

    model = LdsModel.rotation_example()
    trajectories = simulate_ensemble(model, n_feat=100, horizon=7, rng=RngStream(seed=0))
"""

import logging
from dataclasses import dataclass, field, replace
from enum import IntEnum
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.errors import ParameterError
from core.linalg import check_symmetric, min_eigenvalue, psd_factor

logger = logging.getLogger(__name__)

STREAMS_PER_FEATURE = 8

# 단위 분산 잡음 분포 (2차 모멘트만 모델이 정함)
NOISE_FAMILIES = ('gaussian', 'uniform', 'laplace')


class NoiseSource(IntEnum):
    """잡음원 식별자 (스트림 id의 하위 자리)"""
    INITIAL = 0
    PLANT = 1
    SENSOR = 2
    OFFLINE_SENSOR = 3
    CONTROL_G = 4
    CONTROL_R = 5
    MISC = 6


def rotation(deg: float) -> np.ndarray:
    """2차원 회전 행렬 (반시계, 도 단위)"""
    a = np.deg2rad(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True, eq=False)
class LdsModel:
    """
    플랜트/센서/비용 파라미터

    Attributes:
        F: 상태 전이 행렬 (Dx×Dx)
        B: 제어 입력 행렬 (Dx×Du)
        H: 측정 행렬 (Dy×Dx)
        Q: 플랜트 잡음 공분산 (Dx×Dx, 양반정치)
        R: 실제 측정 잡음 공분산 (Dy×Dy, 양반정치)
        g: 제어 비용 행렬 (Du×Du, 양정치)
        r: 상태 비용 행렬 (Dx×Dx, 양정치)
        x0_mean: 초기 상태 평균 (기본 (1, 0, ...))
        P0: 초기 상태 공분산 (기본 I)
        noise_family: 잡음 분포 (gaussian, uniform, laplace; 평균 0, 분산은 Q/R/P0)
    """
    F: np.ndarray
    B: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    g: np.ndarray
    r: np.ndarray
    x0_mean: Optional[np.ndarray] = None
    P0: Optional[np.ndarray] = None
    noise_family: str = 'gaussian'

    def __post_init__(self):
        if self.noise_family not in NOISE_FAMILIES:
            raise ParameterError(f"noise_family: {self.noise_family} (가능: {', '.join(NOISE_FAMILIES)})")
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        dx = F.shape[0]
        if F.shape != (dx, dx):
            raise ParameterError(f"F: 정방 행렬이 아닙니다 (shape={F.shape})")
        B = np.asarray(self.B, dtype=float).reshape(dx, -1)
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        if H.shape[1] != dx:
            raise ParameterError(f"H 열 수 {H.shape[1]} != Dx {dx}")
        dy, du = H.shape[0], B.shape[1]

        x0 = np.zeros(dx) if self.x0_mean is None else np.asarray(self.x0_mean, dtype=float).ravel()
        if self.x0_mean is None:
            x0[0] = 1.0
        P0 = np.eye(dx) if self.P0 is None else self.P0

        checked = {
            'Q': (self.Q, dx, False), 'R': (self.R, dy, False),
            'g': (self.g, du, True), 'r': (self.r, dx, True),
            'P0': (P0, dx, False),
        }
        for name, (M, dim, definite) in checked.items():
            A = check_symmetric(M, name)
            if A.shape != (dim, dim):
                raise ParameterError(f"{name}: 차원 {A.shape} != ({dim}, {dim})")
            lam = min_eigenvalue(A)
            scale = max(float(np.max(np.abs(A))), 1e-300)
            if definite and lam <= 0.0:
                raise ParameterError(f"{name}: 양정치가 아닙니다 (최소 고유값 {lam:.3e})")
            if not definite and lam < -1e-10 * scale:
                raise ParameterError(f"{name}: 양반정치가 아닙니다 (최소 고유값 {lam:.3e})")
            object.__setattr__(self, name, A)
        if x0.shape != (dx,):
            raise ParameterError(f"x0_mean 길이 {x0.size} != Dx {dx}")

        object.__setattr__(self, 'F', F)
        object.__setattr__(self, 'B', B)
        object.__setattr__(self, 'H', H)
        object.__setattr__(self, 'x0_mean', x0)

    @property
    def dx(self) -> int:
        return self.F.shape[0]

    @property
    def dy(self) -> int:
        return self.H.shape[0]

    @property
    def du(self) -> int:
        return self.B.shape[1]

    @cached_property
    def q_factor(self) -> np.ndarray:
        return psd_factor(self.Q, 'Q')

    @cached_property
    def r_factor(self) -> np.ndarray:
        return psd_factor(self.R, 'R')

    @cached_property
    def p0_factor(self) -> np.ndarray:
        return psd_factor(self.P0, 'P0')

    def with_changes(self, **changes) -> 'LdsModel':
        """일부 필드만 바꾼 새 모델"""
        return replace(self, **changes)

    @classmethod
    def rotation_example(
        cls,
        plant_deg: float = 15.0,
        measurement_deg: float = 50.0,
        q: float = 1e-5,
        rho: float = 1e-4,
        g_scale: float = 1.0,
        r_scale: float = 1.0,
    ) -> 'LdsModel':
        """
        수치 예제 모델: 원점 기준 2차원 회전

        F = 15° 회전, H = 50° 회전, Q = q·I, R = ρ·I, B = I
        """
        I = np.eye(2)
        return cls(
            F=rotation(plant_deg), B=I.copy(), H=rotation(measurement_deg),
            Q=q * I, R=rho * I, g=g_scale * I, r=r_scale * I,
        )


@dataclass
class RngStream:
    """
    재현 가능한 난수 스트림

    동일한 (seed, stream_id)는 비트 단위로 동일한 난수열을 만듭니다.
    PCG64 + SeedSequence(spawn_key=(stream_id,)) 기반입니다.
    """
    seed: int = 0
    stream_id: int = 0
    family: str = 'gaussian'
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0:
            raise ParameterError("seed와 stream_id는 음수일 수 없습니다")
        if self.family not in NOISE_FAMILIES:
            raise ParameterError(f"알 수 없는 잡음 분포: {self.family}")
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    @classmethod
    def for_feature(cls, seed: int, feature: int, source: NoiseSource, family: str = 'gaussian') -> 'RngStream':
        """특징 번호와 잡음원으로 스트림 생성"""
        return cls(seed, feature * STREAMS_PER_FEATURE + int(source), family)

    def standard_normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def unit_noise(self, size=None) -> np.ndarray:
        """평균 0, 분산 1 표본 (family 분포)"""
        if self.family == 'uniform':
            return self._gen.uniform(-np.sqrt(3.0), np.sqrt(3.0), size)
        if self.family == 'laplace':
            return self._gen.laplace(0.0, np.sqrt(0.5), size)
        return self._gen.standard_normal(size)


@dataclass(frozen=True, eq=False)
class PlantState:
    """플랜트 상태 x_t"""
    x: np.ndarray
    t: int = 0


@dataclass
class Trajectory:
    """
    한 특징의 궤적

    controls[t]는 상태 t 이후에 가해진 u_t 입니다.
    """
    states: List[PlantState] = field(default_factory=list)
    measurements: List[np.ndarray] = field(default_factory=list)
    ideal_measurements: List[np.ndarray] = field(default_factory=list)
    controls: List[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.states)

    def as_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(X, Y, Yideal, U) 배열 반환"""
        X = np.array([s.x for s in self.states])
        return X, np.array(self.measurements), np.array(self.ideal_measurements), np.array(self.controls)

    def to_frame(self) -> pd.DataFrame:
        """시간별 DataFrame (x_i, y_i, Y_i, u_i 열)"""
        X, Y, Yi, U = self.as_arrays()
        data = {'t': [s.t for s in self.states]}
        for name, arr in (('x', X), ('y', Y), ('Y', Yi), ('u', U)):
            for i in range(arr.shape[1]):
                data[f'{name}{i + 1}'] = arr[:, i]
        return pd.DataFrame(data)


def sample_gaussian(cov, rng: RngStream, size: Optional[int] = None) -> np.ndarray:
    """
    N(0, cov) 표본

    Args:
        cov: 대칭 양반정치 공분산
        rng: 난수 스트림
        size: None이면 벡터 1개, 정수면 (size, d) 배치

    Returns:
        np.ndarray: L·z (L은 psd_factor 인수)

    Raises:
        ParameterError: 비대칭 또는 부정부호 cov
    """
    return draw_with_factor(psd_factor(cov), rng, size)


def draw_with_factor(L: np.ndarray, rng: RngStream, size: Optional[int] = None) -> np.ndarray:
    """미리 계산한 인수 L로 공분산 LL' 표본 추출 (분포는 rng.family)"""
    d = L.shape[0]
    if size is None:
        return L @ rng.unit_noise(d)
    return rng.unit_noise((size, d)) @ L.T


def _check_vector(v, dim: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    if v.shape != (dim,):
        raise ParameterError(f"{name}: 길이 {v.size} != {dim}")
    return v


def draw_initial_state(model: LdsModel, rng: RngStream) -> PlantState:
    """x₀ ~ N(x̄₀, P₀)"""
    return PlantState(x=model.x0_mean + draw_with_factor(model.p0_factor, rng), t=0)


def step_plant(model: LdsModel, s: PlantState, u, rng: RngStream) -> PlantState:
    """
    플랜트 한 스텝: x' = F x + B u + m

    Raises:
        ParameterError: 차원 불일치
    """
    x = _check_vector(s.x, model.dx, 'x')
    u = _check_vector(np.zeros(model.du) if u is None else u, model.du, 'u')
    m = draw_with_factor(model.q_factor, rng)
    return PlantState(x=model.F @ x + model.B @ u + m, t=s.t + 1)


def measure(model: LdsModel, s: PlantState, rng: RngStream) -> Tuple[np.ndarray, np.ndarray]:
    """
    센서 측정

    Returns:
        Tuple[y, Y]: 잡음 측정 y = Hx + n, 이상 측정 Y = Hx (오라클/테스트 전용)
    """
    x = _check_vector(s.x, model.dx, 'x')
    Y = model.H @ x
    return Y + draw_with_factor(model.r_factor, rng), Y


def simulate_ensemble(
    model: LdsModel,
    n_feat: int,
    horizon: int,
    controls: Optional[Sequence] = None,
    rng: Optional[RngStream] = None,
) -> List[Trajectory]:
    """
    특징 앙상블 시뮬레이션

    특징 p는 (seed, p, 잡음원)마다 독립 스트림을 가지므로
    특징 순서나 병렬 실행과 무관하게 같은 결과를 냅니다.

    Args:
        model: 모델
        n_feat: 특징 수 (≥ 1)
        horizon: 궤적 길이 (≥ 1)
        controls: 길이 horizon의 u 시퀀스 (None이면 0)
        rng: 루트 스트림 (seed만 사용)

    Returns:
        List[Trajectory]: n_feat개의 궤적
    """
    if n_feat < 1 or horizon < 1:
        raise ParameterError(f"n_feat({n_feat})와 horizon({horizon})은 1 이상이어야 합니다")
    seed = 0 if rng is None else rng.seed
    if controls is None:
        controls = [np.zeros(model.du)] * horizon
    if len(controls) < horizon:
        raise ParameterError(f"controls 길이 {len(controls)} < horizon {horizon}")

    trajectories = []
    for p in range(n_feat):
        rng_x0 = RngStream.for_feature(seed, p, NoiseSource.INITIAL, model.noise_family)
        rng_m = RngStream.for_feature(seed, p, NoiseSource.PLANT, model.noise_family)
        rng_n = RngStream.for_feature(seed, p, NoiseSource.SENSOR, model.noise_family)

        traj = Trajectory()
        s = draw_initial_state(model, rng_x0)
        for t in range(horizon):
            y, Y = measure(model, s, rng_n)
            u = _check_vector(controls[t], model.du, 'u')
            traj.states.append(s)
            traj.measurements.append(y)
            traj.ideal_measurements.append(Y)
            traj.controls.append(u)
            if t < horizon - 1:
                s = step_plant(model, s, u, rng_m)
        trajectories.append(traj)

    logger.debug(f"앙상블 시뮬레이션 완료: {n_feat}개 특징 × {horizon} 스텝 (seed={seed})")
    return trajectories


@dataclass
class EnsembleBlock:
    """
    벡터화 시뮬레이션 결과

    Attributes:
        X: (horizon, n_feat, Dx) 상태
        Y: (horizon, n_feat, Dy) 잡음 측정
        Y_ideal: (horizon, n_feat, Dy) 이상 측정
    """
    X: np.ndarray
    Y: np.ndarray
    Y_ideal: np.ndarray

    @property
    def final_states(self) -> np.ndarray:
        return self.X[-1]


def simulate_block(
    model: LdsModel,
    n_feat: int,
    horizon: int,
    seed: int = 0,
    x_init: Optional[np.ndarray] = None,
    segment: int = 0,
    controls: Optional[np.ndarray] = None,
) -> EnsembleBlock:
    """
    잡음원마다 스트림 하나를 쓰는 벡터화 시뮬레이터

    segment 번호가 스트림을 분리하므로 x_init으로 이어 붙인 구간(모델 교체 등)도
    서로 독립 잡음을 받습니다.

    Args:
        model: 모델
        n_feat: 특징 수
        horizon: 스텝 수
        seed: 시드
        x_init: (n_feat, Dx) 시작 상태 (None이면 초기 분포에서 추출)
        segment: 구간 번호
        controls: (horizon, n_feat, Du) 또는 (horizon, Du) 제어 (None이면 0)
    """
    if n_feat < 1 or horizon < 1:
        raise ParameterError(f"n_feat({n_feat})와 horizon({horizon})은 1 이상이어야 합니다")
    base = segment * STREAMS_PER_FEATURE
    rng_x0 = RngStream(seed, base + NoiseSource.INITIAL, model.noise_family)
    rng_m = RngStream(seed, base + NoiseSource.PLANT, model.noise_family)
    rng_n = RngStream(seed, base + NoiseSource.SENSOR, model.noise_family)

    if x_init is None:
        x = model.x0_mean + draw_with_factor(model.p0_factor, rng_x0, n_feat)
    else:
        x = np.asarray(x_init, dtype=float).reshape(n_feat, model.dx)

    X = np.empty((horizon, n_feat, model.dx))
    Y = np.empty((horizon, n_feat, model.dy))
    Yi = np.empty_like(Y)
    for t in range(horizon):
        X[t] = x
        Yi[t] = x @ model.H.T
        Y[t] = Yi[t] + draw_with_factor(model.r_factor, rng_n, n_feat)
        if t < horizon - 1:
            x = x @ model.F.T + draw_with_factor(model.q_factor, rng_m, n_feat)
            if controls is not None:
                x = x + np.asarray(controls[t]) @ model.B.T
    return EnsembleBlock(X=X, Y=Y, Y_ideal=Yi)


def continue_block(
    model: LdsModel,
    block: EnsembleBlock,
    horizon: int,
    seed: int,
    segment: int,
) -> EnsembleBlock:
    """
    이전 블록의 마지막 상태에서 한 스텝 진행한 뒤 새 모델로 이어서 시뮬레이션

    모델이 바뀌는 시점(레짐 변화)의 첫 전이부터 새 F가 적용됩니다.
    """
    rng_m = RngStream(seed, segment * STREAMS_PER_FEATURE + NoiseSource.MISC, model.noise_family)
    x = block.final_states @ model.F.T + draw_with_factor(model.q_factor, rng_m, block.X.shape[1])
    return simulate_block(model, block.X.shape[1], horizon, seed, x_init=x, segment=segment)


def sensor_noise_batch(model: LdsModel, n: int, seed: int = 0) -> np.ndarray:
    """신호 없는 순수 센서 잡음 (n, Dy), 오프라인 센서 모드용"""
    return draw_with_factor(model.r_factor, RngStream(seed, NoiseSource.OFFLINE_SENSOR, model.noise_family), n)


if __name__ == "__main__":
    print("=== LDS 시뮬레이션 테스트 ===")
    model = LdsModel.rotation_example()
    trajs = simulate_ensemble(model, n_feat=3, horizon=5, rng=RngStream(seed=0))
    print(trajs[0].to_frame().round(4))
