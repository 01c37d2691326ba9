"""
신경망 칼만 추정기
Neural Kalman Estimator and System Identification

측정 공간에서 F̃, R, Z(또는 Z⁻¹)를 Hebbian 규칙으로 학습하며 상태를 추정합니다.

동작 모드:
- InitialF: 원시 측정으로 F̃ 학습  ε_t = F̂ y_{t−1} + ũ_{t−1} − y_t,  F̂ ← F̂ − γ_F ⟨ε y'_{t−1}⟩
- OfflineSensor: 신호 없는 센서 잡음으로 R 학습  R̂ ← (1−γ_R) R̂ + γ_R ⟨nn'⟩
- Kalman: η_t = F̂ ŷ_{t−1} + ũ_{t−1} − y_t,  ŷ_t = y_t + R̂ Z⁻¹ η_t,  ŷ⁻_{t+1} = F̂ ŷ_t + ũ_t
          (선택) F̂ ← F̂ − γ_F ⟨η ŷ'_{t−1}⟩,  Z 표현 학습

특징(feature) 단위 증분 학습에서는 특징 p가 특징 p−1까지 갱신된 행렬을 사용합니다.
한 스텝 안의 처리는 순차적이어야 합니다.

사용법:
    from core.neural_estimator import create_estimator, kalman_mode_step, EstimatorMode

    state = create_estimator(dy=2, n_feat=100, mode=EstimatorMode.KALMAN, F_hat=F, R_hat=R)
    reset_features(state, y0)
    for y in ys:
        kalman_mode_step(state, y)
"""

import copy
import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Deque, List, Optional

import numpy as np

from core.adaptive_rate import AdaptiveRateState, adaptive_rate_update
from core.errors import ModeError, ParameterError
from core.lateral import (
    DEFAULT_PASSES, DEFAULT_TOL, DirectInverseLateral, LateralInverse, NeumannLateral,
    make_lateral, neumann_apply,
)
from core.lds import RngStream
from core.linalg import second_moment, symmetrize

logger = logging.getLogger(__name__)

# 레짐 감지 기본 창 (잔차 기록은 2·창 만큼만 유지)
RESIDUAL_WINDOW = 10


class EstimatorMode(str, Enum):
    """추정기 동작 모드"""
    INITIAL_F = 'initial_f'
    OFFLINE_SENSOR = 'offline_sensor'
    KALMAN = 'kalman'


class SampleKind(str, Enum):
    """기대값 학습의 표본 방식"""
    FEATURES_ONLY = 'a'   # 한 시각의 특징 평균, γ = 1
    TIME_AVERAGE = 'b'    # 단일 특징의 시간 평균
    COMBINED = 'c'        # 특징 평균 + 시간 평균


@dataclass(frozen=True)
class SampleMethod:
    """
    표본 방식과 갱신당 학습률

    Attributes:
        kind: a / b / c
        n_feat: 특징 수
        gamma_m: 갱신 한 번에 적용하는 학습률 (증분 학습이면 γ/n_feat)
        incremental: 특징마다 순차 갱신 여부
    """
    kind: SampleKind
    n_feat: int
    gamma_m: float
    incremental: bool = False

    def __post_init__(self):
        kind = SampleKind(self.kind)
        object.__setattr__(self, 'kind', kind)
        if self.n_feat < 1:
            raise ParameterError(f"n_feat={self.n_feat} 는 1 이상이어야 합니다")
        if kind is SampleKind.FEATURES_ONLY:
            if self.gamma_m != 1.0 or self.incremental:
                raise ParameterError("방식 a는 γ_M = 1 배치 학습이어야 합니다")
        elif kind is SampleKind.TIME_AVERAGE:
            if self.n_feat != 1 or not (0.0 < self.gamma_m < 1.0):
                raise ParameterError(f"방식 b는 n_feat = 1, 0 < γ_M < 1 이어야 합니다 (n_feat={self.n_feat}, γ={self.gamma_m})")
            if self.gamma_m >= 0.1:
                logger.warning(f"⚠️ 방식 b 학습률 γ_M={self.gamma_m:g}: γ_M ≪ 1 이 아닙니다")
        else:
            if self.n_feat < 2 or not (0.0 < self.gamma_m < 1.0):
                raise ParameterError(f"방식 c는 n_feat > 1, 0 < γ_M < 1 이어야 합니다 (n_feat={self.n_feat}, γ={self.gamma_m})")

    @classmethod
    def from_rate(cls, kind, n_feat: int, gamma: float, incremental: bool = True) -> 'SampleMethod':
        """스텝당 학습률 γ에서 갱신당 학습률 도출 (증분이면 γ/n_feat)"""
        kind = SampleKind(kind)
        if kind is SampleKind.FEATURES_ONLY:
            return cls(kind, n_feat, 1.0, False)
        if kind is SampleKind.TIME_AVERAGE:
            return cls(kind, n_feat, gamma, False)
        return cls(kind, n_feat, gamma / n_feat if incremental else gamma, incremental)


@dataclass
class EstimatorState:
    """
    추정기 상태

    특징별 슬롯은 (n_feat, Dy) 배열입니다.
    """
    mode: EstimatorMode
    F_hat: np.ndarray
    R_hat: np.ndarray
    sample: SampleMethod
    z_rep: Optional[LateralInverse] = None
    # 갱신당 학습률
    rate_f: float = 0.05
    rate_f_refine: float = 0.05
    rate_r: float = 1.0
    # Z 표현 설정
    z_method: str = 'method1'
    z_init: str = 'sample'
    initial_gain: float = 0.5
    neumann_passes: int = DEFAULT_PASSES
    neumann_tol: float = DEFAULT_TOL
    # 학습 스위치
    refine_f: bool = True
    learn_z: bool = True
    learn_z_in_initial: bool = False
    r_learned: bool = False
    # 특징별 슬롯
    yhat_prev: Optional[np.ndarray] = None
    yhat_minus: Optional[np.ndarray] = None
    eta: Optional[np.ndarray] = None
    y_prev: Optional[np.ndarray] = None
    u_tilde_prev: Optional[np.ndarray] = None
    t: int = 0
    # 레짐 감지용 잔차 기록 (스텝당 평균 ‖ŷ − y‖, 최근 2·창)
    residuals: Deque[float] = field(default_factory=lambda: deque(maxlen=2 * RESIDUAL_WINDOW))
    # 적응 학습률 (None이면 고정)
    z_rate: Optional[AdaptiveRateState] = None
    f_rate: Optional[AdaptiveRateState] = None

    @property
    def dy(self) -> int:
        return self.F_hat.shape[0]

    @property
    def n_feat(self) -> int:
        return self.sample.n_feat

    @property
    def rate_z(self) -> float:
        if self.z_rate is not None and self.z_rate.enabled:
            return self.z_rate.rate
        return self.sample.gamma_m

    def current_rate_f(self, refine: bool) -> float:
        if self.f_rate is not None and self.f_rate.enabled:
            return self.f_rate.rate
        return self.rate_f_refine if refine else self.rate_f

    def gain(self) -> np.ndarray:
        """현재 R̂ Z⁻¹ (= I − HK 추정)"""
        if self.z_rep is None:
            raise ModeError("Z 표현이 아직 초기화되지 않았습니다")
        return self.z_rep.left_gain(self.R_hat)

    def copy(self) -> 'EstimatorState':
        return copy.deepcopy(self)


def create_estimator(
    dy: int,
    n_feat: int,
    mode: EstimatorMode = EstimatorMode.INITIAL_F,
    F_hat: Optional[np.ndarray] = None,
    R_hat: Optional[np.ndarray] = None,
    rng: Optional[RngStream] = None,
    f_init_scale: float = 0.1,
    sample: Optional[SampleMethod] = None,
    gamma_f: float = 5.0,
    gamma_f_refine: Optional[float] = None,
    gamma_r: float = 1.0,
    gamma_z: float = 1.0,
    z_method: str = 'method1',
    z_init: Optional[str] = None,
    initial_gain: float = 0.5,
    neumann_passes: int = DEFAULT_PASSES,
    neumann_tol: float = DEFAULT_TOL,
    refine_f: bool = True,
    learn_z: bool = True,
    learn_z_in_initial: bool = False,
    incremental: bool = True,
    z_rate: Optional[AdaptiveRateState] = None,
    f_rate: Optional[AdaptiveRateState] = None,
) -> EstimatorState:
    """
    추정기 생성

    학습률 gamma_*는 스텝당 값이며, 증분 학습이면 갱신당 γ/n_feat가 적용됩니다.
    F̂를 주지 않으면 [−f_init_scale, f_init_scale] 균등 난수로 초기화합니다.
    R̂를 주면 학습된 것으로 간주합니다 (OfflineSensor 생략 가능).
    """
    if z_method not in ('method1', 'method2'):
        raise ParameterError(f"z_method={z_method} (method1 | method2)")
    if sample is None:
        kind = SampleKind.TIME_AVERAGE if n_feat == 1 else SampleKind.COMBINED
        sample = SampleMethod.from_rate(kind, n_feat, gamma_z, incremental)
    if sample.n_feat != n_feat:
        raise ParameterError(f"SampleMethod.n_feat={sample.n_feat} != n_feat={n_feat}")
    if z_init is None:
        z_init = 'sample' if n_feat >= 100 else 'identity'
    if z_init not in ('sample', 'identity', 'gain'):
        raise ParameterError(f"z_init={z_init} (sample | identity | gain)")
    if not (0.0 < initial_gain <= 1.0):
        raise ParameterError(f"initial_gain={initial_gain} 는 (0, 1] 범위여야 합니다")

    if F_hat is None:
        rng = RngStream(0, 0) if rng is None else rng
        F_hat = rng.uniform(-f_init_scale, f_init_scale, (dy, dy))
    F_hat = np.array(F_hat, dtype=float)
    if F_hat.shape != (dy, dy):
        raise ParameterError(f"F_hat 모양 {F_hat.shape} != ({dy}, {dy})")
    r_learned = R_hat is not None
    R_hat = np.zeros((dy, dy)) if R_hat is None else symmetrize(R_hat)

    per_update = (lambda g: g / n_feat) if (incremental and n_feat > 1) else (lambda g: g)
    gamma_f_refine = gamma_f if gamma_f_refine is None else gamma_f_refine
    state = EstimatorState(
        mode=EstimatorMode(mode),
        F_hat=F_hat,
        R_hat=R_hat,
        sample=sample,
        rate_f=per_update(gamma_f),
        rate_f_refine=per_update(gamma_f_refine),
        rate_r=gamma_r,
        z_method=z_method,
        z_init=z_init,
        initial_gain=initial_gain,
        neumann_passes=neumann_passes,
        neumann_tol=neumann_tol,
        refine_f=refine_f,
        learn_z=learn_z,
        learn_z_in_initial=learn_z_in_initial,
        r_learned=r_learned,
        u_tilde_prev=np.zeros((n_feat, dy)),
        eta=np.zeros((n_feat, dy)),
        z_rate=z_rate,
        f_rate=f_rate,
    )
    if z_method == 'method2' and state.rate_z > 0.05:
        logger.warning(f"⚠️ Method 2 갱신당 학습률 {state.rate_z:g} > 0.05 (γ_Z ≪ 1 필요)")
    logger.info(
        f"🧠 추정기 생성: Dy={dy}, 특징 {n_feat}개, 모드={state.mode.value}, {z_method}, "
        f"표본방식={sample.kind.value}, γ̃_Z={sample.gamma_m:g}, γ̃_F={state.rate_f:g}"
    )
    return state


# ============================================================
# 기본 학습 규칙
# ============================================================

def learn_expectation(M, v_batch, z_batch, gamma: float, incremental: bool = False) -> np.ndarray:
    """
    기대값 학습  M' = (1−γ) M + γ ⟨v z'⟩

    Args:
        M: 현재 추정
        v_batch, z_batch: 같은 길이의 배치 (n, d)
        gamma: 학습률 (증분이면 표본당 학습률)
        incremental: True면 표본마다 순차 갱신

    Raises:
        ParameterError: 빈 배치 또는 길이 불일치
    """
    M = np.array(M, dtype=float)
    V = np.atleast_2d(np.asarray(v_batch, dtype=float))
    Z = np.atleast_2d(np.asarray(z_batch, dtype=float))
    if not incremental:
        return (1.0 - gamma) * M + gamma * second_moment(V, Z)
    second_moment(V, Z)  # 배치 검증
    for v, z in zip(V, Z):
        M = (1.0 - gamma) * M + gamma * np.outer(v, z)
    return M


def apply_zinv_method1(Ztilde, c: float, eta, n_passes: int = DEFAULT_PASSES,
                       tol: float = DEFAULT_TOL) -> np.ndarray:
    """Method 1 적용: c Σ Z̃ᵏ η (neumann_apply 참고)"""
    return neumann_apply(np.asarray(Ztilde, dtype=float), c, eta, n_passes, tol)


def _require_mode(state: EstimatorState, mode: EstimatorMode, op: str) -> None:
    if state.mode is not mode:
        raise ModeError(f"{op}: {mode.value} 모드에서만 호출할 수 있습니다 (현재 {state.mode.value})")


def _as_batch(state: EstimatorState, y, name: str) -> np.ndarray:
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    if Y.shape != (state.n_feat, state.dy):
        raise ParameterError(f"{name} 모양 {Y.shape} != ({state.n_feat}, {state.dy})")
    return Y


def _controls(state: EstimatorState, u_tilde) -> np.ndarray:
    if u_tilde is None:
        return np.zeros((state.n_feat, state.dy))
    U = np.asarray(u_tilde, dtype=float)
    return np.broadcast_to(U, (state.n_feat, state.dy)).copy()


def compute_eta(state: EstimatorState, y_t) -> np.ndarray:
    """η_t = ŷ⁻_t − y_t (특징별 저장 후 반환)"""
    if state.yhat_minus is None:
        raise ModeError("ŷ⁻ 가 아직 없습니다 (reset_features 또는 predict 먼저)")
    state.eta = state.yhat_minus - _as_batch(state, y_t, 'y_t')
    return state.eta


def learn_ztilde(state: EstimatorState, eta_batch) -> EstimatorState:
    """Method 1: Z̃' = (1−γ_Z)Z̃ + γ_Z I − γ_Z c ⟨ηη'⟩"""
    if not isinstance(state.z_rep, NeumannLateral):
        raise ParameterError("learn_ztilde는 Method 1 표현에서만 사용합니다")
    drive = state.z_rep.learn(eta_batch, state.rate_z)
    if state.z_rate is not None:
        state.z_rate = adaptive_rate_update(state.z_rate, drive)
    return state


def learn_zinv(state: EstimatorState, v_batch) -> EstimatorState:
    """Method 2: Z⁻¹' = (1+γ_Z)Z⁻¹ − γ_Z ⟨vv'⟩,  v = Z⁻¹η"""
    if not isinstance(state.z_rep, DirectInverseLateral):
        raise ParameterError("learn_zinv는 Method 2 표현에서만 사용합니다")
    drive = state.z_rep.learn_from_v(v_batch, state.rate_z)
    if state.z_rate is not None:
        state.z_rate = adaptive_rate_update(state.z_rate, drive)
    return state


def _learn_z(state: EstimatorState, eta_batch: np.ndarray) -> None:
    if isinstance(state.z_rep, NeumannLateral):
        learn_ztilde(state, eta_batch)
    else:
        learn_zinv(state, state.z_rep.apply_inverse(np.atleast_2d(eta_batch)))


def init_z(state: EstimatorState, eta_batch: Optional[np.ndarray] = None) -> EstimatorState:
    """Z₀ 초기화 (sample: ⟨ηη'⟩, gain: R̂/g₀, identity: I)"""
    d = state.dy
    Z0 = None
    if state.z_init == 'sample' and eta_batch is not None and len(eta_batch) >= d:
        Z0 = second_moment(eta_batch)
    elif state.z_init == 'gain' and np.linalg.matrix_rank(state.R_hat) == d:
        Z0 = state.R_hat / state.initial_gain
    if Z0 is None or np.linalg.matrix_rank(Z0) < d:
        if state.z_init != 'identity':
            logger.warning(f"⚠️ Z₀ 초기화 방식 '{state.z_init}' 사용 불가: 단위 행렬로 대체합니다")
        Z0 = np.eye(d)
    state.z_rep = make_lateral(state.z_method, Z0, state.neumann_passes, state.neumann_tol)
    logger.debug(f"Z₀ 초기화 ({state.z_init}): trace={np.trace(Z0):.4e}")
    return state


def _raw_f_row(state: EstimatorState, y_prev: np.ndarray, y_now: np.ndarray, u_prev: np.ndarray) -> np.ndarray:
    """한 특징의 원시 F̃ 갱신, 갱신 전 F̂로 계산한 ε 반환"""
    eps = state.F_hat @ y_prev + u_prev - y_now
    _f_update(state, eps[None, :], y_prev[None, :], refine=False)
    return eps


def _f_update(state: EstimatorState, err: np.ndarray, regressor: np.ndarray, refine: bool) -> None:
    rate = state.current_rate_f(refine)
    drive = -second_moment(err, regressor)
    state.F_hat = state.F_hat + rate * drive
    if state.f_rate is not None:
        state.f_rate = adaptive_rate_update(state.f_rate, drive)


# ============================================================
# 모드별 연산
# ============================================================

_TRANSITIONS = {
    (EstimatorMode.INITIAL_F, EstimatorMode.OFFLINE_SENSOR),
    (EstimatorMode.OFFLINE_SENSOR, EstimatorMode.KALMAN),
    (EstimatorMode.KALMAN, EstimatorMode.INITIAL_F),
}


def set_mode(state: EstimatorState, mode: EstimatorMode) -> EstimatorState:
    """
    모드 전이

    허용: InitialF→OfflineSensor→Kalman, Kalman→InitialF (레짐 변화),
    R̂가 이미 학습되어 있으면 InitialF→Kalman.

    Raises:
        ModeError: 허용되지 않는 전이
    """
    mode = EstimatorMode(mode)
    if mode is state.mode:
        return state
    pair = (state.mode, mode)
    shortcut = pair == (EstimatorMode.INITIAL_F, EstimatorMode.KALMAN) and state.r_learned
    if pair not in _TRANSITIONS and not shortcut:
        raise ModeError(f"모드 전이 불가: {state.mode.value} → {mode.value}")
    if mode is EstimatorMode.OFFLINE_SENSOR and state.rate_r < 1.0 and not state.r_learned:
        state.R_hat = np.zeros_like(state.R_hat)
    if mode is EstimatorMode.INITIAL_F:
        state.residuals.clear()
    logger.info(f"🔀 모드 전이: {state.mode.value} → {mode.value} (t={state.t})")
    state.mode = mode
    return state


def learn_r_offline(state: EstimatorState, noise_batch) -> EstimatorState:
    """
    R̂' = (1−γ_R) R̂ + γ_R ⟨nn'⟩  (신호 없는 센서 잡음)

    Raises:
        ModeError: OfflineSensor 모드가 아닐 때
    """
    _require_mode(state, EstimatorMode.OFFLINE_SENSOR, 'learn_r_offline')
    N = np.atleast_2d(np.asarray(noise_batch, dtype=float))
    state.R_hat = symmetrize(learn_expectation(state.R_hat, N, N, state.rate_r))
    state.r_learned = True
    return state


def learn_f_initial(state: EstimatorState, y_prev, y_now, u_tilde_prev=None) -> EstimatorState:
    """
    원시 측정으로 F̃ 학습

    ε_t = F̂ y_{t−1} + ũ_{t−1} − y_t,   F̂' = F̂ − γ_F ⟨ε_t y'_{t−1}⟩
    증분 학습이면 행(특징)마다 순차 갱신합니다. ε는 state.eta에 저장됩니다.

    Raises:
        ModeError: InitialF 모드가 아닐 때
    """
    _require_mode(state, EstimatorMode.INITIAL_F, 'learn_f_initial')
    Yp = np.atleast_2d(np.asarray(y_prev, dtype=float))
    Yn = np.atleast_2d(np.asarray(y_now, dtype=float))
    U = np.zeros_like(Yn) if u_tilde_prev is None else np.broadcast_to(u_tilde_prev, Yn.shape)
    if state.sample.incremental:
        eps = np.empty_like(Yn)
        for p in range(Yn.shape[0]):
            eps[p] = _raw_f_row(state, Yp[p], Yn[p], U[p])
    else:
        eps = Yp @ state.F_hat.T + U - Yn
        _f_update(state, eps, Yp, refine=False)
    if eps.shape == (state.n_feat, state.dy):
        state.eta = eps
    return state


def learn_f_refined(state: EstimatorState, yhat_prev, eta_now) -> EstimatorState:
    """
    추정값으로 F̃ 정밀 학습  F̂' = F̂ − γ_F ⟨η_t ŷ'_{t−1}⟩

    Raises:
        ModeError: Kalman 모드가 아니거나 정밀 학습이 꺼져 있을 때
    """
    _require_mode(state, EstimatorMode.KALMAN, 'learn_f_refined')
    if not state.refine_f:
        raise ModeError("learn_f_refined: F̃ 정밀 학습이 비활성화되어 있습니다")
    _f_update(state, np.atleast_2d(eta_now), np.atleast_2d(yhat_prev), refine=True)
    return state


def reset_features(state: EstimatorState, y_first) -> EstimatorState:
    """특징 슬롯 초기화: ŷ₀ = y₀, ŷ⁻₁ = F̂ y₀"""
    Y = _as_batch(state, y_first, 'y_first')
    state.yhat_prev = Y.copy()
    state.y_prev = Y.copy()
    state.eta = np.zeros_like(Y)
    state.u_tilde_prev = np.zeros_like(Y)
    state.yhat_minus = Y @ state.F_hat.T
    return state


def predict(state: EstimatorState, u_tilde=None) -> EstimatorState:
    """ŷ⁻_{t+1} = F̂ ŷ_t + ũ_t  (ũ는 원심성 사본으로 저장)"""
    U = _controls(state, u_tilde)
    state.yhat_minus = state.yhat_prev @ state.F_hat.T + U
    state.u_tilde_prev = U
    return state


def initial_f_step(state: EstimatorState, y_batch, u_tilde=None,
                   observer: Optional[Callable[[EstimatorState, int], None]] = None) -> EstimatorState:
    """
    InitialF 모드 한 스텝

    첫 관측이면 y만 저장합니다. learn_z_in_initial이면 ε로 Z도 학습하고
    ŷ_t = y_t + R̂ Z⁻¹ ε_t 로 추정을 냅니다 (그 외에는 ŷ_t = y_t).
    """
    _require_mode(state, EstimatorMode.INITIAL_F, 'initial_f_step')
    Y = _as_batch(state, y_batch, 'y_batch')
    if state.y_prev is None:
        reset_features(state, Y)
        return state
    Yp = state.y_prev
    U = state.u_tilde_prev
    Yhat = Y.copy()
    with_z = state.learn_z_in_initial and state.learn_z

    if with_z and state.z_rep is None:
        init_z(state, Yp @ state.F_hat.T + U - Y)

    if state.sample.incremental:
        eps_all = np.empty_like(Y)
        for p in range(state.n_feat):
            eps = _raw_f_row(state, Yp[p], Y[p], U[p])
            eps_all[p] = eps
            if with_z:
                _learn_z(state, eps[None, :])
                Yhat[p] = Y[p] + state.R_hat @ state.z_rep.apply_inverse(eps)
            if observer is not None:
                observer(state, p)
        state.eta = eps_all
    else:
        learn_f_initial(state, Yp, Y, U)
        if with_z:
            _learn_z(state, state.eta)
            Yhat = Y + state.z_rep.apply_inverse(state.eta) @ state.R_hat.T
        if observer is not None:
            observer(state, state.n_feat - 1)

    state.yhat_prev = Yhat
    state.y_prev = Y.copy()
    state.t += 1
    return predict(state, u_tilde)


def kalman_mode_step(state: EstimatorState, y_batch, u_tilde=None,
                     observer: Optional[Callable[[EstimatorState, int], None]] = None) -> EstimatorState:
    """
    Kalman 모드 한 스텝

    특징 p마다 순서대로:
        η_t(p) = F̂ ŷ_{t−1}(p) + ũ_{t−1}(p) − y_t(p)
        F̂ 갱신 (정밀 학습이 켜져 있을 때), Z 표현 갱신
        ŷ_t(p) = y_t(p) + R̂ Z⁻¹ η_t(p)
    마지막으로 ŷ⁻_{t+1} = F̂ ŷ_t + ũ_t 를 계산합니다. 폐루프에서는 제어를 계산한 뒤
    predict()를 다시 호출해 ũ_t를 반영합니다.

    Args:
        state: Kalman 모드 상태
        y_batch: (n_feat, Dy) 측정
        u_tilde: ũ_t (None이면 0)
        observer: 특징 하나를 처리할 때마다 호출되는 콜백 (state, p)

    Raises:
        ModeError: Kalman 모드가 아닐 때
    """
    _require_mode(state, EstimatorMode.KALMAN, 'kalman_mode_step')
    Y = _as_batch(state, y_batch, 'y_batch')
    if state.yhat_prev is None:
        return reset_features(state, Y)
    U = state.u_tilde_prev
    if state.z_rep is None:
        init_z(state, state.yhat_prev @ state.F_hat.T + U - Y)

    Yhat = np.empty_like(Y)
    if state.sample.incremental:
        Eta = np.empty_like(Y)
        for p in range(state.n_feat):
            yh_prev = state.yhat_prev[p].copy()
            eta = state.F_hat @ yh_prev + U[p] - Y[p]
            if state.refine_f:
                _f_update(state, eta[None, :], yh_prev[None, :], refine=True)
            if state.learn_z:
                _learn_z(state, eta[None, :])
            Yhat[p] = Y[p] + state.R_hat @ state.z_rep.apply_inverse(eta)
            Eta[p] = eta
            state.yhat_prev[p] = Yhat[p]
            if observer is not None:
                observer(state, p)
    else:
        Eta = state.yhat_prev @ state.F_hat.T + U - Y
        if state.refine_f:
            _f_update(state, Eta, state.yhat_prev, refine=True)
        if state.learn_z:
            _learn_z(state, Eta)
        Yhat = Y + state.z_rep.apply_inverse(Eta) @ state.R_hat.T
        state.yhat_prev = Yhat
        if observer is not None:
            observer(state, state.n_feat - 1)

    state.eta = Eta
    state.yhat_prev = Yhat
    state.y_prev = Y.copy()
    state.residuals.append(float(np.mean(np.linalg.norm(Yhat - Y, axis=1))))
    state.t += 1
    return predict(state, u_tilde)


def track_residuals(state: EstimatorState, window: int) -> EstimatorState:
    """잔차 기록 길이를 감지 창 두 개 (2·window) 로 맞춤"""
    if window < 1:
        raise ParameterError(f"window={window} 는 1 이상이어야 합니다")
    state.residuals = deque(state.residuals, maxlen=2 * window)
    return state


def detect_regime_change(state: EstimatorState, window: int, factor: float = 3.0) -> bool:
    """
    레짐 변화 감지

    최근 window 스텝의 평균 ‖ŷ − y‖ 가 그 직전 window 스텝 평균의 factor배를 넘으면 True.
    기록이 2·window 미만이면 False. 기록 한도가 2·window 보다 짧으면 늘립니다.
    """
    if window < 1:
        raise ParameterError(f"window={window} 는 1 이상이어야 합니다")
    if (state.residuals.maxlen or 0) < 2 * window:
        track_residuals(state, window)
    if state.mode is not EstimatorMode.KALMAN or len(state.residuals) < 2 * window:
        return False
    history = list(state.residuals)
    recent = float(np.mean(history[-window:]))
    baseline = float(np.mean(history[-2 * window:-window]))
    return recent > factor * baseline


def handle_regime_change(state: EstimatorState) -> EstimatorState:
    """
    InitialF 재진입

    Z 학습을 멈추고 잔차 기록을 비웁니다. 변화 직후의 η로 오염된 Z 표현은 버리고
    Kalman 모드로 돌아갈 때 z_init 방식으로 다시 초기화합니다. R̂는 유지합니다.
    """
    logger.warning(f"🚨 레짐 변화 감지 (t={state.t}): F̃ 재학습을 시작합니다")
    set_mode(state, EstimatorMode.INITIAL_F)
    state.z_rep = None
    return state


def evolve_eta_batch(F_tilde, R, zinv_apply: Callable[[np.ndarray], np.ndarray],
                     eta, y_now, y_next, u_tilde=None):
    """
    η 앙상블 전파 (학습 없음)

    ŷ_t = y_t + R Z⁻¹ η_t,   η_{t+1} = F̃ ŷ_t + ũ_t − y_{t+1}

    Returns:
        Tuple[η_{t+1}, ŷ_t]
    """
    eta = np.atleast_2d(eta)
    yhat = np.atleast_2d(y_now) + zinv_apply(eta) @ np.asarray(R).T
    eta_next = yhat @ np.asarray(F_tilde).T - np.atleast_2d(y_next)
    if u_tilde is not None:
        eta_next = eta_next + u_tilde
    return eta_next, yhat


class EstimatorPipeline:
    """
    시작 절차와 레짐 변화 처리

    InitialF (initial_f_steps 스텝) → OfflineSensor (R̂ 미학습 시) → Kalman,
    Kalman 모드에서 레짐 변화가 감지되면 InitialF로 돌아갑니다.

    사용법:
        pipeline = EstimatorPipeline(state, initial_f_steps=100, detect_window=10)
        for y in ys:
            pipeline.step(y)
            if pipeline.awaiting_sensor:
                pipeline.learn_sensor(noise)
    """

    def __init__(self, state: EstimatorState, initial_f_steps: int = 1,
                 detect_window: int = 0, detect_factor: float = 3.0):
        if initial_f_steps < 1:
            raise ParameterError(f"initial_f_steps={initial_f_steps} 는 1 이상이어야 합니다")
        self.state = state
        self.initial_f_steps = initial_f_steps
        self.detect_window = detect_window
        self.detect_factor = detect_factor
        if detect_window:
            track_residuals(state, detect_window)
        self.detections: List[int] = []
        self._initial_count = 0

        logger.info(f"EstimatorPipeline 초기화: InitialF {initial_f_steps}스텝, "
                    f"감지 창 {detect_window}, 배율 {detect_factor}")

    @property
    def awaiting_sensor(self) -> bool:
        return self.state.mode is EstimatorMode.OFFLINE_SENSOR

    def step(self, y_batch, u_tilde=None,
             observer: Optional[Callable[[EstimatorState, int], None]] = None) -> EstimatorState:
        s = self.state
        if s.mode is EstimatorMode.INITIAL_F:
            t_before = s.t
            initial_f_step(s, y_batch, u_tilde, observer)
            if s.t > t_before:
                self._initial_count += 1
            if self._initial_count >= self.initial_f_steps:
                set_mode(s, EstimatorMode.KALMAN if s.r_learned else EstimatorMode.OFFLINE_SENSOR)
        elif s.mode is EstimatorMode.OFFLINE_SENSOR:
            raise ModeError("OfflineSensor 모드: learn_sensor()로 R̂를 먼저 학습해야 합니다")
        else:
            kalman_mode_step(s, y_batch, u_tilde, observer)
            if self.detect_window and detect_regime_change(s, self.detect_window, self.detect_factor):
                self.detections.append(s.t)
                handle_regime_change(s)
                self._initial_count = 0
        return s

    def learn_sensor(self, noise_batch) -> EstimatorState:
        """오프라인 센서 잡음으로 R̂ 학습 후 Kalman 모드로 전이"""
        learn_r_offline(self.state, noise_batch)
        logger.info(f"📡 R̂ 학습 완료: diag={np.round(np.diag(self.state.R_hat), 8)}")
        return set_mode(self.state, EstimatorMode.KALMAN)


def execute_frozen(state: EstimatorState, yhat_minus, y) -> np.ndarray:
    """
    학습 없이 실행 방정식만 적용 (폐루프 평가용)

    ŷ_t = y_t + R̂ Z⁻¹ (ŷ⁻_t − y_t). ŷ⁻가 None이면 첫 관측으로 ŷ_t = y_t.
    """
    y = np.asarray(y, dtype=float)
    if yhat_minus is None:
        return y.copy()
    if state.z_rep is None:
        raise ModeError("Z 표현이 아직 초기화되지 않았습니다")
    eta = np.asarray(yhat_minus, dtype=float) - y
    return y + state.z_rep.apply_inverse(eta) @ state.R_hat.T
