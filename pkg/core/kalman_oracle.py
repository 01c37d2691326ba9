"""
고전 칼만 필터/제어기 오라클
Classical Kalman Filter and Controller (ground truth)

모든 수용 검사의 기준값입니다.

실행 방정식:  x̂_t = x̂⁻_t + K_t (y_t − H x̂⁻_t),   x̂⁻_{t+1} = F x̂_t + B u_t
학습 방정식:  K_t = P⁻H'(HP⁻H' + R)⁻¹,          P⁻_{t+1} = F(I − K_t H)P⁻F' + Q
제어 (역방향): S_N = r,  L_t = (B'S_{t+1}B + g)⁻¹B'S_{t+1}F,
              S_t = (F' − L_t'B')S_{t+1}F + r

제어 이득의 첨자는 실행 시각 기준입니다: 시각 t의 제어 u_t = −L_t x̂_t 는 S_{t+1}로 만듭니다.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from core.errors import NumericalError, ParameterError, SingularMatrixError
from core.lds import LdsModel, Trajectory
from core.linalg import min_eigenvalue, solve_spd, symmetrize

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class KfState:
    """
    칼만 필터 상태

    Attributes:
        K: 현재 시각 t의 이득 (gain_ready일 때 유효)
        P_minus: 사전 오차 공분산 (학습 스텝 후에는 P⁻_{t+1})
        xhat: 사후 추정 x̂_t
        xhat_minus: 사전 추정 x̂⁻_t
        t: 시각
        gain_ready: K_t가 계산되어 실행 스텝을 기다리는 중
    """
    K: np.ndarray
    P_minus: np.ndarray
    xhat: np.ndarray
    xhat_minus: np.ndarray
    t: int = 0
    gain_ready: bool = False

    @classmethod
    def initial(cls, model: LdsModel, P0=None, x0_mean=None) -> 'KfState':
        """초기 상태 (기본: 모델의 초기 분포)"""
        P = model.P0 if P0 is None else symmetrize(P0)
        x0 = model.x0_mean if x0_mean is None else np.asarray(x0_mean, dtype=float)
        return cls(
            K=np.zeros((model.dx, model.dy)),
            P_minus=np.array(P, dtype=float),
            xhat=x0.copy(),
            xhat_minus=x0.copy(),
        )


# P⁻ 고유값 허용 오차 (입력 크기 대비): 음수 한계, 0으로 정리하는 한계
PSD_RTOL = 1e-9
PSD_ZERO_RTOL = 1e-12


def _clean_psd(P: np.ndarray, scale: float, name: str) -> np.ndarray:
    """
    반올림 수준의 고유값을 0으로 정리한 P

    scale 은 P를 만든 입력(FPF', Q, 이전 P)의 크기입니다.
    """
    scale = max(scale, 1e-300)
    lam = min_eigenvalue(P)
    if lam < -PSD_RTOL * scale:
        raise NumericalError(f"{name}: 양반정치 위반 (최소 고유값 {lam:.3e}, 기준 {scale:.3e})")
    if lam > PSD_ZERO_RTOL * scale:
        return P
    w, V = np.linalg.eigh(P)
    w = np.where(w <= PSD_ZERO_RTOL * scale, 0.0, w)
    return symmetrize((V * w) @ V.T)


def kf_learn_step(model: LdsModel, state: KfState) -> KfState:
    """
    학습 방정식 한 스텝

    K_t를 계산하고 P⁻를 P⁻_{t+1}로 진행합니다 (대칭화 포함).
    HP⁻ = 0 이면 (사전 추정이 정확) R 과 무관하게 K_t = 0 입니다.

    Raises:
        SingularMatrixError: HP⁻H' + R 가 수치적으로 특이
    """
    P = state.P_minus
    H = model.H
    HP = H @ P
    if not np.any(HP):
        K = np.zeros((model.dx, model.dy))
    else:
        # K' = S⁻¹ H P
        K = solve_spd(HP @ H.T + model.R, HP, 'HP⁻H\'+R').T
    I = np.eye(model.dx)
    FPF = model.F @ P @ model.F.T
    P_next = symmetrize(model.F @ (I - K @ H) @ P @ model.F.T + model.Q)
    scale = max(float(np.max(np.abs(FPF))), float(np.max(np.abs(model.Q))), float(np.max(np.abs(P))))
    P_next = _clean_psd(P_next, scale, 'P⁻')
    return replace(state, K=K, P_minus=P_next, gain_ready=True)


def kf_execute_step(model: LdsModel, state: KfState, y, u=None) -> KfState:
    """
    실행 방정식 한 스텝

    Raises:
        ParameterError: K_t가 아직 계산되지 않았거나 차원 불일치
    """
    if not state.gain_ready:
        raise ParameterError(f"t={state.t}: kf_learn_step으로 K_t를 먼저 계산해야 합니다")
    y = np.asarray(y, dtype=float).ravel()
    u = np.zeros(model.du) if u is None else np.asarray(u, dtype=float).ravel()
    if y.shape != (model.dy,) or u.shape != (model.du,):
        raise ParameterError(f"y/u 차원 불일치: {y.shape}, {u.shape}")
    xhat = state.xhat_minus + state.K @ (y - model.H @ state.xhat_minus)
    xhat_minus = model.F @ xhat + model.B @ u
    return replace(state, xhat=xhat, xhat_minus=xhat_minus, t=state.t + 1, gain_ready=False)


def kf_filter(model: LdsModel, ys: Sequence, us: Optional[Sequence] = None,
              state: Optional[KfState] = None) -> Dict[str, np.ndarray]:
    """
    측정 시퀀스 전체에 필터 적용

    Returns:
        Dict: 'xhat' (T, Dx), 'xhat_minus' (T, Dx) (각 시각의 사전 추정), 'K' (T, Dx, Dy)
    """
    state = KfState.initial(model) if state is None else state
    xs, xms, Ks = [], [], []
    for t, y in enumerate(ys):
        xms.append(state.xhat_minus)
        state = kf_learn_step(model, state)
        Ks.append(state.K)
        state = kf_execute_step(model, state, y, None if us is None else us[t])
        xs.append(state.xhat)
    return {'xhat': np.array(xs), 'xhat_minus': np.array(xms), 'K': np.array(Ks)}


def riccati_path(model: LdsModel, P0, steps: int) -> Dict[str, List[np.ndarray]]:
    """
    P⁻_t 와 K_t 경로 (t = 0..steps−1)

    Returns:
        Dict: 'P_minus' (길이 steps+1), 'K' (길이 steps)
    """
    state = KfState.initial(model, P0=P0)
    Ps, Ks = [state.P_minus], []
    for _ in range(steps):
        state = kf_learn_step(model, state)
        Ks.append(state.K)
        Ps.append(state.P_minus)
        state = replace(state, gain_ready=False, t=state.t + 1)
    return {'P_minus': Ps, 'K': Ks}


def steady_state_isotropic(q: float, rho: float) -> float:
    """
    등방 모델의 정상 상태 p* (P⁻ = p*·I)

    공식: p² = q p + q ρ  →  p* = [q + √(q² + 4qρ)] / 2
    """
    if q < 0 or rho < 0:
        raise ParameterError("q, ρ는 음수일 수 없습니다")
    return 0.5 * (q + np.sqrt(q * q + 4.0 * q * rho))


@dataclass
class KcSchedule:
    """
    고전 제어 이득 스케줄

    Attributes:
        L: {t: L_t} (t = t0..N−1)
        S: {t: S_t} (t = t0..N)
        N: 호라이즌
        t0: 시작 시각
    """
    L: Dict[int, np.ndarray] = field(default_factory=dict)
    S: Dict[int, np.ndarray] = field(default_factory=dict)
    N: int = 0
    t0: int = 0

    def gain(self, t: int) -> np.ndarray:
        if t not in self.L:
            raise ParameterError(f"t={t}: 스케줄 범위 [{self.t0}, {self.N - 1}] 밖입니다")
        return self.L[t]

    def gains_array(self) -> np.ndarray:
        """(N−t0, Du, Dx) 배열 (t0부터)"""
        return np.array([self.L[t] for t in range(self.t0, self.N)])


def kc_backward(model: LdsModel, N: int, t0: int = 0) -> KcSchedule:
    """
    역방향 Riccati 재귀로 제어 이득 계산

    Args:
        model: 모델 (g, r 양정치)
        N: 호라이즌 (N > t0)
        t0: 시작 시각

    Returns:
        KcSchedule: L_t (t0..N−1), S_t (t0..N)

    Example:
        >>> # 스칼라 F=B=H=g=r=1, N = t0+1 → L_{t0} = 0.5
    """
    if N <= t0:
        raise ParameterError(f"N({N}) > t0({t0}) 이어야 합니다")
    F, B = model.F, model.B
    S = symmetrize(model.r)
    sched = KcSchedule(N=N, t0=t0)
    sched.S[N] = S
    for t in range(N - 1, t0 - 1, -1):
        M = B.T @ S @ B + model.g
        try:
            L = solve_spd(M, B.T @ S @ F, "B'SB+g")
        except SingularMatrixError as e:
            raise AssertionError(f"g 양정치이면 B'SB+g는 특이할 수 없습니다: {e}") from e
        S = symmetrize((F.T - L.T @ B.T) @ S @ F + model.r)
        sched.L[t] = L
        sched.S[t] = S
    return sched


def evaluate_cost(trajectory: Trajectory, controls: Sequence, model: LdsModel,
                  t0: int, N: int) -> float:
    """
    한 실현의 총 비용

    공식: J = Σ_{t0}^{N−1} (u'gu + x'rx) + x_N' r x_N

    Args:
        trajectory: [t0, N] 구간의 상태를 포함하는 궤적
        controls: u_{t0}..u_{N−1}
        model: 비용 행렬 제공
    """
    by_t = {s.t: s.x for s in trajectory.states}
    missing = [t for t in range(t0, N + 1) if t not in by_t]
    if missing:
        raise ParameterError(f"궤적이 시각 {missing}를 포함하지 않습니다")
    if len(controls) < N - t0:
        raise ParameterError(f"controls 길이 {len(controls)} < {N - t0}")
    return cost_from_arrays(np.array([by_t[t] for t in range(t0, N + 1)]),
                            np.asarray(controls, dtype=float)[:N - t0], model)


def cost_from_arrays(X: np.ndarray, U: np.ndarray, model: LdsModel) -> float:
    """X: (N−t0+1, Dx), U: (N−t0, Du) 배열로 비용 계산"""
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float).reshape(-1, model.du)
    J = np.einsum('ti,ij,tj->', X, model.r, X)
    if U.size:
        J += np.einsum('ti,ij,tj->', U, model.g, U)
    return float(J)
