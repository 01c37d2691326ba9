"""
적응 학습률
Adaptive Learning Rate (Murata et al. style)

온라인 학습에서 학습률을 스스로 조절합니다. 갱신식 (docs/ADAPTIVE_RATE.md 참고):

    r    ← (1 − δ) r + δ · g          g: 이번 갱신의 Hebbian 구동항 (평탄화)
    rate ← rate + α · rate · (β‖r‖ − rate)
    rate ← clip(rate, floor, cap)

파라미터 {α, β, γ, δ} 중 γ는 초기 학습률입니다.
기본값: Z 학습 {0.5, 30, 0.05, 0.1}, F̃ 학습 {0.1, 3, 0.05, 0.04}
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from core.errors import ParameterError

logger = logging.getLogger(__name__)

Z_PARAMETERS: Tuple[float, float, float, float] = (0.5, 30.0, 0.05, 0.1)
F_PARAMETERS: Tuple[float, float, float, float] = (0.1, 3.0, 0.05, 0.04)


@dataclass(frozen=True, eq=False)
class AdaptiveRateState:
    """
    적응 학습률 상태

    Attributes:
        alpha: 학습률 적응 속도
        beta: ‖r‖ → 목표 학습률 배율
        gamma: 초기 학습률
        delta: 구동항 누적 평균의 망각률
        rate: 현재 학습률 (> 0)
        r: 구동항 누적 평균 (평탄화 벡터, 첫 갱신 전에는 None)
        floor / cap: 학습률 하한/상한
        enabled: False면 rate를 고정 학습률로 유지
    """
    alpha: float
    beta: float
    gamma: float
    delta: float
    rate: float
    r: Optional[np.ndarray] = None
    floor: float = 1e-6
    cap: float = 0.1
    enabled: bool = True

    @classmethod
    def create(cls, parameters: Tuple[float, float, float, float], floor: float = 1e-6,
               cap: float = 0.1, enabled: bool = True) -> 'AdaptiveRateState':
        """(α, β, γ, δ) 로 초기화"""
        alpha, beta, gamma, delta = (float(p) for p in parameters)
        if not (0 < floor <= gamma <= cap):
            raise ParameterError(f"0 < floor({floor}) ≤ γ({gamma}) ≤ cap({cap}) 이어야 합니다")
        if alpha <= 0 or beta <= 0 or not (0 < delta <= 1):
            raise ParameterError(f"α, β > 0, 0 < δ ≤ 1 이어야 합니다: {parameters}")
        return cls(alpha, beta, gamma, delta, rate=gamma, floor=floor, cap=cap, enabled=enabled)


def adaptive_rate_update(state: AdaptiveRateState, error_signal) -> AdaptiveRateState:
    """
    구동항 하나로 학습률 갱신

    Args:
        state: 현재 상태
        error_signal: 이번 갱신의 구동항 (모양 무관, 평탄화)

    Returns:
        AdaptiveRateState: 갱신된 상태 (비활성이면 그대로)
    """
    if not state.enabled:
        return state
    g = np.asarray(error_signal, dtype=float).ravel()
    r = state.delta * g if state.r is None else (1.0 - state.delta) * state.r + state.delta * g
    rate = state.rate + state.alpha * state.rate * (state.beta * float(np.linalg.norm(r)) - state.rate)
    rate = float(np.clip(rate, state.floor, state.cap))
    return replace(state, r=r, rate=rate)
