"""
측정 공간 변환 오라클
Measurement-Space (Transformed) Recursions

신경망은 H를 모르므로 모든 양을 측정 공간 y = Hx 에서 다룹니다.
이 모듈은 고전 칼만 오라클과 신경망 알고리즘 사이의 중간 오라클입니다.

변환:
    F̃ = H F H⁺,  ũ = H B u,  g̃ = H'⁺B'⁺ g B⁺H⁺,  r̃ = H'⁺ r H⁺
    Z = H P⁻ H' + R   →   I − HK = R Z⁻¹
    T = H'⁺ S H⁺ + g̃

재귀:
    Z' = F̃ (I − R Z⁻¹) R F̃' + HQH' + R
    T_prev = F̃' g̃ (I − T⁻¹ g̃) F̃ + r̃ + g̃
    L̃ = (−I + T⁻¹ g̃) F̃  (= −H B L H⁺)
"""

import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from core.lds import LdsModel
from core.linalg import pinv_with_rank, right_solve_spd, solve_spd, symmetrize

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TransformedModel:
    """
    측정 공간 모델

    Attributes:
        F_tilde: H F H⁺ (Dy×Dy)
        HQH: H Q H' (Dy×Dy)
        R: 측정 잡음 공분산 (Dy×Dy)
        g_tilde: 변환된 제어 비용 (Dy×Dy)
        r_tilde: 변환된 상태 비용 (Dy×Dy)
        HB: ũ = HB u 사상 (Dy×Du)
        HB_pinv: u = (HB)⁺ ũ 어댑터 (Du×Dy)
        H_pinv: H⁺ (Dx×Dy)
        H_rank / B_rank: 수치 계수
    """
    F_tilde: np.ndarray
    HQH: np.ndarray
    R: np.ndarray
    g_tilde: np.ndarray
    r_tilde: np.ndarray
    HB: np.ndarray
    HB_pinv: np.ndarray
    H_pinv: np.ndarray
    H_rank: int
    B_rank: int

    @property
    def dy(self) -> int:
        return self.F_tilde.shape[0]

    def u_tilde_of(self, u) -> np.ndarray:
        """u ↦ ũ = H B u (배치면 행 단위)"""
        return np.asarray(u, dtype=float) @ self.HB.T

    def u_of(self, u_tilde) -> np.ndarray:
        """ũ ↦ u = (HB)⁺ ũ (플랜트 구동용 어댑터)"""
        return np.asarray(u_tilde, dtype=float) @ self.HB_pinv.T


def derive_transformed(model: LdsModel) -> TransformedModel:
    """
    LdsModel로부터 측정 공간 양 계산

    H 또는 B가 계수 부족이면 경고를 남기고 계속 진행합니다.
    """
    H, B = model.H, model.B
    Hp, h_rank = pinv_with_rank(H, 'H')
    Bp, b_rank = pinv_with_rank(B, 'B')
    if h_rank < model.dy:
        logger.warning(f"⚠️ H가 행 계수 부족입니다 (rank={h_rank} < Dy={model.dy}); 변환 항등식이 성립하지 않을 수 있습니다")
    if b_rank < model.du:
        logger.warning(f"⚠️ B가 열 계수 부족입니다 (rank={b_rank} < Du={model.du})")

    HB = H @ B
    HB_pinv, _ = pinv_with_rank(HB, 'HB')
    return TransformedModel(
        F_tilde=H @ model.F @ Hp,
        HQH=symmetrize(H @ model.Q @ H.T),
        R=symmetrize(model.R),
        g_tilde=symmetrize(Hp.T @ Bp.T @ model.g @ Bp @ Hp),
        r_tilde=symmetrize(Hp.T @ model.r @ Hp),
        HB=HB,
        HB_pinv=HB_pinv,
        H_pinv=Hp,
        H_rank=h_rank,
        B_rank=b_rank,
    )


def z_step(tm: TransformedModel, Z) -> np.ndarray:
    """
    Z' = F̃ (I − R Z⁻¹) R F̃' + HQH' + R

    Raises:
        SingularMatrixError: Z가 수치적으로 특이
    """
    R = tm.R
    # (I − R Z⁻¹) R = R − R Z⁻¹ R
    RZR = R @ solve_spd(Z, R, 'Z')
    return symmetrize(tm.F_tilde @ (R - RZR) @ tm.F_tilde.T + tm.HQH + R)


def t_step(tm: TransformedModel, T) -> np.ndarray:
    """
    T_{τ−1} = F̃' g̃ (I − T⁻¹ g̃) F̃ + r̃ + g̃

    Raises:
        SingularMatrixError: T가 수치적으로 특이
    """
    g = tm.g_tilde
    gTg = g @ solve_spd(T, g, 'T')
    return symmetrize(tm.F_tilde.T @ (g - gTg) @ tm.F_tilde + tm.r_tilde + g)


def gain_from_z(R, Z) -> np.ndarray:
    """R Z⁻¹ (= I − HK)"""
    return right_solve_spd(R, Z, 'Z')


def control_gain_from_t(tm: TransformedModel, T) -> np.ndarray:
    """L̃ = (−I + T⁻¹ g̃) F̃  (ũ = L̃ ŷ)"""
    return -tm.F_tilde + solve_spd(T, tm.g_tilde @ tm.F_tilde, 'T')


def z_path(tm: TransformedModel, Z0, steps: int) -> List[np.ndarray]:
    """Z_0..Z_steps"""
    path = [symmetrize(Z0)]
    for _ in range(steps):
        path.append(z_step(tm, path[-1]))
    return path


def t_path(tm: TransformedModel, T_N, steps: int) -> List[np.ndarray]:
    """T_N, T_{N−1}, …, T_{N−steps} (역방향 순서)"""
    path = [symmetrize(T_N)]
    for _ in range(steps):
        path.append(t_step(tm, path[-1]))
    return path


def terminal_t(tm: TransformedModel) -> np.ndarray:
    """T_N = r̃ + g̃ (S_N = r 에 대응)"""
    return symmetrize(tm.r_tilde + tm.g_tilde)


def z_from_p(model: LdsModel, P_minus) -> np.ndarray:
    """Z = H P⁻ H' + R"""
    return symmetrize(model.H @ P_minus @ model.H.T + model.R)


def s_from_t(model: LdsModel, tm: TransformedModel, T) -> np.ndarray:
    """S = H' (T − g̃) H"""
    return symmetrize(model.H.T @ (T - tm.g_tilde) @ model.H)


def t_from_s(tm: TransformedModel, S) -> np.ndarray:
    """T = H'⁺ S H⁺ + g̃"""
    return symmetrize(tm.H_pinv.T @ S @ tm.H_pinv + tm.g_tilde)
