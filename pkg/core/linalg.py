"""
선형대수 보조 함수
Linear Algebra Helpers

오라클과 신경망 모듈이 공유하는 수치 도구입니다.
명시적 역행렬 대신 인수분해 기반 풀이를 사용합니다.

주요 기능:
- symmetrize(): (M + M')/2 대칭화
- psd_factor(): 영 피벗 허용 Cholesky 인수분해 (특이 공분산 지원)
- solve_spd(): 대칭 양정치 선형계 풀이 + 특이성 검사
- pinv_with_rank(): SVD 기반 의사역행렬 + 계수(rank)
- second_moment(): 배치 2차 모멘트 mean(v z')
"""

import logging
from typing import Tuple

import numpy as np
from scipy import linalg as sla

from core.errors import ParameterError, SingularMatrixError

logger = logging.getLogger(__name__)

# 피벗/특이값 허용 오차 (최대 대각/최대 특이값 대비)
PIVOT_RTOL = 1e-12
SINGULAR_RTOL = 1e-12
PINV_RTOL = 1e-12
SYMMETRY_RTOL = 1e-10


def symmetrize(M: np.ndarray) -> np.ndarray:
    """대칭 부분 (M + M')/2 반환"""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def as_square(M, name: str = 'matrix') -> np.ndarray:
    """2차원 정방 float 배열로 변환 (아니면 ParameterError)"""
    A = np.atleast_2d(np.asarray(M, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ParameterError(f"{name}: 정방 행렬이 아닙니다 (shape={A.shape})")
    if not np.all(np.isfinite(A)):
        raise ParameterError(f"{name}: 유한하지 않은 원소가 있습니다")
    return A


def check_symmetric(M, name: str = 'matrix', rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    """
    대칭성 검사

    Args:
        M: 검사할 행렬
        name: 오류 메시지용 이름
        rtol: max|M| 대비 허용 비대칭

    Returns:
        np.ndarray: float 배열로 변환된 M

    Raises:
        ParameterError: 정방이 아니거나 비대칭
    """
    A = as_square(M, name)
    scale = max(float(np.max(np.abs(A))), 1e-300)
    if np.max(np.abs(A - A.T)) > rtol * scale:
        raise ParameterError(f"{name}: 대칭 행렬이 아닙니다")
    return A


def psd_factor(cov, name: str = 'cov') -> np.ndarray:
    """
    공분산의 하삼각 인수 L (cov = L L')

    양정치이면 scipy Cholesky를 그대로 쓰고, 실패하면 영 피벗을 허용하는
    열 단위 Cholesky로 넘어갑니다. 피벗이 1e-12·max(diag) 이하인 열은 0으로 둡니다
    (해당 잡음 성분 없음).

    Args:
        cov: 대칭 양반정치 행렬
        name: 오류 메시지용 이름

    Returns:
        np.ndarray: 하삼각 인수

    Raises:
        ParameterError: 비대칭 또는 부정부호

    Example:
        >>> psd_factor(np.zeros((2, 2)))
        array([[0., 0.],
               [0., 0.]])
    """
    A = symmetrize(check_symmetric(cov, name))
    n = A.shape[0]

    try:
        return sla.cholesky(A, lower=True)
    except (sla.LinAlgError, ValueError):
        pass

    diag = np.diag(A)
    scale = max(float(np.max(diag)), 0.0)
    tol = PIVOT_RTOL * scale
    if np.any(diag < -tol):
        raise ParameterError(f"{name}: 음의 대각 원소 (부정부호)")

    L = np.zeros_like(A)
    for j in range(n):
        d = A[j, j] - L[j, :j] @ L[j, :j]
        col = A[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]
        if d < -max(tol, 1e-300) * 1e3:
            raise ParameterError(f"{name}: 부정부호 공분산 (피벗 {d:.3e})")
        if d <= tol:
            # 영 피벗: 남은 열 성분도 0이어야 양반정치
            if col.size and np.max(np.abs(col)) > 1e-6 * max(scale, 1e-300):
                raise ParameterError(f"{name}: 부정부호 공분산 (영 피벗 열 불일치)")
            continue
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = col / L[j, j]
    return L


def solve_spd(A, B, name: str = 'matrix') -> np.ndarray:
    """
    대칭 양정치 A에 대해 A X = B 풀이

    특이성 임계값: Cholesky 인수 대각의 최소값 < 1e-12 · 최대값이면 특이로 판정합니다.

    Raises:
        SingularMatrixError: 수치적으로 특이한 A
    """
    A = symmetrize(as_square(A, name))
    try:
        c, lower = sla.cho_factor(A, lower=True)
    except (sla.LinAlgError, ValueError) as e:
        raise SingularMatrixError(f"{name}: 양정치 인수분해 실패 ({e})") from e
    d = np.abs(np.diag(c))
    if d.size and d.min() < SINGULAR_RTOL * d.max():
        raise SingularMatrixError(f"{name}: 수치적으로 특이 (피벗 비 {d.min() / d.max():.3e})")
    return sla.cho_solve((c, lower), np.asarray(B, dtype=float))


def right_solve_spd(B, A, name: str = 'matrix') -> np.ndarray:
    """B A⁻¹ 계산 (A 대칭 양정치)"""
    return solve_spd(A, np.asarray(B, dtype=float).T, name).T


def pinv_with_rank(M, name: str = 'matrix') -> Tuple[np.ndarray, int]:
    """
    Moore-Penrose 의사역행렬과 수치 계수

    특이값 < 1e-12·σ_max 는 0으로 취급합니다.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    Mp, rank = sla.pinv(M, atol=0.0, rtol=PINV_RTOL, return_rank=True)
    return Mp, int(rank)


def spectral_radius(M) -> float:
    """최대 고유값 절댓값"""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def min_eigenvalue(M) -> float:
    """대칭 행렬의 최소 고유값"""
    return float(np.min(sla.eigvalsh(symmetrize(M))))


def relative_frobenius(A, B) -> float:
    """‖A − B‖_F / ‖B‖_F"""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    denom = np.linalg.norm(B)
    if denom == 0.0:
        return float(np.linalg.norm(A))
    return float(np.linalg.norm(A - B) / denom)


def second_moment(V, Z=None) -> np.ndarray:
    """
    배치 2차 모멘트 mean_p(v_p z_p')

    Args:
        V: (n, d1) 배치 (1차원이면 단일 표본)
        Z: (n, d2) 배치, None이면 V

    Raises:
        ParameterError: 빈 배치 또는 길이 불일치
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    Z = V if Z is None else np.atleast_2d(np.asarray(Z, dtype=float))
    if V.shape[0] == 0 or V.size == 0:
        raise ParameterError("빈 배치로 기대값을 학습할 수 없습니다")
    if V.shape[0] != Z.shape[0]:
        raise ParameterError(f"배치 길이 불일치: {V.shape[0]} != {Z.shape[0]}")
    return V.T @ Z / V.shape[0]
