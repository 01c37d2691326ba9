"""
측면 연결(lateral connection) 표현
Lateral-Connection Representations of an Inverse Covariance

추정기의 Z와 제어기의 T는 같은 두 가지 방식으로 표현됩니다.

- Method 1 (NeumannLateral): Z̃ = I − cZ 를 학습하고 Z⁻¹η = c Σ_k Z̃ᵏ η 로 적용
- Method 2 (DirectInverseLateral): Z⁻¹ 를 직접 학습, v = Z⁻¹η 한 번 통과

학습 규칙 (배치 평균 ⟨·⟩, 학습률 γ):
    Z̃' = (1−γ)Z̃ + γI − γc⟨ηη'⟩
    Z⁻¹' = (1+γ)Z⁻¹ − γ⟨vv'⟩,  v = Z⁻¹η,  이후 대칭화

c는 매 학습 후 1/trace(Z 추정)으로 갱신하며, Z̃는 새 c로 다시 표현합니다:
    Z̃_new = I − c_new (I − Z̃)/c_old
"""

import logging
from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from core.errors import DivergenceError, ParameterError
from core.linalg import second_moment, solve_spd, spectral_radius, symmetrize

logger = logging.getLogger(__name__)

DEFAULT_PASSES = 50
DEFAULT_TOL = 1e-8
METHOD2_RATE_WARNING = 0.05


def neumann_apply(Ztilde: np.ndarray, c: float, eta, n_passes: int = DEFAULT_PASSES,
                  tol: float = DEFAULT_TOL) -> np.ndarray:
    """
    Neumann 급수로 Z⁻¹η 계산

    result = c · Σ_{k=0}^{n} Z̃ᵏ η,  ‖Δ‖ < tol·‖result‖ 이거나 n_passes에 도달하면 종료

    Args:
        Ztilde: I − cZ
        c: 스케일
        eta: 벡터 (d,) 또는 배치 (n, d)
        n_passes: 최대 반복 수
        tol: 상대 수렴 허용 오차

    Returns:
        np.ndarray: Z⁻¹η (eta와 같은 모양)

    Raises:
        DivergenceError: 증분이 커지거나 유한하지 않은 경우 (급수 조건 위반)
    """
    eta = np.asarray(eta, dtype=float)
    single = eta.ndim == 1
    E = np.atleast_2d(eta)
    term = E.copy()
    total = E.copy()
    first = float(np.linalg.norm(term))
    delta = first
    passes = 1
    while passes < n_passes:
        term = term @ Ztilde.T
        total = total + term
        passes += 1
        delta = float(np.linalg.norm(term))
        size = float(np.linalg.norm(total))
        if not np.isfinite(delta) or not np.isfinite(size):
            raise DivergenceError("Neumann 급수 발산 (유한하지 않은 값)", residual=delta, passes=passes)
        if delta <= tol * size:
            break
        if first > 0 and delta > 1e6 * first:
            raise DivergenceError(
                f"Neumann 급수 발산: 증분 {delta:.3e} (초기 {first:.3e}), c·λ_max > 2 의심",
                residual=delta, passes=passes)
    else:
        size = float(np.linalg.norm(total))
        if first > 0 and passes > 1 and delta > tol * size:
            if delta >= first:
                raise DivergenceError(
                    f"Neumann 급수가 {passes}회 안에 줄어들지 않음 (잔차 {delta:.3e})",
                    residual=delta, passes=passes)
            logger.warning(f"⚠️ Neumann 급수 미수렴: {passes}회 후 상대 잔차 {delta / max(size, 1e-300):.3e}")
    result = c * total
    return result[0] if single else result


def learn_neumann(Ztilde: np.ndarray, c: float, batch, rate: float) -> np.ndarray:
    """Z̃' = (1−γ)Z̃ + γI − γc⟨ηη'⟩"""
    M = second_moment(batch)
    d = Ztilde.shape[0]
    return symmetrize((1.0 - rate) * Ztilde + rate * np.eye(d) - rate * c * M)


def learn_direct_inverse(Zinv: np.ndarray, v_batch, rate: float) -> np.ndarray:
    """Z⁻¹' = (1+γ)Z⁻¹ − γ⟨vv'⟩ (대칭화)"""
    return symmetrize((1.0 + rate) * Zinv - rate * second_moment(v_batch))


def _check_rate(rate: float) -> None:
    if not (0.0 <= rate <= 1.0):
        raise ParameterError(f"학습률 γ={rate} 는 [0, 1] 범위여야 합니다")


class LateralInverse(ABC):
    """
    역공분산 표현의 공통 인터페이스

    apply_inverse(): Z⁻¹v (배치는 행 단위)
    learn(): 학습 한 번, Hebbian 구동항(증분/γ)을 반환
    covariance(): 현재 Z 추정 (보고용)
    """

    method: str = ''

    @property
    @abstractmethod
    def dim(self) -> int:
        ...

    @abstractmethod
    def apply_inverse(self, v) -> np.ndarray:
        ...

    @abstractmethod
    def learn(self, batch, rate: float) -> np.ndarray:
        ...

    @abstractmethod
    def covariance(self) -> np.ndarray:
        ...

    @abstractmethod
    def copy(self) -> 'LateralInverse':
        ...

    def inverse_matrix(self) -> np.ndarray:
        """Z⁻¹ 를 표현 자체로 계산 (단위 벡터 각각에 적용)"""
        return symmetrize(self.apply_inverse(np.eye(self.dim)))

    def left_gain(self, A) -> np.ndarray:
        """A Z⁻¹ (예: R̂ Z⁻¹ = I − HK)"""
        return np.asarray(A, dtype=float) @ self.inverse_matrix()


class NeumannLateral(LateralInverse):
    """
    Method 1: Z̃ = I − cZ 와 Neumann 급수

    Attributes:
        Ztilde: 측면 연결 행렬
        c: 스케일 (1/trace(Z))
    """

    method = 'method1'

    def __init__(self, Ztilde: np.ndarray, c: float,
                 n_passes: int = DEFAULT_PASSES, tol: float = DEFAULT_TOL):
        self.Ztilde = symmetrize(Ztilde)
        self.c = float(c)
        self.n_passes = n_passes
        self.tol = tol

    @classmethod
    def from_covariance(cls, Z, n_passes: int = DEFAULT_PASSES, tol: float = DEFAULT_TOL) -> 'NeumannLateral':
        Z = symmetrize(Z)
        tr = float(np.trace(Z))
        if tr <= 0:
            raise ParameterError(f"trace(Z)={tr:.3e} ≤ 0 인 Z로 초기화할 수 없습니다")
        c = 1.0 / tr
        return cls(np.eye(Z.shape[0]) - c * Z, c, n_passes, tol)

    @property
    def dim(self) -> int:
        return self.Ztilde.shape[0]

    def apply_inverse(self, v) -> np.ndarray:
        return neumann_apply(self.Ztilde, self.c, v, self.n_passes, self.tol)

    def learn(self, batch, rate: float) -> np.ndarray:
        _check_rate(rate)
        old = self.Ztilde
        new = learn_neumann(old, self.c, batch, rate)
        drive = (new - old) / rate if rate > 0 else np.zeros_like(old)
        self.Ztilde = new
        self.refresh_scale()
        return drive

    def refresh_scale(self) -> None:
        """c ← 1/trace(Z 추정), Z̃를 새 c로 재표현"""
        Z = self.covariance()
        tr = float(np.trace(Z))
        if tr <= 0 or not np.isfinite(tr):
            logger.warning(f"⚠️ trace(Z)={tr:.3e}: c 갱신을 건너뜁니다")
            return
        c_new = 1.0 / tr
        self.Ztilde = symmetrize(np.eye(self.dim) - c_new * Z)
        self.c = c_new
        rho = spectral_radius(self.Ztilde)
        if rho >= 1.0:
            logger.warning(f"⚠️ Z̃ 스펙트럼 반경 {rho:.6f} ≥ 1 (Z가 양정치가 아님)")

    def covariance(self) -> np.ndarray:
        return symmetrize((np.eye(self.dim) - self.Ztilde) / self.c)

    def copy(self) -> 'NeumannLateral':
        return NeumannLateral(self.Ztilde.copy(), self.c, self.n_passes, self.tol)


class DirectInverseLateral(LateralInverse):
    """
    Method 2: Z⁻¹ 직접 학습

    γ ≪ 1 이 필요하며, 한 번의 갱신 학습률이 0.05를 넘으면 경고합니다.
    """

    method = 'method2'

    def __init__(self, Zinv: np.ndarray):
        self.Zinv = symmetrize(Zinv)
        self._warned = False

    @classmethod
    def from_covariance(cls, Z) -> 'DirectInverseLateral':
        Z = symmetrize(Z)
        return cls(solve_spd(Z, np.eye(Z.shape[0]), 'Z₀'))

    @property
    def dim(self) -> int:
        return self.Zinv.shape[0]

    def apply_inverse(self, v) -> np.ndarray:
        # Zinv 대칭: 행 배치에 대해 v Zinv' = v Zinv
        return np.asarray(v, dtype=float) @ self.Zinv

    def learn(self, batch, rate: float) -> np.ndarray:
        """η 배치를 받아 v = Z⁻¹η 한 번 통과 후 학습"""
        return self.learn_from_v(self.apply_inverse(np.atleast_2d(batch)), rate)

    def learn_from_v(self, v_batch, rate: float) -> np.ndarray:
        _check_rate(rate)
        warn_if_fast(rate, self)
        old = self.Zinv
        self.Zinv = learn_direct_inverse(old, v_batch, rate)
        return (self.Zinv - old) / rate if rate > 0 else np.zeros_like(old)

    def covariance(self) -> np.ndarray:
        return symmetrize(solve_spd(self.Zinv, np.eye(self.dim), 'Z⁻¹'))

    def inverse_matrix(self) -> np.ndarray:
        return self.Zinv.copy()

    def copy(self) -> 'DirectInverseLateral':
        dup = DirectInverseLateral(self.Zinv.copy())
        dup._warned = self._warned
        return dup


def warn_if_fast(rate: float, rep: Optional[DirectInverseLateral] = None) -> None:
    """Method 2 학습률이 γ ≪ 1 조건(≤ 0.05)을 벗어나면 한 번 경고"""
    if rate > METHOD2_RATE_WARNING and (rep is None or not rep._warned):
        logger.warning(f"⚠️ Method 2 학습률 γ={rate:g} > {METHOD2_RATE_WARNING}: γ ≪ 1 조건 위반, 불안정할 수 있습니다")
        if rep is not None:
            rep._warned = True


def make_lateral(method: str, Z, n_passes: int = DEFAULT_PASSES, tol: float = DEFAULT_TOL) -> LateralInverse:
    """방식 이름('method1' | 'method2')으로 표현 생성"""
    if method == 'method1':
        return NeumannLateral.from_covariance(Z, n_passes, tol)
    if method == 'method2':
        return DirectInverseLateral.from_covariance(Z)
    raise ParameterError(f"알 수 없는 방식: {method} (method1 | method2)")
