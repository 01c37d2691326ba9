"""
예외 계층
Exception Hierarchy

라이브러리 전체에서 사용하는 예외 클래스 모음입니다.
라이브러리 코드는 예외를 던지기만 하고, 종료 코드 변환은 main.py에서만 합니다.

- ParameterError / ConfigError: 입력·설정 오류 (종료 코드 1)
- NumericalError 계열: 특이 행렬, 발산 (종료 코드 2)
- ModeError: 추정기 동작 모드 위반
- ScheduleError: 제어 스냅샷 누락
- AcceptanceError: 수용 기준 검사 실패 (종료 코드 3)
"""

from typing import Optional


class ParameterError(ValueError):
    """차원 불일치, 비대칭/부정부호 공분산, 빈 배치, 잘못된 학습률"""


class ConfigError(ValueError):
    """설정 파일 파싱 실패 또는 검증 실패 (알 수 없는 키 포함)"""


class NumericalError(ArithmeticError):
    """수치 계산 실패의 공통 부모"""


class SingularMatrixError(NumericalError):
    """인수분해 피벗이 특이성 임계값 아래로 떨어진 경우"""


class DivergenceError(NumericalError):
    """
    반복 계산 발산 (Neumann 급수 등)

    Attributes:
        residual: 마지막 반복의 증분 노름
        passes: 수행한 반복 횟수
    """

    def __init__(self, message: str, residual: Optional[float] = None, passes: Optional[int] = None):
        super().__init__(message)
        self.residual = residual
        self.passes = passes


class ModeError(RuntimeError):
    """현재 동작 모드에서 허용되지 않는 연산 또는 모드 전이"""


class ScheduleError(LookupError):
    """저장 정책상 존재하지 않는 T 스냅샷 요청"""


class AcceptanceError(AssertionError):
    """수용 기준 검사 실패"""
