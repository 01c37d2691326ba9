"""
적응 학습률 테스트
"""

import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.adaptive_rate import F_PARAMETERS, Z_PARAMETERS, AdaptiveRateState, adaptive_rate_update
from core.errors import ParameterError


def test_create_validates_parameters():
    """floor ≤ γ ≤ cap, α/β > 0, 0 < δ ≤ 1"""
    state = AdaptiveRateState.create(Z_PARAMETERS)
    assert state.rate == pytest.approx(0.05)
    assert state.r is None
    with pytest.raises(ParameterError):
        AdaptiveRateState.create((0.5, 30.0, 0.5, 0.1))
    with pytest.raises(ParameterError):
        AdaptiveRateState.create((0.5, 30.0, 0.05, 0.0))
    with pytest.raises(ParameterError):
        AdaptiveRateState.create((-1.0, 3.0, 0.05, 0.04))


def test_first_update_smooths_signal():
    """첫 갱신: r = δ·g"""
    state = adaptive_rate_update(AdaptiveRateState.create(F_PARAMETERS), np.ones((2, 2)))
    np.testing.assert_allclose(state.r, 0.04 * np.ones(4))


def test_zero_signal_decays_to_floor():
    """구동항이 0 이면 학습률이 줄어들어 하한에 머무름"""
    state = AdaptiveRateState.create(Z_PARAMETERS)
    rates = []
    for _ in range(20000):
        state = adaptive_rate_update(state, np.zeros(3))
        rates.append(state.rate)
    assert all(b <= a for a, b in zip(rates, rates[1:])), "단조 감소해야 함"
    assert rates[-1] < 0.05
    assert rates[-1] >= state.floor


def test_large_signal_hits_cap():
    """큰 구동항은 학습률을 상한까지 올림"""
    state = AdaptiveRateState.create(Z_PARAMETERS)
    for _ in range(200):
        state = adaptive_rate_update(state, 10.0 * np.ones(3))
    assert state.rate == pytest.approx(state.cap)


def test_disabled_keeps_fixed_rate():
    """enabled=False 이면 고정 학습률"""
    state = AdaptiveRateState.create(Z_PARAMETERS, enabled=False)
    assert adaptive_rate_update(state, np.ones(3)) is state
