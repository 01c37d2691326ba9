"""
고전 칼만 필터/제어기 오라클 테스트

스칼라 예제, 정상 상태 값, 오류 경로를 확인합니다.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.errors import NumericalError, ParameterError
from core.kalman_oracle import (
    KfState, cost_from_arrays, evaluate_cost, kc_backward, kf_execute_step, kf_filter,
    kf_learn_step, riccati_path, steady_state_isotropic,
)
from core.lds import LdsModel, PlantState, Trajectory, rotation


def scalar_model() -> LdsModel:
    """F = B = H = g = r = 1"""
    one = np.array([[1.0]])
    return LdsModel(F=one, B=one, H=one, Q=np.zeros((1, 1)), R=one, g=one, r=one)


def test_scalar_control_gain():
    """N = t0 + 1 이면 L_{t0} = 1/(1+1) = 0.5"""
    sched = kc_backward(scalar_model(), N=1, t0=0)
    assert sched.gain(0)[0, 0] == pytest.approx(0.5)
    np.testing.assert_allclose(sched.S[1], [[1.0]])
    # S_0 = (1 − 0.5)·1·1 + 1
    assert sched.S[0][0, 0] == pytest.approx(1.5)
    assert sched.gains_array().shape == (1, 1, 1)


def test_kc_schedule_range_errors():
    """N ≤ t0 또는 범위 밖 시각은 ParameterError"""
    with pytest.raises(ParameterError):
        kc_backward(scalar_model(), N=3, t0=3)
    sched = kc_backward(scalar_model(), N=4, t0=1)
    assert sorted(sched.L) == [1, 2, 3]
    with pytest.raises(ParameterError):
        sched.gain(0)


def test_steady_state_value():
    """q = 1e-5, ρ = 1e-4 의 정상 상태 p* 와 I − HK"""
    p = steady_state_isotropic(1e-5, 1e-4)
    assert p == pytest.approx(3.7016e-5, rel=1e-4)
    assert 1e-4 / (p + 1e-4) == pytest.approx(0.72984, abs=1e-5)
    with pytest.raises(ParameterError):
        steady_state_isotropic(-1.0, 1e-4)


def test_riccati_converges_to_isotropic_steady_state():
    """회전 예제의 P⁻ 는 p*·I 로 수렴, (I − HK)_22 ≈ 0.7298"""
    model = LdsModel.rotation_example()
    path = riccati_path(model, model.P0, 200)
    assert len(path['P_minus']) == 201 and len(path['K']) == 200
    p = steady_state_isotropic(1e-5, 1e-4)
    np.testing.assert_allclose(path['P_minus'][-1], p * np.eye(2), rtol=1e-8, atol=1e-14)
    IHK = np.eye(2) - model.H @ path['K'][-1]
    assert IHK[1, 1] == pytest.approx(0.7298, abs=1e-4)
    assert abs(IHK[0, 1]) < 1e-10


def test_execute_requires_gain():
    """K_t 계산 전 실행 스텝은 ParameterError"""
    model = scalar_model()
    state = KfState.initial(model)
    with pytest.raises(ParameterError):
        kf_execute_step(model, state, [0.0])
    ready = kf_learn_step(model, state)
    assert ready.gain_ready
    with pytest.raises(ParameterError):
        kf_execute_step(model, ready, [0.0, 1.0])


def noiseless_model(x0) -> LdsModel:
    Z = np.zeros((2, 2))
    return LdsModel(F=rotation(15.0), B=np.eye(2), H=rotation(50.0), Q=Z, R=Z,
                    g=np.eye(2), r=np.eye(2), x0_mean=x0)


def test_zero_noise_filter_recovers_state():
    """Q = R = 0, x̂⁻₀ = x₀ 이면 모든 시각에서 x̂_t = x_t (P⁻ 는 첫 스텝 뒤 정확히 0)"""
    x = np.array([0.3, -0.7])
    model = noiseless_model(x)
    xs = [x]
    for _ in range(29):
        xs.append(model.F @ xs[-1])
    out = kf_filter(model, [model.H @ xt for xt in xs])
    np.testing.assert_allclose(out['xhat'], np.array(xs), atol=1e-12)
    np.testing.assert_allclose(out['K'][0], np.linalg.inv(model.H), atol=1e-12)
    np.testing.assert_array_equal(out['K'][1:], np.zeros((29, 2, 2)))
    np.testing.assert_allclose(out['xhat_minus'][0], x)
    path = riccati_path(model, np.eye(2), 5)
    for P in path['P_minus'][1:]:
        np.testing.assert_array_equal(P, np.zeros((2, 2)))


def test_zero_prior_and_plant_noise_gives_zero_gain():
    """Q = 0, P⁻₀ = 0 → 모든 스텝에서 K = 0 (R > 0, R = 0 모두)"""
    for rho in (1e-4, 0.0):
        model = LdsModel.rotation_example(q=0.0, rho=rho)
        path = riccati_path(model, np.zeros((2, 2)), 50)
        for K, P in zip(path['K'], path['P_minus'][1:]):
            np.testing.assert_array_equal(K, np.zeros((2, 2)))
            np.testing.assert_array_equal(P, np.zeros((2, 2)))


def test_noiseless_sensor_full_trust_gain():
    """R = 0, H 가역 → 매 스텝 HK = I"""
    model = LdsModel.rotation_example(rho=0.0)
    path = riccati_path(model, np.eye(2), 40)
    for K in path['K']:
        np.testing.assert_allclose(model.H @ K, np.eye(2), atol=1e-10)


def test_zero_plant_noise_covariance_decays():
    """Q = 0, R = ρI, 직교 F/H → p_t = 1/(1/p₀ + t/ρ), 오차 없이 긴 구간 진행"""
    rho = 1e-4
    model = LdsModel.rotation_example(q=0.0, rho=rho)
    path = riccati_path(model, np.eye(2), 500)
    for t in (0, 1, 10, 100, 500):
        p = 1.0 / (1.0 + t / rho)
        np.testing.assert_allclose(path['P_minus'][t], p * np.eye(2), rtol=1e-8, atol=1e-20)

    contracting = LdsModel(F=0.5 * np.eye(2), B=np.eye(2), H=np.eye(2), Q=np.zeros((2, 2)),
                           R=rho * np.eye(2), g=np.eye(2), r=np.eye(2))
    Ps = riccati_path(contracting, np.eye(2), 300)['P_minus']
    traces = [np.trace(P) for P in Ps]
    assert all(b <= a for a, b in zip(traces, traces[1:]))
    assert traces[-1] < 1e-150


def test_indefinite_covariance_raises():
    """반올림 수준을 넘는 음의 고유값은 NumericalError"""
    model = LdsModel(F=np.eye(2), B=np.eye(2), H=np.eye(2), Q=np.zeros((2, 2)), R=10.0 * np.eye(2),
                     g=np.eye(2), r=np.eye(2))
    state = KfState.initial(model, P0=np.diag([1.0, -1.0]))
    with pytest.raises(NumericalError):
        kf_learn_step(model, state)


def steady_gain_eigs(model: LdsModel, steps: int = 300) -> np.ndarray:
    K = riccati_path(model, np.eye(model.dx), steps)['K'][-1]
    return np.sort(np.real(np.linalg.eigvals(model.H @ K)))


def test_gain_monotone_in_measurement_noise():
    """Q 고정, R 을 키우면 정상 상태 HK 고유값은 커지지 않음"""
    one = np.array([[1.0]])
    scales = [1.0, 2.0, 4.0, 10.0]
    iso = [steady_gain_eigs(LdsModel.rotation_example(rho=1e-4 * s)) for s in scales]
    scalar = [steady_gain_eigs(LdsModel(F=0.9 * one, B=one, H=one, Q=one, R=s * one, g=one, r=one))
              for s in scales]
    for eigs in (iso, scalar):
        for prev, cur in zip(eigs, eigs[1:]):
            assert np.all(cur <= prev + 1e-12)
        assert eigs[-1][-1] < eigs[0][0]


def test_kc_backward_is_deterministic():
    """같은 입력이면 L_t, S_t 순서가 비트 단위로 같음"""
    model = LdsModel.rotation_example()
    a, b = kc_backward(model, N=12, t0=2), kc_backward(model, N=12, t0=2)
    np.testing.assert_array_equal(a.gains_array(), b.gains_array())
    for t in range(2, 13):
        np.testing.assert_array_equal(a.S[t], b.S[t])
    np.testing.assert_array_equal(a.S[12], model.r)


def test_kc_gain_limits():
    """g 를 키우면 |L| 단조 감소, F = 0 이면 L = 0"""
    one = np.array([[1.0]])
    norms = []
    for scale in (1.0, 1e2, 1e4, 1e6):
        sched = kc_backward(scalar_model().with_changes(g=scale * one), N=5)
        norms.append(np.max(np.abs(sched.gains_array())))
    assert all(b < a for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1e-5
    still = LdsModel.rotation_example().with_changes(F=np.zeros((2, 2)))
    np.testing.assert_array_equal(kc_backward(still, N=4).gains_array(), np.zeros((4, 2, 2)))


def test_cost_from_arrays():
    """J = Σ u'gu + x'rx + x_N' r x_N"""
    model = LdsModel.rotation_example()
    X = np.array([[1.0, 0.0], [0.0, 2.0]])
    U = np.array([[1.0, 1.0]])
    assert cost_from_arrays(X, U, model) == pytest.approx(7.0)


def test_evaluate_cost_requires_states():
    """구간 상태가 빠진 궤적은 ParameterError"""
    model = LdsModel.rotation_example()
    traj = Trajectory(states=[PlantState(x=np.array([1.0, 0.0]), t=0)])
    with pytest.raises(ParameterError):
        evaluate_cost(traj, [np.zeros(2)], model, t0=0, N=1)
    traj.states.append(PlantState(x=np.array([0.0, 1.0]), t=1))
    assert evaluate_cost(traj, [np.zeros(2)], model, t0=0, N=1) == pytest.approx(2.0)
