"""
신경망 칼만 제어기 테스트

w 앙상블 역방향 스윕의 추출 순서, 저장 정책, ĝ 학습, 폐루프 평가를 확인합니다.
"""

import logging
import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.errors import ModeError, ParameterError, ScheduleError
from core.lateral import DirectInverseLateral
from core.lds import LdsModel, rotation
from core.neural_controller import (
    StoragePolicy, closed_loop_run, control_execute, create_controller, init_w_ensemble,
    kc_learning_sweep, learn_g_offline, learn_t, learn_tinv, schedule_deviation, w_step_backward,
)
from core.neural_estimator import EstimatorMode, create_estimator, init_z
from core.transformed_oracle import derive_transformed


@pytest.fixture
def tm():
    return derive_transformed(LdsModel.rotation_example())


def ready_controller(tm, **kwargs):
    """ĝ = g̃ 를 아는 제어기"""
    params = dict(N=5, n_w=500, g_hat=tm.g_tilde, seed=3)
    params.update(kwargs)
    return create_controller(tm, **params)


def test_create_controller_errors(tm):
    """잘못된 N_w, 방식, 학습률, 재사용 간격은 ParameterError"""
    with pytest.raises(ParameterError):
        create_controller(tm, N=5, n_w=0)
    with pytest.raises(ParameterError):
        create_controller(tm, N=5, t_method='method3')
    with pytest.raises(ParameterError):
        create_controller(tm, N=5, gamma_t=-0.1)
    with pytest.raises(ParameterError):
        create_controller(tm, N=5, storage_policy='c', reuse_k=0)
    with pytest.raises(ParameterError):
        create_controller(tm, N=5, gamma_t=2.0)
    ctrl = create_controller(tm, N=5, n_w=100, t_method='method2', gamma_t=2.0)
    assert ctrl.rate_t == pytest.approx(0.02)


def test_draw_order(tm):
    """초기화: ν^r_{N+1}, ν^g_N / 각 스텝: ν^g_{τ−1}, ν^r_τ"""
    ctrl = ready_controller(tm, N=3, n_w=50)
    kc_learning_sweep(ctrl, tm, t0=0)
    assert ctrl.draw_log == [
        ('nu_r', 4), ('nu_g', 3), ('w', 3),
        ('nu_g', 2), ('nu_r', 3), ('w', 2),
        ('nu_g', 1), ('nu_r', 2), ('w', 1),
    ]


def test_backward_step_errors(tm):
    """초기화 전/T 미학습은 ScheduleError, τ ≤ t0 은 ParameterError"""
    ctrl = ready_controller(tm, N=2, n_w=50)
    with pytest.raises(ScheduleError):
        w_step_backward(ctrl, tm)
    init_w_ensemble(ctrl, tm)
    with pytest.raises(ScheduleError):
        w_step_backward(ctrl, tm)

    kc_learning_sweep(ctrl, tm, t0=0)
    assert ctrl.tau == 1
    w_step_backward(ctrl, tm)
    assert ctrl.tau == 0
    with pytest.raises(ParameterError):
        w_step_backward(ctrl, tm)


def test_sweep_requires_g_and_horizon(tm):
    """ĝ 미학습은 ModeError, N ≤ t0 는 ParameterError"""
    ctrl = create_controller(tm, N=4, n_w=50)
    with pytest.raises(ModeError):
        kc_learning_sweep(ctrl, tm, t0=0)
    with pytest.raises(ParameterError):
        kc_learning_sweep(ready_controller(tm, N=4), tm, t0=4)


def test_storage_policies(tm):
    """a: 모든 시각, b: t0 만, c: k 간격 저장 후 최근 스냅샷 재사용"""
    a = kc_learning_sweep(ready_controller(tm, storage_policy='a'), tm, t0=0)
    assert a.times == [0, 1, 2, 3, 4]

    b = kc_learning_sweep(ready_controller(tm, storage_policy='b'), tm, t0=1)
    assert b.times == [1]
    with pytest.raises(ScheduleError):
        b.lookup(2)

    c = kc_learning_sweep(ready_controller(tm, storage_policy='c', reuse_k=2), tm, t0=0)
    assert c.times == [0, 2, 4]
    assert c.lookup(3) is c.snapshots[2]
    assert c.lookup(0) is c.snapshots[0]
    with pytest.raises(ScheduleError):
        c.lookup(5)


def test_policies_a_and_b_agree_at_sweep_start(tm):
    """같은 seed 와 시작 시각이면 정책 a/b 의 ũ_{t0} 동일"""
    yhat = np.array([[0.3, -0.2]])
    controls = []
    for policy in ('a', 'b'):
        ctrl = ready_controller(tm, storage_policy=policy)
        kc_learning_sweep(ctrl, tm, t0=0)
        controls.append(control_execute(ctrl, 0, yhat, tm=tm))
    np.testing.assert_array_equal(controls[0], controls[1])


def test_control_execute_requires_schedule(tm):
    """스케줄 없이 실행하면 ScheduleError"""
    ctrl = ready_controller(tm)
    with pytest.raises(ScheduleError):
        control_execute(ctrl, 0, np.zeros((1, 2)), tm=tm)


def test_learn_g_offline(tm, caplog):
    """ĝ ≈ g̃, 계수 부족 생성기는 g_flag 와 경고"""
    ctrl = create_controller(tm, N=5, n_w=50)
    learn_g_offline(ctrl, 20_000)
    assert ctrl.g_ready and ctrl.g_flag == ''
    np.testing.assert_allclose(ctrl.g_hat, tm.g_tilde, atol=0.05)
    with pytest.raises(ParameterError):
        learn_g_offline(ctrl, 0)

    deficient = create_controller(tm, N=5, n_w=50)
    deficient.noise_g = np.diag([1.0, 0.0])
    with caplog.at_level(logging.WARNING, logger='core.neural_controller'):
        learn_g_offline(deficient, 1000)
    assert deficient.g_flag.startswith('rank=1/2')
    assert any('ĝ' in r.getMessage() for r in caplog.records)


def test_learned_schedule_tracks_oracle(tm):
    """N_w = 20000, γ_T = 1 이면 모든 T_{t+1} 이 오라클 경로와 5% 이내"""
    ctrl = ready_controller(tm, n_w=20_000)
    schedule = kc_learning_sweep(ctrl, tm, t0=0)
    deviation = schedule_deviation(schedule, tm)
    assert sorted(deviation) == [0, 1, 2, 3, 4]
    assert max(deviation.values()) < 0.05, f"오라클 대비 편차: {deviation}"


def test_method2_sweep_runs(tm):
    """Method 2 (증분, γ_T/N_w) 스윕은 T⁻¹ 표현 스냅샷을 남김"""
    ctrl = ready_controller(tm, N=3, n_w=200, t_method='method2')
    schedule = kc_learning_sweep(ctrl, tm, t0=0)
    assert all(isinstance(rep, DirectInverseLateral) for rep in schedule.snapshots.values())
    assert np.all(np.isfinite(schedule.lookup(0).inverse_matrix()))


def zero_noise_setup():
    """x̄₀ = 0, P₀ = Q = R = 0 인 모델과 F̂ = F̃ 추정기"""
    Z = np.zeros((2, 2))
    model = LdsModel(F=rotation(15.0), B=np.eye(2), H=rotation(50.0), Q=Z, R=Z,
                     g=np.eye(2), r=np.eye(2), x0_mean=np.zeros(2), P0=Z)
    tm = derive_transformed(model)
    est = create_estimator(2, 1, EstimatorMode.KALMAN, F_hat=tm.F_tilde, R_hat=Z, gamma_z=0.1)
    init_z(est)
    return model, tm, est


def test_zero_noise_closed_loop_costs_zero():
    """잡음과 초기 편차가 없으면 세 제어기 모두 비용 0"""
    model, tm, est = zero_noise_setup()
    ctrl = create_controller(tm, N=1, n_w=100, g_hat=tm.g_tilde)
    result = closed_loop_run(model, est, ctrl, t0=0, N=1, seeds=[0, 1], tm=tm, filter_P0=np.eye(2))
    for name in ('neural', 'classical', 'zero'):
        np.testing.assert_array_equal(result.costs[name], np.zeros(2))
    assert result.relative_gap() == 0.0
    np.testing.assert_array_equal(result.u_tilde[0], np.zeros((1, 2)))


def test_closed_loop_common_random_numbers():
    """같은 seed 는 실행마다 같은 비용 (공통 난수)"""
    model = LdsModel.rotation_example()
    tm = derive_transformed(model)
    est = create_estimator(2, 1, EstimatorMode.KALMAN, F_hat=tm.F_tilde, R_hat=model.R,
                           z_init='gain', initial_gain=0.7298, gamma_z=0.01)
    init_z(est)
    runs = []
    for _ in range(2):
        ctrl = create_controller(tm, N=3, n_w=500, g_hat=tm.g_tilde, seed=1)
        runs.append(closed_loop_run(model, est, ctrl, t0=0, N=3, seeds=[4, 5], tm=tm))
    for name in ('neural', 'classical', 'zero'):
        np.testing.assert_array_equal(runs[0].costs[name], runs[1].costs[name])
    assert runs[0].mean['zero'] > 0.0


def test_closed_loop_requires_kalman_mode(tm):
    """추정기가 Kalman 모드가 아니거나 호라이즌이 다르면 오류"""
    model = LdsModel.rotation_example()
    est = create_estimator(2, 1, gamma_z=0.01)
    ctrl = ready_controller(tm, N=3)
    with pytest.raises(ModeError):
        closed_loop_run(model, est, ctrl, t0=0, N=3, seeds=[0], tm=tm)
    known = create_estimator(2, 1, EstimatorMode.KALMAN, F_hat=tm.F_tilde, R_hat=model.R, gamma_z=0.01)
    with pytest.raises(ParameterError):
        closed_loop_run(model, known, ctrl, t0=0, N=4, seeds=[0], tm=tm)


def test_learn_t_and_tinv(tm):
    """Method 1 은 ⟨ww'⟩ 로 초기화 후 γ_T 로 갱신, learn_tinv 는 Method 2 표현 필요"""
    W1 = np.array([[1.0, 0.0], [0.0, 2.0]])
    W2 = np.array([[2.0, 0.0], [0.0, 1.0]])
    ctrl = ready_controller(tm, gamma_t=0.5)
    learn_t(ctrl, W1)
    np.testing.assert_allclose(ctrl.t_rep.covariance(), np.diag([0.5, 2.0]), rtol=1e-12)
    learn_t(ctrl, W2)
    np.testing.assert_allclose(ctrl.t_rep.covariance(), np.diag([1.25, 1.25]), rtol=1e-12)
    with pytest.raises(ParameterError):
        learn_tinv(ctrl, W1)

    direct = ready_controller(tm, t_method='method2', gamma_t=0.1, incremental=False)
    direct.t_rep = DirectInverseLateral(np.eye(2))
    learn_tinv(direct, np.zeros((1, 2)))
    np.testing.assert_allclose(direct.t_rep.Zinv, 1.1 * np.eye(2))
