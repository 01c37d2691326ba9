"""
측정 공간 오라클 테스트

Z/T 재귀가 고전 P⁻/S 재귀와 같은 이득을 내는지 확인합니다.
"""

import logging
import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.errors import SingularMatrixError
from core.kalman_oracle import kc_backward, riccati_path, steady_state_isotropic
from core.lds import LdsModel, rotation
from core.transformed_oracle import (
    control_gain_from_t, derive_transformed, gain_from_z, s_from_t, t_from_s, t_path, t_step,
    terminal_t, z_from_p, z_path, z_step,
)


@pytest.fixture
def model():
    return LdsModel.rotation_example()


def test_f_tilde_for_rotations(model):
    """회전끼리는 교환하므로 F̃ = HFH⁺ = 15° 회전, g̃ = r̃ = I"""
    tm = derive_transformed(model)
    np.testing.assert_allclose(tm.F_tilde, rotation(15.0), atol=1e-14)
    np.testing.assert_allclose(tm.g_tilde, np.eye(2), atol=1e-14)
    np.testing.assert_allclose(tm.r_tilde, np.eye(2), atol=1e-14)
    assert tm.H_rank == 2 and tm.B_rank == 2


def test_z_path_matches_riccati(model):
    """Z_t = HP⁻_tH' + R, 그리고 R Z_t⁻¹ = I − HK_t"""
    tm = derive_transformed(model)
    steps = 20
    classical = riccati_path(model, model.P0, steps)
    zs = z_path(tm, z_from_p(model, model.P0), steps)
    for t in range(steps):
        np.testing.assert_allclose(zs[t], z_from_p(model, classical['P_minus'][t]), rtol=1e-9, atol=1e-15)
        np.testing.assert_allclose(gain_from_z(model.R, zs[t]), np.eye(2) - model.H @ classical['K'][t],
                                   atol=1e-9)


def test_t_path_matches_control_riccati(model):
    """T_t = H'⁺S_tH⁺ + g̃, L̃_t = −HBL_tH⁺ (T_{t+1} 사용)"""
    tm = derive_transformed(model)
    N = 6
    kc = kc_backward(model, N, 0)
    ts = t_path(tm, terminal_t(tm), N)
    for k, T in enumerate(ts):
        t = N - k
        np.testing.assert_allclose(T, t_from_s(tm, kc.S[t]), rtol=1e-10, atol=1e-12 * np.linalg.norm(T))
        np.testing.assert_allclose(s_from_t(model, tm, T), kc.S[t], rtol=1e-10, atol=1e-12 * np.linalg.norm(kc.S[t]))
    for t in range(N):
        L_tilde = control_gain_from_t(tm, ts[N - (t + 1)])
        expected = -model.H @ model.B @ kc.L[t] @ tm.H_pinv
        np.testing.assert_allclose(L_tilde, expected, atol=1e-10)


def test_control_adapter_round_trip(model):
    """HB 가역이면 u ↦ ũ ↦ u 항등"""
    tm = derive_transformed(model)
    u = np.array([[0.2, -0.1], [1.0, 3.0]])
    np.testing.assert_allclose(tm.u_of(tm.u_tilde_of(u)), u, atol=1e-13)


def test_rank_deficient_h_warns(model, caplog):
    """행 계수 부족 H 는 경고 후 계속"""
    deficient = model.with_changes(H=np.array([[1.0, 0.0], [0.0, 0.0]]))
    with caplog.at_level(logging.WARNING, logger='core.transformed_oracle'):
        tm = derive_transformed(deficient)
    assert tm.H_rank == 1
    assert any('계수 부족' in r.getMessage() for r in caplog.records)


def test_z_step_fixed_point(model):
    """정상 상태 Z* = (p* + ρ)I 는 z_step 의 고정점"""
    tm = derive_transformed(model)
    Z_star = (steady_state_isotropic(1e-5, 1e-4) + 1e-4) * np.eye(2)
    np.testing.assert_allclose(z_step(tm, Z_star), Z_star, rtol=1e-9, atol=1e-12 * np.linalg.norm(Z_star))
    with pytest.raises(SingularMatrixError):
        z_step(tm, np.zeros((2, 2)))


def test_t_step_converges_to_fixed_point(model):
    """역방향 T 재귀는 수렴하고 극한은 t_step 의 고정점"""
    tm = derive_transformed(model)
    T_inf = t_path(tm, terminal_t(tm), 500)[-1]
    np.testing.assert_allclose(t_step(tm, T_inf), T_inf, rtol=1e-10, atol=1e-12 * np.linalg.norm(T_inf))
    assert np.all(np.linalg.eigvalsh(T_inf) > 0)


def test_steps_without_dynamics(model):
    """F̃ = 0 이면 Z' = HQH' + R, T_prev = r̃ + g̃"""
    tm = derive_transformed(model.with_changes(F=np.zeros((2, 2))))
    np.testing.assert_array_equal(tm.F_tilde, np.zeros((2, 2)))
    Z = np.array([[3e-4, 1e-5], [1e-5, 2e-4]])
    np.testing.assert_allclose(z_step(tm, Z), tm.HQH + tm.R, rtol=1e-12, atol=1e-20)
    T = np.array([[2.0, 0.3], [0.3, 1.5]])
    np.testing.assert_allclose(t_step(tm, T), tm.r_tilde + tm.g_tilde, rtol=1e-12, atol=1e-15)


def test_cheap_control_cancels_predicted_motion(model):
    """g → 0 (1e-8 배) 이면 L̃ → −F̃, 보통 g 에서는 T_N 에서 L̃ = −F̃/2"""
    cheap = derive_transformed(LdsModel.rotation_example(g_scale=1e-8))
    T = t_path(cheap, terminal_t(cheap), 10)[-1]
    np.testing.assert_allclose(control_gain_from_t(cheap, T), -cheap.F_tilde, atol=1e-7)
    tm = derive_transformed(model)
    np.testing.assert_allclose(control_gain_from_t(tm, terminal_t(tm)), -0.5 * tm.F_tilde, atol=1e-12)
