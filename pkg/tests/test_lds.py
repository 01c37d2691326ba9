"""
선형 동적 시스템 테스트

모델 검증, 난수 스트림 재현성, 앙상블/블록 시뮬레이션을 확인합니다.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.errors import ParameterError
from core.lds import (
    LdsModel, NoiseSource, PlantState, RngStream, continue_block, measure, rotation, sample_gaussian,
    sensor_noise_batch, simulate_block, simulate_ensemble, step_plant,
)
from core.linalg import relative_frobenius, second_moment


def zero_noise_model() -> LdsModel:
    """잡음 없는 회전 모델"""
    Z = np.zeros((2, 2))
    return LdsModel(F=rotation(15.0), B=np.eye(2), H=rotation(50.0), Q=Z, R=Z,
                    g=np.eye(2), r=np.eye(2), P0=Z)


def test_rotation_is_orthogonal():
    """회전 행렬은 직교, 90° 는 (1,0) → (0,1)"""
    R = rotation(37.0)
    np.testing.assert_allclose(R @ R.T, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(rotation(90.0) @ [1.0, 0.0], [0.0, 1.0], atol=1e-15)


def test_model_defaults():
    """기본 초기 분포: x̄₀ = (1, 0), P₀ = I"""
    model = LdsModel.rotation_example()
    np.testing.assert_array_equal(model.x0_mean, [1.0, 0.0])
    np.testing.assert_array_equal(model.P0, np.eye(2))
    assert (model.dx, model.dy, model.du) == (2, 2, 2)
    np.testing.assert_allclose(model.Q, 1e-5 * np.eye(2))


def test_model_validation():
    """비대칭 Q, 양정치가 아닌 g, 차원 불일치 H 는 ParameterError"""
    I = np.eye(2)
    with pytest.raises(ParameterError):
        LdsModel(F=I, B=I, H=I, Q=np.array([[1.0, 0.2], [0.0, 1.0]]), R=I, g=I, r=I)
    with pytest.raises(ParameterError):
        LdsModel(F=I, B=I, H=I, Q=I, R=I, g=np.diag([1.0, 0.0]), r=I)
    with pytest.raises(ParameterError):
        LdsModel(F=I, B=I, H=np.eye(3), Q=I, R=I, g=I, r=I)
    with pytest.raises(ParameterError):
        LdsModel(F=I, B=I, H=I, Q=np.diag([1.0, -1.0]), R=I, g=I, r=I)


def test_with_changes_revalidates():
    """with_changes 는 새 모델을 만들고 원본은 그대로"""
    model = LdsModel.rotation_example()
    changed = model.with_changes(F=0.5 * model.F)
    np.testing.assert_allclose(changed.F, 0.5 * model.F)
    np.testing.assert_allclose(model.F, rotation(15.0))
    with pytest.raises(ParameterError):
        model.with_changes(R=-np.eye(2))


def test_rng_stream_reproducible():
    """같은 (seed, stream) 은 같은 난수열, 다른 stream 은 다른 난수열"""
    a = RngStream(7, 3).standard_normal(5)
    b = RngStream(7, 3).standard_normal(5)
    c = RngStream(7, 4).standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    with pytest.raises(ParameterError):
        RngStream(-1, 0)


def test_zero_noise_dynamics():
    """잡음이 없으면 y = Hx, x' = Fx + Bu"""
    model = zero_noise_model()
    rng = RngStream(0, 0)
    s = PlantState(x=np.array([1.0, 0.0]))
    y, Y = measure(model, s, rng)
    np.testing.assert_allclose(y, model.H @ s.x)
    np.testing.assert_allclose(Y, y)
    u = np.array([0.1, -0.2])
    s2 = step_plant(model, s, u, rng)
    np.testing.assert_allclose(s2.x, model.F @ s.x + u)
    assert s2.t == 1
    with pytest.raises(ParameterError):
        step_plant(model, s, np.zeros(3), rng)


def test_simulate_ensemble_feature_independence():
    """특징 p 의 궤적은 특징 수와 무관 (특징별 스트림)"""
    model = LdsModel.rotation_example()
    one = simulate_ensemble(model, 1, 5, rng=RngStream(11))
    three = simulate_ensemble(model, 3, 5, rng=RngStream(11))
    X1, Y1, _, _ = one[0].as_arrays()
    X3, Y3, _, _ = three[0].as_arrays()
    np.testing.assert_array_equal(X1, X3)
    np.testing.assert_array_equal(Y1, Y3)
    assert not np.allclose(three[1].as_arrays()[1], Y3)
    df = three[2].to_frame()
    assert list(df.columns[:3]) == ['t', 'x1', 'x2']
    assert len(df) == 5


def test_simulate_block_shapes_and_determinism():
    """블록 모양 (horizon, n_feat, dim) 과 seed 재현성"""
    model = LdsModel.rotation_example()
    a = simulate_block(model, 4, 6, seed=2)
    b = simulate_block(model, 4, 6, seed=2)
    assert a.X.shape == (6, 4, 2) and a.Y.shape == (6, 4, 2)
    np.testing.assert_array_equal(a.Y, b.Y)
    np.testing.assert_allclose(a.Y_ideal, a.X @ model.H.T)
    with pytest.raises(ParameterError):
        simulate_block(model, 0, 5)


def test_continue_block_uses_new_model():
    """이어 붙인 구간의 첫 상태는 새 F 로 한 스텝 진행한 값 (잡음 없을 때)"""
    before = zero_noise_model().with_changes(x0_mean=np.array([1.0, 0.0]))
    after = before.with_changes(F=rotation(90.0) @ before.F)
    pre = simulate_block(before, 2, 3, seed=0)
    post = continue_block(after, pre, 2, seed=0, segment=1)
    np.testing.assert_allclose(post.X[0], pre.final_states @ after.F.T, atol=1e-15)


def test_sensor_noise_batch_covariance():
    """오프라인 센서 잡음의 표본 공분산 ≈ R"""
    model = LdsModel.rotation_example()
    noise = sensor_noise_batch(model, 50_000, seed=3)
    assert noise.shape == (50_000, 2)
    assert relative_frobenius(second_moment(noise), model.R) < 0.03


def test_noise_sources_are_distinct_streams():
    """잡음원 id 는 서로 다른 스트림"""
    ids = {int(s) for s in NoiseSource}
    assert len(ids) == len(NoiseSource)
    a = RngStream.for_feature(0, 1, NoiseSource.PLANT)
    b = RngStream.for_feature(0, 1, NoiseSource.SENSOR)
    assert a.stream_id != b.stream_id


def test_noise_families_share_second_moments():
    """uniform/laplace 잡음도 평균 0, 공분산 R, 분포 모양만 다름"""
    base = LdsModel.rotation_example()
    kurtosis = {}
    for family in ('gaussian', 'uniform', 'laplace'):
        model = base.with_changes(noise_family=family)
        noise = sensor_noise_batch(model, 50_000, seed=1)
        assert relative_frobenius(second_moment(noise), model.R) < 0.03
        assert np.all(np.abs(noise.mean(axis=0)) < 5e-4)
        z = noise[:, 0] / np.sqrt(model.R[0, 0])
        kurtosis[family] = float(np.mean(z ** 4))
    assert kurtosis['uniform'] < 2.0 < kurtosis['gaussian'] < 4.0 < kurtosis['laplace']


def test_unknown_noise_family():
    """알 수 없는 잡음 분포는 ParameterError"""
    with pytest.raises(ParameterError):
        LdsModel.rotation_example().with_changes(noise_family='cauchy')
    with pytest.raises(ParameterError):
        RngStream(0, 0, 'cauchy')


def test_sample_gaussian():
    """N(0, cov) 표본: 배치 공분산 ≈ cov, 부정부호 cov 는 ParameterError"""
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert sample_gaussian(cov, RngStream(0, 0)).shape == (2,)
    batch = sample_gaussian(cov, RngStream(0, 1), size=50_000)
    assert relative_frobenius(second_moment(batch), cov) < 0.03
    with pytest.raises(ParameterError):
        sample_gaussian(np.diag([1.0, -1.0]), RngStream(0, 0))
