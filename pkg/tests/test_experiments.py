"""
실험 하네스 테스트

빠른 단위 검사와, 수용 기준 크기의 실행(slow 표시)을 함께 둡니다.
느린 테스트 제외: pytest -m "not slow"
"""

import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.errors import ParameterError
from experiments.appendix_c import arbitrary_blend, blend_contraction, run_appendix_c_baseline
from experiments.checks import InvariantSuite, OracleEquivalenceSuite, random_model
from experiments.config import ExperimentConfig, config_from_text
from experiments.fig2 import run_classical, run_span_deficiency, steady_gain22


@pytest.fixture
def config():
    return ExperimentConfig()


def test_classical_runs_agree(config):
    """run1 (P⁻ 재귀) 과 run1p (Z 재귀) 은 같은 이득, 시작값은 초기 이득 0.5"""
    df = run_classical(config)
    run1 = df[df['method'] == 'run1']['IHK22'].to_numpy()
    run1p = df[df['method'] == 'run1p']['IHK22'].to_numpy()
    assert len(run1) == len(run1p) > 1
    assert np.max(np.abs(run1 - run1p)) < 1e-10
    assert run1[0] == pytest.approx(0.5)
    assert (df['seed'] == -1).all()


def test_steady_gain_target(config):
    """회전 예제의 정상 상태 (I − HK)₂₂ ≈ 0.7298"""
    assert steady_gain22(config.model.build()) == pytest.approx(0.7298, abs=1e-4)


def test_span_deficiency_leaves_unseen_direction(config):
    """측정이 한 성분에 갇히면 F̂₂₂ 는 거의 변하지 않음"""
    result = run_span_deficiency(config, seed=0)
    assert result['F22_change'] < 0.01
    assert np.isfinite(result['F11_error'])


def test_random_model_is_valid():
    """무작위 모델: F 스펙트럼 반경 0.9, 재현 가능"""
    a, b = random_model(3, 3), random_model(3, 3)
    np.testing.assert_array_equal(a.F, b.F)
    assert max(abs(np.linalg.eigvals(a.F))) == pytest.approx(0.9)
    assert a.dx == 3 and a.dy == 3


def test_appendix_c_baseline():
    """고정 혼합 행렬은 빠르게 감소하지만 KF 가 점근적으로 더 정확"""
    config = config_from_text("[run]\nseeds = 0 1\n")
    model = config.model.build()
    assert blend_contraction(model, arbitrary_blend(model, 0.5)) < 1.0
    result = run_appendix_c_baseline(config)
    checks = result.summary['checks']
    assert checks['fixed_rapid_decay'], result.summary['fixed_ratio_mean']
    assert checks['kf_asymptotically_optimal'], (result.summary['mse_kf'], result.summary['mse_fixed'])
    assert checks['zero_gain_matches_plant']
    assert checks['zero_gain_stable_decays']
    assert set(result.records['method']) == {'kf', 'fixed', 'zero', 'zero_stable'}


def test_invariant_subset_quick(config):
    """고정점, 기울기, Riccati 고정점, 잡음 통계 검사"""
    names = ['fixed_points', 'gradient', 'riccati_fixed_point', 'noise_stats']
    result = InvariantSuite(config, quick=True).run(only=names)
    assert list(result.records['name']) == names
    assert result.passed, result.records[['name', 'value', 'limit', 'detail']].to_string()
    assert result.kind == 'invariants'


def test_unknown_check_name(config):
    """알 수 없는 검사 이름은 ParameterError"""
    with pytest.raises(ParameterError):
        InvariantSuite(config).run(only=['nope'])
    assert 'controller' in InvariantSuite.names()


def test_oracle_equivalence_quick(config):
    """무작위 모델에서 Z/T 재귀와 고전 재귀가 일치"""
    result = OracleEquivalenceSuite(config, quick=True).run()
    assert result.kind == 'oracle_equiv'
    assert set(result.records['name']) == {'estimation', 'control'}
    assert result.passed, result.records[['name', 'value', 'limit', 'detail']].to_string()


@pytest.mark.slow
def test_fig2_learning_curves():
    """run2/run3 이득과 run4 F̂₂₂ 가 목표값 근처로 수렴"""
    from experiments.fig2 import run_fig2

    result = run_fig2(config_from_text("[run]\nseeds = 0..2\n"))
    checks = result.summary['checks']
    for name in ('run1_identity', 'run2_gain', 'run3_gain', 'run4_F22', 'method_equivalence'):
        assert checks[name], (name, result.summary)


@pytest.mark.slow
def test_control_demo_close_to_classical():
    """신경망 KC 비용이 고전 KC 의 10% 이내, 무제어보다 작음"""
    from experiments.control_demo import run_control_demo

    result = run_control_demo(config_from_text("[controller]\nrollout_seeds = 200\n[run]\nseeds = 0\n"))
    assert result.passed, result.summary['mean_cost']


@pytest.mark.slow
def test_regime_change_detected_and_relearned():
    """F 가 90° 바뀌면 20 스텝 안에 감지하고 이득이 다시 수렴"""
    from experiments.regime_change import run_regime_change

    result = run_regime_change(config_from_text("[regime]\nstationary_steps = 0\n[run]\nseeds = 0 1\n"))
    checks = result.summary['checks']
    assert checks['detected_within_limit'], result.summary['detection_delay']
    assert checks['no_detection_before_change']
    assert checks['post_gain_reconverged'], result.summary['post_gain_mean']


@pytest.mark.slow
def test_all_invariants_quick(config):
    """invariants 전체 (축소 크기)"""
    result = InvariantSuite(config, quick=True).run()
    assert result.passed, result.summary['failed']
