"""
레짐 변화 감지와 재학습
Regime Change Detection and Relearning

시작 절차 (InitialF → OfflineSensor → Kalman) 로 단일 특징을 추적하다가
pre_steps 시점에 F를 change_deg만큼 더 회전시킵니다. 잔차 ‖ŷ − y‖ 가 급증하면
InitialF로 재진입해 F̃를 다시 학습하고 Kalman 모드로 돌아와 이득이 새 정상 상태로
재수렴하는지 확인합니다. 변화 없는 긴 실행으로 오탐률도 측정합니다.

CSV 열: seed, t, phase, mode, IHK22, F22, residual
"""

import logging
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from core.lds import LdsModel, NoiseSource, RngStream, continue_block, rotation, sensor_noise_batch, simulate_block
from core.neural_estimator import EstimatorMode, EstimatorPipeline, create_estimator
from core.transformed_oracle import derive_transformed
from experiments.config import ExperimentConfig
from experiments.fig2 import steady_gain22
from experiments.results import RunResult, concat_records
from experiments.runner import run_seeds

logger = logging.getLogger(__name__)

REGIME_COLUMNS = ['seed', 't', 'phase', 'mode', 'IHK22', 'F22', 'residual']
DETECTION_DELAY_LIMIT = 20
GAIN_TOLERANCE = 0.05
FALSE_POSITIVE_LIMIT = 0.01


def regime_models(config: ExperimentConfig):
    """(변화 전, 변화 후) 모델. 초기 공분산은 p0_scale·I"""
    base = config.model.build()
    before = base.with_changes(P0=config.regime.p0_scale * np.eye(base.dx))
    after = before.with_changes(F=_turn(before, config.regime.change_deg))
    return before, after


def _turn(model: LdsModel, deg: float) -> np.ndarray:
    if model.dx != 2:
        return -model.F
    return rotation(deg) @ model.F


def make_pipeline(config: ExperimentConfig, model: LdsModel, seed: int, detect: bool = True) -> EstimatorPipeline:
    """단일 특징 시작 절차 파이프라인"""
    spec = config.regime
    est = config.estimator
    state = create_estimator(
        model.dy, spec.n_feat, EstimatorMode.INITIAL_F,
        rng=RngStream(seed, NoiseSource.MISC), f_init_scale=est.f_init_scale,
        gamma_f=spec.gamma_f, gamma_f_refine=spec.gamma_f_refine, gamma_r=config.rates.gamma_r,
        gamma_z=spec.gamma_z, z_method=est.z_method, z_init=est.z_init, initial_gain=est.initial_gain,
        neumann_passes=est.neumann_passes, neumann_tol=est.neumann_tol,
        refine_f=True, learn_z_in_initial=False, incremental=est.incremental,
    )
    return EstimatorPipeline(
        state, initial_f_steps=spec.initial_f_steps,
        detect_window=spec.window if detect else 0, detect_factor=spec.factor,
    )


def _drive(pipeline: EstimatorPipeline, Y: np.ndarray, noise: np.ndarray, seed: int,
           change_t: Optional[int] = None):
    """측정 시퀀스로 파이프라인 진행, 스텝별 레코드 반환"""
    rows = []
    for k in range(len(Y)):
        if pipeline.awaiting_sensor:
            pipeline.learn_sensor(noise)
        s = pipeline.step(Y[k])
        rows.append({
            'seed': seed,
            't': k,
            'phase': 'pre' if change_t is None or k < change_t else 'post',
            'mode': s.mode.value,
            'IHK22': float(s.gain()[1, 1]) if s.z_rep is not None else float('nan'),
            'F22': float(s.F_hat[1, 1]),
            'residual': s.residuals[-1] if (s.mode is EstimatorMode.KALMAN and s.residuals) else float('nan'),
        })
    return pd.DataFrame(rows, columns=REGIME_COLUMNS)


def regime_seed(seed: int, config: ExperimentConfig) -> Dict[str, Any]:
    """seed 하나: 변화 주입, 감지 지연, 재수렴"""
    spec = config.regime
    before, after = regime_models(config)
    n = spec.n_feat
    pre = simulate_block(before, n, spec.pre_steps, seed)
    post = continue_block(after, pre, spec.post_steps, seed, segment=1)
    Y = np.concatenate([pre.Y, post.Y])
    noise = sensor_noise_batch(before, spec.r_samples, seed)

    pipeline = make_pipeline(config, before, seed)
    change_t = spec.pre_steps
    df = _drive(pipeline, Y, noise, seed, change_t)

    after_change = [t for t in pipeline.detections if t >= change_t]
    early = [t for t in pipeline.detections if t < change_t]
    delay = after_change[0] - change_t if after_change else None

    w = spec.terminal_window
    pre_part = df[(df['phase'] == 'pre')].dropna(subset=['IHK22'])
    post_part = df[(df['phase'] == 'post')].dropna(subset=['IHK22'])
    return {
        'records': df,
        'detections': list(pipeline.detections),
        'false_detections': early,
        'delay': delay,
        'pre_gain': float(pre_part['IHK22'].iloc[-w:].mean()) if len(pre_part) else float('nan'),
        'post_gain': float(post_part['IHK22'].iloc[-w:].mean()) if len(post_part) else float('nan'),
        'post_F22': float(df['F22'].iloc[-1]),
        'final_mode': pipeline.state.mode.value,
    }


def stationary_seed(seed: int, config: ExperimentConfig) -> Dict[str, int]:
    """변화 없는 긴 실행의 감지 횟수 (Kalman 모드 검사 스텝 수와 함께)"""
    spec = config.regime
    before, _ = regime_models(config)
    Y = simulate_block(before, spec.n_feat, spec.stationary_steps, seed).Y
    noise = sensor_noise_batch(before, spec.r_samples, seed)
    pipeline = make_pipeline(config, before, seed)
    checked = 0
    for k in range(len(Y)):
        if pipeline.awaiting_sensor:
            pipeline.learn_sensor(noise)
        s = pipeline.step(Y[k])
        if s.mode is EstimatorMode.KALMAN and len(s.residuals) >= 2 * spec.window:
            checked += 1
    return {'detections': len(pipeline.detections), 'checked': checked}


def run_regime_change(config: ExperimentConfig) -> RunResult:
    """
    레짐 변화 실행

    Returns:
        RunResult: 스텝별 레코드와 감지 지연, 재수렴 이득, 오탐률 요약
    """
    spec = config.regime
    seeds = config.run.seeds
    before, after = regime_models(config)
    target_pre = steady_gain22(before)
    target_post = steady_gain22(after)
    target_f22 = float(derive_transformed(after).F_tilde[1, 1])

    logger.info(f"🔀 레짐 변화 실행: {spec.pre_steps}+{spec.post_steps} 스텝, +{spec.change_deg}°, seeds {seeds}")
    per_seed = run_seeds(regime_seed, seeds, config.run.workers, config=config)
    records = concat_records([d['records'] for d in per_seed], REGIME_COLUMNS)

    delays = [d['delay'] for d in per_seed]
    post_gain = float(np.nanmean([d['post_gain'] for d in per_seed]))
    checks = {
        'detected_within_limit': all(d is not None and 0 <= d <= DETECTION_DELAY_LIMIT for d in delays),
        'no_detection_before_change': all(not d['false_detections'] for d in per_seed),
        'post_gain_reconverged': abs(post_gain - target_post) < GAIN_TOLERANCE,
    }
    summary: Dict[str, Any] = {
        'target_gain22_pre': target_pre,
        'target_gain22_post': target_post,
        'target_F22_post': target_f22,
        'detection_delay': delays,
        'pre_gain_mean': float(np.nanmean([d['pre_gain'] for d in per_seed])),
        'post_gain_mean': post_gain,
        'post_F22_mean': float(np.mean([d['post_F22'] for d in per_seed])),
        'final_mode': [d['final_mode'] for d in per_seed],
    }

    if spec.stationary_steps > 0:
        logger.info(f"📏 오탐률 측정: {spec.stationary_steps} 스텝 × {len(seeds)} seeds")
        stationary = run_seeds(stationary_seed, seeds, config.run.workers, config=config)
        total = sum(s['detections'] for s in stationary)
        checked = sum(s['checked'] for s in stationary)
        rate = total / checked if checked else 0.0
        summary['false_positive_rate'] = rate
        summary['seeds_with_false_positive'] = sum(1 for s in stationary if s['detections']) / len(stationary)
        checks['false_positive_rate'] = rate < FALSE_POSITIVE_LIMIT

    summary['checks'] = checks
    summary['passed'] = all(checks.values())
    logger.info(f"✅ 레짐 변화 완료: 감지 지연 {delays}, 재수렴 이득 {post_gain:.4f} (목표 {target_post:.4f})")
    return RunResult(
        kind='regime_change',
        records=records,
        summary=summary,
        config_echo=config.to_ini(),
        seeds=list(seeds),
        chart={'x': 't', 'y': 'IHK22', 'group': 'seed', 'title': '(I - HK)22 across a regime change',
               'reference': target_post},
    )
