"""
이득/F̂ 학습 곡선 재현
Gain and F̃ Learning Curves

실행 구성:
- run1   : 고전 Riccati 재귀로 (I − HK)₂₂
- run1p  : 측정 공간 Z 재귀 (run1과 동일해야 함)
- run2   : 특징 1개, 시간 평균 표본 (t_plot = t/100)
- run3   : 특징 n개, 특징별 증분 학습 (t_plot = (t−1) + (p+1)/n)
- run4   : run3 + F̃ 학습. 원시 측정 InitialF 한 스텝 후 정밀 학습 (t_plot 한 스텝 당김)
- run3m2 : run3을 Method 2로 (방식 동등성)

추가 검사: 특징 수에 따른 변동 감소, 측정이 한 성분에 갇힐 때 F̂₂₂ 미학습.

CSV 열: method, seed, t_plot, feature, IHK22, F22
"""

import logging
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from core.lds import LdsModel, NoiseSource, RngStream, simulate_block
from core.kalman_oracle import riccati_path
from core.neural_estimator import (
    EstimatorMode, SampleMethod, create_estimator, init_z, initial_f_step,
    kalman_mode_step, reset_features, set_mode,
)
from core.transformed_oracle import derive_transformed, gain_from_z, z_from_p, z_path
from experiments.config import ExperimentConfig
from experiments.results import FIG2_COLUMNS, RunResult, concat_records
from experiments.runner import run_seeds

logger = logging.getLogger(__name__)

CLASSICAL_SEED = -1
GAIN_TOLERANCE = 0.05
F_TOLERANCE = 0.02
IDENTITY_TOLERANCE = 1e-10
SPAN_TOLERANCE = 0.01
FLUCTUATION_RATIO = 0.5


def steady_gain22(model: LdsModel, steps: int = 2000) -> float:
    """정상 상태 (R Z⁻¹)₂₂ (Z 재귀를 수렴할 때까지 반복)"""
    tm = derive_transformed(model)
    Z = z_path(tm, 2.0 * tm.R, steps)[-1]
    return float(gain_from_z(tm.R, Z)[1, 1])


def initial_prior(model: LdsModel, initial_gain: float) -> np.ndarray:
    """(I − HK₀) = g₀·I 에 대응하는 P⁻₀ = H⁺ R (1/g₀ − 1) H⁺'"""
    tm = derive_transformed(model)
    return tm.H_pinv @ model.R @ tm.H_pinv.T * (1.0 / initial_gain - 1.0)


def _row(method: str, seed: int, t_plot: float, feature: int, ihk: float, f22: float) -> Dict[str, Any]:
    return {'method': method, 'seed': seed, 't_plot': t_plot, 'feature': feature, 'IHK22': ihk, 'F22': f22}


def run_classical(config: ExperimentConfig) -> pd.DataFrame:
    """run1 (고전) 과 run1p (측정 공간) 기록"""
    model = config.model.build()
    tm = derive_transformed(model)
    steps = config.fig2.classical_steps
    g0 = config.estimator.initial_gain
    P0 = initial_prior(model, g0)

    rows: List[Dict[str, Any]] = []
    for t, P in enumerate(riccati_path(model, P0, steps)['P_minus']):
        rows.append(_row('run1', CLASSICAL_SEED, float(t), -1,
                         float(gain_from_z(model.R, z_from_p(model, P))[1, 1]), float(tm.F_tilde[1, 1])))
    for t, Z in enumerate(z_path(tm, tm.R / g0, steps)):
        rows.append(_row('run1p', CLASSICAL_SEED, float(t), -1,
                         float(gain_from_z(tm.R, Z)[1, 1]), float(tm.F_tilde[1, 1])))
    return pd.DataFrame(rows, columns=FIG2_COLUMNS)


def _estimator_kwargs(config: ExperimentConfig) -> Dict[str, Any]:
    est = config.estimator
    z_rate, f_rate = config.rates.adaptive_states()
    return dict(
        z_method=est.z_method,
        z_init=est.z_init,
        initial_gain=est.initial_gain,
        neumann_passes=est.neumann_passes,
        neumann_tol=est.neumann_tol,
        z_rate=z_rate,
        f_rate=f_rate,
    )


def run_single_feature(config: ExperimentConfig, seed: int) -> pd.DataFrame:
    """run2: 특징 1개, F̃와 R은 주어진 값, 시간 평균으로 Z 학습"""
    model = config.model.build()
    tm = derive_transformed(model)
    steps = config.fig2.run2_steps
    state = create_estimator(
        model.dy, 1, EstimatorMode.KALMAN, F_hat=tm.F_tilde, R_hat=model.R,
        sample=SampleMethod.from_rate('b', 1, config.fig2.run2_gamma_z, incremental=False),
        refine_f=False, **_estimator_kwargs(config),
    )
    Y = simulate_block(model, 1, steps + 1, seed).Y
    reset_features(state, Y[0])
    init_z(state)
    rows = [_row('run2', seed, 0.0, 0, float(state.gain()[1, 1]), float(state.F_hat[1, 1]))]
    for t in range(1, steps + 1):
        kalman_mode_step(state, Y[t])
        rows.append(_row('run2', seed, t / 100.0, 0, float(state.gain()[1, 1]), float(state.F_hat[1, 1])))
    return pd.DataFrame(rows, columns=FIG2_COLUMNS)


def run_feature_ensemble(config: ExperimentConfig, seed: int, n_feat: Optional[int] = None,
                         z_method: Optional[str] = None, method: str = 'run3',
                         record: bool = True) -> pd.DataFrame:
    """
    run3: 특징 n개를 동시에 추적하며 특징마다 Z를 순차 학습

    특징 p를 처리한 직후 t_plot = (t−1) + (p+1)/n 에서 이득을 기록합니다.
    record=False면 시작점과 마지막 값만 남깁니다.
    """
    model = config.model.build()
    tm = derive_transformed(model)
    n = n_feat or config.fig2.run3_features
    steps = config.fig2.run3_steps
    kwargs = _estimator_kwargs(config)
    if z_method is not None:
        kwargs['z_method'] = z_method
    state = create_estimator(
        model.dy, n, EstimatorMode.KALMAN, F_hat=tm.F_tilde, R_hat=model.R,
        sample=SampleMethod.from_rate(config.estimator.sample_kind, n, config.rates.gamma_z,
                                      config.estimator.incremental),
        refine_f=False, **kwargs,
    )
    Y = simulate_block(model, n, steps + 1, seed).Y
    reset_features(state, Y[0])
    init_z(state, None)
    rows = [_row(method, seed, 0.0, -1, float(state.gain()[1, 1]), float(state.F_hat[1, 1]))]

    def observe(s, p):
        if record:
            rows.append(_row(method, seed, s.t + (p + 1) / n, p, float(s.gain()[1, 1]), float(s.F_hat[1, 1])))

    for t in range(1, steps + 1):
        kalman_mode_step(state, Y[t], observer=observe)
    if not record:
        rows.append(_row(method, seed, float(steps), n - 1, float(state.gain()[1, 1]), float(state.F_hat[1, 1])))
    return pd.DataFrame(rows, columns=FIG2_COLUMNS)


def run_f_learning(config: ExperimentConfig, seed: int) -> pd.DataFrame:
    """
    run4: F̃ 도 학습

    InitialF 한 스텝 (원시 측정, Z 학습 포함) 으로 t_plot ∈ [−1, 0], 이후 Kalman 모드에서
    정밀 학습으로 t_plot ∈ [0, run4_steps].
    """
    model = config.model.build()
    n = config.fig2.run3_features
    steps = config.fig2.run4_steps
    rates = config.rates
    state = create_estimator(
        model.dy, n, EstimatorMode.INITIAL_F, R_hat=model.R,
        rng=RngStream(seed, NoiseSource.MISC), f_init_scale=config.estimator.f_init_scale,
        sample=SampleMethod.from_rate(config.estimator.sample_kind, n, rates.gamma_z, config.estimator.incremental),
        gamma_f=rates.gamma_f, gamma_f_refine=rates.gamma_f_refine, gamma_r=rates.gamma_r,
        refine_f=True, learn_z_in_initial=True, incremental=config.estimator.incremental,
        **_estimator_kwargs(config),
    )
    Y = simulate_block(model, n, steps + 2, seed).Y
    g0 = config.estimator.initial_gain
    rows = [_row('run4', seed, -1.0, -1, g0, float(state.F_hat[1, 1]))]

    def observe(s, p):
        rows.append(_row('run4', seed, s.t - 1 + (p + 1) / n, p, float(s.gain()[1, 1]), float(s.F_hat[1, 1])))

    initial_f_step(state, Y[0])
    initial_f_step(state, Y[1], observer=observe)
    set_mode(state, EstimatorMode.KALMAN)
    for t in range(2, steps + 2):
        kalman_mode_step(state, Y[t], observer=observe)
    return pd.DataFrame(rows, columns=FIG2_COLUMNS)


def span_model(config: ExperimentConfig) -> LdsModel:
    """측정이 첫 성분에 갇힌 모델: F = H = I, x₀ = (1, 0), 둘째 성분 잡음 없음"""
    q, rho = config.model.q, config.model.rho
    return LdsModel(
        F=np.eye(2), B=np.eye(2), H=np.eye(2),
        Q=np.diag([q, 0.0]), R=rho * np.eye(2),
        g=np.eye(2), r=np.eye(2),
        x0_mean=np.array([1.0, 0.0]), P0=np.zeros((2, 2)),
    )


def run_span_deficiency(config: ExperimentConfig, seed: int) -> Dict[str, float]:
    """원시 F̃ 학습 후 F̂₁₁ 오차와 F̂₂₂ 변화량"""
    model = span_model(config)
    n = config.fig2.span_features
    state = create_estimator(
        2, n, EstimatorMode.INITIAL_F, R_hat=model.R,
        rng=RngStream(seed, NoiseSource.MISC), f_init_scale=config.estimator.f_init_scale,
        gamma_f=config.rates.gamma_f, learn_z=False, incremental=config.estimator.incremental,
    )
    f22_start = float(state.F_hat[1, 1])
    Y = simulate_block(model, n, config.fig2.span_steps + 1, seed).Y
    for t in range(config.fig2.span_steps + 1):
        initial_f_step(state, Y[t])
    return {
        'F11_error': abs(float(state.F_hat[0, 0]) - 1.0),
        'F22_change': abs(float(state.F_hat[1, 1]) - f22_start),
    }


def fig2_seed(seed: int, config: ExperimentConfig) -> Dict[str, Any]:
    """seed 하나의 모든 신경망 실행"""
    logger.debug(f"fig2 seed {seed} 시작")
    frames = [
        run_single_feature(config, seed),
        run_feature_ensemble(config, seed),
        run_f_learning(config, seed),
        run_feature_ensemble(config, seed, z_method='method2', method='run3m2', record=False),
    ]
    terminal_by_n = {}
    for n in config.fig2.fluctuation_features:
        n = int(n)
        if n == config.fig2.run3_features:
            terminal_by_n[n] = float(frames[1]['IHK22'].iloc[-1])
        else:
            df = run_feature_ensemble(config, seed, n_feat=n, method=f'run3_n{n}', record=False)
            terminal_by_n[n] = float(df['IHK22'].iloc[-1])
    return {
        'records': concat_records(frames, FIG2_COLUMNS),
        'terminal_by_n': terminal_by_n,
        'span': run_span_deficiency(config, seed),
    }


def summarize(records: pd.DataFrame, per_seed: List[Dict[str, Any]], config: ExperimentConfig) -> Dict[str, Any]:
    """수용 기준 요약"""
    model = config.model.build()
    tm = derive_transformed(model)
    target_gain = steady_gain22(model)
    target_f = float(tm.F_tilde[1, 1])

    run1 = records[records['method'] == 'run1']['IHK22'].to_numpy()
    run1p = records[records['method'] == 'run1p']['IHK22'].to_numpy()
    identity_gap = float(np.max(np.abs(run1 - run1p)))

    def terminal(method, tail=1):
        finals = []
        for _, part in records[records['method'] == method].groupby('seed', sort=True):
            finals.append(float(part['IHK22'].iloc[-tail:].mean()))
        return np.array(finals)

    run2 = terminal('run2', tail=100)
    run3 = terminal('run3')
    run3m2 = terminal('run3m2')
    run4_f = np.array([float(part['F22'].iloc[-1])
                       for _, part in records[records['method'] == 'run4'].groupby('seed', sort=True)])

    sizes = sorted(int(n) for n in config.fig2.fluctuation_features)
    stds = {n: float(np.std([d['terminal_by_n'][n] for d in per_seed], ddof=1)) if len(per_seed) > 1 else 0.0
            for n in sizes}
    ratio = stds[sizes[-1]] / stds[sizes[0]] if len(sizes) > 1 and stds[sizes[0]] > 0 else 0.0
    span_change = float(np.mean([d['span']['F22_change'] for d in per_seed]))
    span_f11 = float(np.mean([d['span']['F11_error'] for d in per_seed]))

    checks = {
        'run1_identity': identity_gap < IDENTITY_TOLERANCE,
        'run2_gain': abs(run2.mean() - target_gain) < GAIN_TOLERANCE,
        'run3_gain': abs(run3.mean() - target_gain) < GAIN_TOLERANCE,
        'run4_F22': abs(run4_f.mean() - target_f) < F_TOLERANCE,
        'method_equivalence': abs(run3.mean() - run3m2.mean()) < GAIN_TOLERANCE,
        'span_deficiency': span_change < SPAN_TOLERANCE,
    }
    if len(sizes) > 1 and len(per_seed) > 2:
        checks['fluctuation_scaling'] = ratio <= FLUCTUATION_RATIO

    return {
        'target_gain22': target_gain,
        'target_F22': target_f,
        'run1_identity_gap': identity_gap,
        'run2_terminal_mean': float(run2.mean()),
        'run3_terminal_mean': float(run3.mean()),
        'run3_terminal_std': float(run3.std(ddof=1)) if len(run3) > 1 else 0.0,
        'run3_method2_terminal_mean': float(run3m2.mean()),
        'run4_F22_mean': float(run4_f.mean()),
        'fluctuation_std': stds,
        'fluctuation_ratio': ratio,
        'span_F22_change': span_change,
        'span_F11_error': span_f11,
        'checks': checks,
        'passed': all(checks.values()),
    }


def run_fig2(config: ExperimentConfig) -> RunResult:
    """
    이득/F̂ 학습 곡선 전체 실행

    Returns:
        RunResult: fig2 레코드와 요약
    """
    seeds = config.run.seeds
    logger.info(f"📊 fig2 실행: seeds={seeds}, 작업자 {config.run.workers}")
    per_seed = run_seeds(fig2_seed, seeds, config.run.workers, config=config)
    records = concat_records([run_classical(config)] + [d['records'] for d in per_seed], FIG2_COLUMNS)
    summary = summarize(records, per_seed, config)
    logger.info(
        f"✅ fig2 완료: run2 {summary['run2_terminal_mean']:.4f}, run3 {summary['run3_terminal_mean']:.4f} "
        f"(목표 {summary['target_gain22']:.4f}), run4 F̂₂₂ {summary['run4_F22_mean']:.5f} "
        f"(목표 {summary['target_F22']:.5f})"
    )
    return RunResult(
        kind='fig2',
        records=records,
        summary=summary,
        config_echo=config.to_ini(),
        seeds=list(seeds),
        chart={'x': 't_plot', 'y': 'IHK22', 'group': 'method', 'title': '(I - HK)22',
               'reference': summary['target_gain22']},
    )
