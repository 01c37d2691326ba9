"""
제어 데모
Neural Kalman Control Demo

1. 추정기 학습: InitialF (원시 F̃) → OfflineSensor (R̂) → Kalman (Z, F̃ 정밀 학습)
2. 제어기: ĝ 오프라인 학습 후 역방향 스윕으로 T 스케줄 학습 (F̃'는 추정기 F̂의 전치)
3. 폐루프 평가: 신경망 KC / 고전 KC / 무제어를 같은 잡음으로 비교

CSV 열: run_seed, rollout_seed, controller, cost
"""

import logging
from typing import Any, Dict, List

import numpy as np
import pandas as pd

from core.lds import NoiseSource, RngStream, sensor_noise_batch, simulate_block
from core.neural_controller import (
    CONTROLLERS, closed_loop_run, create_controller, learn_g_offline, schedule_deviation,
)
from core.neural_estimator import EstimatorMode, EstimatorPipeline, create_estimator
from core.transformed_oracle import derive_transformed
from experiments.config import ExperimentConfig, format_matrix
from experiments.results import RunResult, concat_records
from experiments.runner import run_seeds

logger = logging.getLogger(__name__)

CONTROL_COLUMNS = ['run_seed', 'rollout_seed', 'controller', 'cost']
U_COLUMNS = ['run_seed', 'rollout_seed', 't', 'component', 'u_tilde']
COST_GAP_LIMIT = 0.10


def train_estimator(config: ExperimentConfig, seed: int):
    """
    시작 절차 전체로 추정기 학습

    learn_f가 꺼져 있으면 F̂ = F̃ (오라클) 로 시작하고 R̂, Z 만 학습합니다.
    """
    model = config.model.build()
    tm = derive_transformed(model)
    c, est_spec, rates = config.controller, config.estimator, config.rates
    n = c.train_features
    z_rate, f_rate = rates.adaptive_states()
    common = dict(
        gamma_f=rates.gamma_f, gamma_f_refine=rates.gamma_f_refine, gamma_r=rates.gamma_r,
        gamma_z=rates.gamma_z, z_method=est_spec.z_method, z_init=est_spec.z_init,
        initial_gain=est_spec.initial_gain, neumann_passes=est_spec.neumann_passes,
        neumann_tol=est_spec.neumann_tol, incremental=est_spec.incremental,
        z_rate=z_rate, f_rate=f_rate,
    )
    Y = simulate_block(model, n, c.train_steps + 2, seed).Y
    noise = sensor_noise_batch(model, c.r_samples, seed)

    if c.learn_f:
        state = create_estimator(model.dy, n, EstimatorMode.INITIAL_F, rng=RngStream(seed, NoiseSource.MISC),
                                 f_init_scale=est_spec.f_init_scale, refine_f=True, **common)
        pipeline = EstimatorPipeline(state, initial_f_steps=1)
        pipeline.step(Y[0])
        pipeline.step(Y[1])
    else:
        state = create_estimator(model.dy, n, EstimatorMode.OFFLINE_SENSOR, F_hat=tm.F_tilde,
                                 refine_f=False, **common)
        pipeline = EstimatorPipeline(state, initial_f_steps=1)
    if pipeline.awaiting_sensor:
        pipeline.learn_sensor(noise)
    for t in range(2, c.train_steps + 2):
        pipeline.step(Y[t])
    return pipeline.state


def control_seed(seed: int, config: ExperimentConfig) -> Dict[str, Any]:
    """seed 하나: 학습 후 폐루프 평가"""
    model = config.model.build()
    tm = derive_transformed(model)
    c = config.controller
    est = train_estimator(config, seed)

    ctrl = create_controller(
        tm, N=c.horizon, n_w=c.n_w, gamma_t=c.gamma_t, t_method=c.t_method,
        storage_policy=c.storage_policy, reuse_k=c.reuse_k, seed=seed, estimator=est,
        neumann_passes=config.estimator.neumann_passes, neumann_tol=config.estimator.neumann_tol,
        noise_family=config.model.noise_family,
    )
    learn_g_offline(ctrl, c.g_samples)

    rollout_seeds = [seed * c.rollout_seeds + i for i in range(c.rollout_seeds)]
    result = closed_loop_run(model, est, ctrl, c.t0, c.horizon, rollout_seeds, tm)

    rows = []
    for name in CONTROLLERS:
        for i, rs in enumerate(rollout_seeds):
            rows.append({'run_seed': seed, 'rollout_seed': rs, 'controller': name,
                         'cost': float(result.costs[name][i])})
    u_rows = []
    for rs, U in result.u_tilde.items():
        for k, u in enumerate(U):
            for j, v in enumerate(u):
                u_rows.append({'run_seed': seed, 'rollout_seed': rs, 't': c.t0 + k,
                               'component': j, 'u_tilde': float(v)})

    deviation = schedule_deviation(ctrl.schedule, tm) if ctrl.schedule is not None else {}
    return {
        'records': pd.DataFrame(rows, columns=CONTROL_COLUMNS),
        'u_tilde': pd.DataFrame(u_rows, columns=U_COLUMNS),
        'mean': result.mean,
        'std': result.std,
        'gap': result.relative_gap(),
        'schedule_deviation': deviation,
        'F_error': float(np.linalg.norm(est.F_hat - tm.F_tilde)),
        'F_hat': format_matrix(est.F_hat),
        'gain22': float(est.gain()[1, 1]),
        'g_flag': ctrl.g_flag,
    }


def run_control_demo(config: ExperimentConfig) -> RunResult:
    """
    제어 데모 실행

    Returns:
        RunResult: 비용 레코드, 요약 (평균/표준편차, 상대 차이, T 경로 편차, ũ 시퀀스)
    """
    c = config.controller
    seeds = config.run.seeds
    logger.info(f"🎮 제어 데모: 호라이즌 {c.horizon}, N_w={c.n_w}, 롤아웃 {c.rollout_seeds}개 × seeds {seeds}")
    per_seed = run_seeds(control_seed, seeds, config.run.workers, config=config)

    records = concat_records([d['records'] for d in per_seed], CONTROL_COLUMNS)
    means = {name: float(records[records['controller'] == name]['cost'].mean()) for name in CONTROLLERS}
    stds = {name: float(records[records['controller'] == name]['cost'].std(ddof=1))
            if len(records[records['controller'] == name]) > 1 else 0.0 for name in CONTROLLERS}
    gap = (means['neural'] - means['classical']) / means['classical'] if means['classical'] > 0 else 0.0
    checks = {
        'neural_within_gap': gap <= COST_GAP_LIMIT,
        'neural_below_zero_control': means['neural'] < means['zero'] or means['zero'] == 0.0,
    }
    summary: Dict[str, Any] = {
        'mean_cost': means,
        'std_cost': stds,
        'relative_gap': gap,
        'per_seed': {
            int(s): {k: d[k] for k in ('mean', 'gap', 'schedule_deviation', 'F_error', 'F_hat', 'gain22', 'g_flag')}
            for s, d in zip(seeds, per_seed)
        },
        'u_tilde': _u_tilde_summary([d['u_tilde'] for d in per_seed]),
        'checks': checks,
        'passed': all(checks.values()),
    }
    logger.info(f"✅ 제어 데모 완료: 신경망 {means['neural']:.6f}, 고전 {means['classical']:.6f}, "
                f"무제어 {means['zero']:.6f} (차이 {gap:+.2%})")
    return RunResult(
        kind='control_demo',
        records=records,
        summary=summary,
        config_echo=config.to_ini(),
        seeds=list(seeds),
        chart={'x': 'rollout_seed', 'y': 'cost', 'group': 'controller', 'title': 'closed-loop cost'},
    )


def _u_tilde_summary(frames: List[pd.DataFrame]) -> Dict[str, List[float]]:
    """시각/성분별 평균 ũ"""
    df = concat_records(frames, U_COLUMNS)
    if df.empty:
        return {}
    mean = df.groupby(['t', 'component'], sort=True)['u_tilde'].mean()
    out: Dict[str, List[float]] = {}
    for (t, _), v in mean.items():
        out.setdefault(str(int(t)), []).append(float(v))
    return out
