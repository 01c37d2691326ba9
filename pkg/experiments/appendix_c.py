"""
고정 혼합 행렬 기준선
Fixed Blending Baseline

큰 초기 추정 오차에서 시작해 사후 오차 ‖x − x̂‖ 의 시간 변화를 비교합니다.
- kf          : 최적 칼만 필터 (사전 공분산 = 초기 오차 크기²·I)
- fixed       : 고정 혼합 행렬 K_arb = blend·H⁺
- zero        : 이득 0 (모델 예측만)
- zero_stable : 이득 0, F 대신 stable_scale·F (스펙트럼 반경 < 1)

최적이 아닌 고정 행렬도 처음에는 오차가 지수적으로 빠르게 줄어듭니다.
초기 감소만으로 최적 필터와 구별할 수는 없으며 점근 오차에서 차이가 납니다.

CSV 열: method, seed, t, error
"""

import logging
from typing import Any, Dict, List

import numpy as np
import pandas as pd

from core.kalman_oracle import riccati_path
from core.lds import LdsModel, simulate_block
from core.linalg import spectral_radius
from core.transformed_oracle import derive_transformed
from experiments.config import ExperimentConfig, format_matrix
from experiments.results import RunResult, concat_records
from experiments.runner import run_seeds

logger = logging.getLogger(__name__)

APPENDIX_C_COLUMNS = ['method', 'seed', 't', 'error']
DECAY_RATIO_LIMIT = 0.1
NO_DECAY_FLOOR = 0.9
STEADY_STEPS = 2000


def steady_prior(model: LdsModel, steps: int = STEADY_STEPS) -> np.ndarray:
    """정상 상태 P⁻∞"""
    return riccati_path(model, model.P0, steps)['P_minus'][-1]


def initial_offset(model: LdsModel, scale: float) -> np.ndarray:
    """잡음 바닥 √trace(P⁻∞) 의 scale배 크기, 모든 성분에 같은 비율"""
    floor = float(np.sqrt(np.trace(steady_prior(model))))
    return scale * floor * np.ones(model.dx) / np.sqrt(model.dx)


def arbitrary_blend(model: LdsModel, blend: float) -> np.ndarray:
    """K_arb = blend·H⁺ (사후 추정을 H⁺y 쪽으로 당김)"""
    return blend * derive_transformed(model).H_pinv


def blend_contraction(model: LdsModel, K: np.ndarray) -> float:
    """오차 전파 F(I − KH) 의 스펙트럼 반경 (1 미만이어야 유효)"""
    return spectral_radius(model.F @ (np.eye(model.dx) - K @ model.H))


def _posterior_errors(model: LdsModel, X: np.ndarray, Y: np.ndarray, xhat_minus0: np.ndarray,
                      gains: List[np.ndarray]) -> np.ndarray:
    """
    시각별 특징 평균 ‖x_t − x̂_t‖

    gains[t] 는 시각 t의 혼합 행렬 (Dx×Dy).
    """
    xm = np.broadcast_to(xhat_minus0, X[0].shape).copy()
    errors = np.empty(len(X))
    for t in range(len(X)):
        K = gains[t]
        xhat = xm + (Y[t] - xm @ model.H.T) @ K.T
        errors[t] = float(np.mean(np.linalg.norm(X[t] - xhat, axis=1)))
        xm = xhat @ model.F.T
    return errors


def _mse_tail(model: LdsModel, X: np.ndarray, Y: np.ndarray, xhat_minus0: np.ndarray,
              gains: List[np.ndarray]) -> float:
    """후반부 절반의 평균 제곱 사후 오차"""
    xm = np.broadcast_to(xhat_minus0, X[0].shape).copy()
    start = len(X) // 2
    total, count = 0.0, 0
    for t in range(len(X)):
        xhat = xm + (Y[t] - xm @ model.H.T) @ gains[t].T
        if t >= start:
            total += float(np.sum((X[t] - xhat) ** 2))
            count += X.shape[1]
        xm = xhat @ model.F.T
    return total / count


def appendix_c_seed(seed: int, config: ExperimentConfig) -> Dict[str, Any]:
    """seed 하나의 네 가지 필터 비교"""
    spec = config.appendix_c
    model = config.model.build()
    n, horizon = spec.n_feat, spec.horizon
    offset = initial_offset(model, spec.offset_scale)
    x_start = np.broadcast_to(model.x0_mean, (n, model.dx))
    guess = model.x0_mean + offset

    block = simulate_block(model, n, horizon, seed, x_init=x_start)
    X, Y = block.X, block.Y

    L2 = float(offset @ offset)
    kf_gains = riccati_path(model, L2 * np.eye(model.dx), horizon)['K']
    K_arb = arbitrary_blend(model, spec.blend)
    fixed_gains = [K_arb] * horizon
    zero_gains = [np.zeros((model.dx, model.dy))] * horizon

    stable = model.with_changes(F=spec.stable_scale * model.F)
    Xs = simulate_block(stable, n, horizon, seed, x_init=x_start)

    curves = {
        'kf': _posterior_errors(model, X, Y, guess, kf_gains),
        'fixed': _posterior_errors(model, X, Y, guess, fixed_gains),
        'zero': _posterior_errors(model, X, Y, guess, zero_gains),
        'zero_stable': _posterior_errors(stable, Xs.X, Xs.Y, guess, zero_gains),
    }
    rows = [{'method': m, 'seed': seed, 't': t, 'error': float(e)}
            for m, errs in curves.items() for t, e in enumerate(errs)]
    k = spec.decay_step
    return {
        'records': pd.DataFrame(rows, columns=APPENDIX_C_COLUMNS),
        'ratio': {m: float(errs[k] / errs[0]) for m, errs in curves.items()},
        'mse_kf': _mse_tail(model, X, Y, guess, kf_gains),
        'mse_fixed': _mse_tail(model, X, Y, guess, fixed_gains),
    }


def run_appendix_c_baseline(config: ExperimentConfig) -> RunResult:
    """
    고정 혼합 행렬 기준선 실행

    K_arb 가 수축 조건을 어기면 경고하고 요약에 표시한 뒤 그대로 기록합니다.
    """
    spec = config.appendix_c
    model = config.model.build()
    seeds = config.run.seeds
    K_arb = arbitrary_blend(model, spec.blend)
    contraction = blend_contraction(model, K_arb)
    proviso_ok = contraction < 1.0
    if not proviso_ok:
        logger.warning(f"⚠️ K_arb 수축 조건 위반: ρ(F(I − K_arb H)) = {contraction:.4f} ≥ 1")
    stable_radius = spectral_radius(spec.stable_scale * model.F)

    logger.info(f"📉 고정 혼합 기준선: blend={spec.blend}, 특징 {spec.n_feat}개, {spec.horizon}스텝, seeds {seeds}")
    per_seed = run_seeds(appendix_c_seed, seeds, config.run.workers, config=config)
    records = concat_records([d['records'] for d in per_seed], APPENDIX_C_COLUMNS)

    k = spec.decay_step
    fixed_ratio = [d['ratio']['fixed'] for d in per_seed]
    zero_ratio = [d['ratio']['zero'] for d in per_seed]
    stable_ratio = [d['ratio']['zero_stable'] for d in per_seed]
    kf_better = [d['mse_kf'] <= d['mse_fixed'] for d in per_seed]
    checks = {
        'fixed_rapid_decay': proviso_ok and max(fixed_ratio) < DECAY_RATIO_LIMIT,
        'kf_asymptotically_optimal': all(kf_better),
        'zero_gain_matches_plant': (
            min(zero_ratio) > NO_DECAY_FLOOR if spectral_radius(model.F) >= 1.0 - 1e-9 else max(zero_ratio) < 1.0
        ),
        'zero_gain_stable_decays': stable_radius >= 1.0 or max(stable_ratio) < 1.0,
    }
    summary = {
        'K_arb': format_matrix(K_arb),
        'contraction': contraction,
        'proviso_ok': proviso_ok,
        'initial_error': float(np.linalg.norm(initial_offset(model, spec.offset_scale))),
        'decay_step': k,
        'fixed_ratio_mean': float(np.mean(fixed_ratio)),
        'kf_ratio_mean': float(np.mean([d['ratio']['kf'] for d in per_seed])),
        'zero_ratio_mean': float(np.mean(zero_ratio)),
        'zero_stable_ratio_mean': float(np.mean(stable_ratio)),
        'zero_stable_expected': float(stable_radius ** k),
        'mse_kf': [d['mse_kf'] for d in per_seed],
        'mse_fixed': [d['mse_fixed'] for d in per_seed],
        'checks': checks,
        'passed': all(checks.values()),
    }
    logger.info(f"✅ 기준선 완료: 고정 행렬 오차비(t={k}) {summary['fixed_ratio_mean']:.4f}, "
                f"KF 점근 우위 {sum(kf_better)}/{len(kf_better)}")
    return RunResult(
        kind='appendix_c',
        records=records,
        summary=summary,
        config_echo=config.to_ini(),
        seeds=list(seeds),
        chart={'x': 't', 'y': 'error', 'group': 'method', 'title': 'posterior error'},
    )
