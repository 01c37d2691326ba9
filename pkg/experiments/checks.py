"""
수용 검사 모음
Acceptance Check Suites

- invariants  : 몬테카를로 불변식과 실험 수준 수용 기준
- oracle-equiv: 측정 공간 재귀와 고전 재귀의 동치 (무작위 안정 모델)

각 검사는 CheckResult 하나를 돌려주며 --only 로 일부만, --quick 으로 축소 크기로 실행할 수 있습니다.

사용법:
    suite = InvariantSuite(config, quick=True)
    result = suite.run(only=['fixed_points', 'gradient'])
"""

import logging
import time
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from core.errors import ParameterError
from core.kalman_oracle import KfState, kc_backward, kf_learn_step, riccati_path, steady_state_isotropic
from core.lateral import DirectInverseLateral, NeumannLateral
from core.lds import LdsModel, NoiseSource, RngStream, draw_with_factor, sensor_noise_batch, simulate_block
from core.linalg import min_eigenvalue, psd_factor, relative_frobenius, second_moment, solve_spd, spectral_radius
from core.neural_controller import create_controller, init_w_ensemble, learn_t, learn_tinv, w_step_backward
from core.neural_estimator import (
    EstimatorMode, SampleMethod, create_estimator, evolve_eta_batch, learn_expectation, learn_f_initial,
)
from core.transformed_oracle import (
    control_gain_from_t, derive_transformed, s_from_t, t_path, terminal_t, z_from_p, z_path,
)
from experiments.appendix_c import run_appendix_c_baseline
from experiments.config import ExperimentConfig, RegimeSpec, RunSpec
from experiments.control_demo import run_control_demo
from experiments.fig2 import FLUCTUATION_RATIO, run_feature_ensemble, run_fig2
from experiments.regime_change import FALSE_POSITIVE_LIMIT, run_regime_change, stationary_seed
from experiments.results import RunResult
from experiments.runner import run_seeds

logger = logging.getLogger(__name__)

CHECK_COLUMNS = ['suite', 'name', 'passed', 'value', 'limit', 'seconds', 'detail']


@dataclass
class CheckResult:
    """
    검사 하나의 결과

    Attributes:
        name: 검사 이름
        passed: 통과 여부
        value: 측정값 (오차, 비율 등)
        limit: 허용 한계
        detail: 부가 설명
    """
    name: str
    passed: bool
    value: float
    limit: float
    detail: str = ''
    seconds: float = 0.0


# ============================================================
# 무작위 모델
# ============================================================

def _random_orthogonal(rng: RngStream, d: int) -> np.ndarray:
    Qm, Rm = np.linalg.qr(rng.standard_normal((d, d)))
    return Qm * np.sign(np.diag(Rm))


def _random_pd(rng: RngStream, d: int, floor: float) -> np.ndarray:
    A = rng.standard_normal((d, d))
    return A @ A.T / d + floor * np.eye(d)


def random_model(seed: int, d: int) -> LdsModel:
    """
    무작위 안정 모델 (정방 가역 H, B)

    F는 스펙트럼 반경 0.9로 스케일, H와 B는 직교 행렬 × 대각 (0.5~2),
    Q는 양반정치, R/g/r 은 양정치입니다.
    """
    rng = RngStream(seed, NoiseSource.MISC)
    F = rng.standard_normal((d, d))
    F *= 0.9 / max(spectral_radius(F), 1e-12)
    H = _random_orthogonal(rng, d) @ np.diag(rng.uniform(0.5, 2.0, d))
    B = _random_orthogonal(rng, d) @ np.diag(rng.uniform(0.5, 2.0, d))
    return LdsModel(
        F=F, B=B, H=H,
        Q=_random_pd(rng, d, 0.0), R=_random_pd(rng, d, 0.1),
        g=_random_pd(rng, d, 0.1), r=_random_pd(rng, d, 0.1),
    )


def _exact_batch(Z: np.ndarray) -> np.ndarray:
    """2차 모멘트가 정확히 Z 인 배치 (d개 행)"""
    d = Z.shape[0]
    return np.sqrt(d) * psd_factor(Z).T


# ============================================================
# 검사 모음 공통
# ============================================================

class CheckSuite:
    """
    이름 → 검사 함수 레지스트리

    하위 클래스는 checks 에 (이름, 메서드 이름) 을 등록합니다.
    """

    kind = ''
    checks: Dict[str, str] = {}

    def __init__(self, config: ExperimentConfig, quick: bool = False):
        self.config = config
        self.quick = quick or config.run.quick

    @classmethod
    def names(cls) -> List[str]:
        return list(cls.checks)

    def run(self, only: Optional[Sequence[str]] = None) -> RunResult:
        """
        검사 실행

        Raises:
            ParameterError: 알 수 없는 검사 이름
        """
        selected = list(only) if only else self.names()
        unknown = [n for n in selected if n not in self.checks]
        if unknown:
            raise ParameterError(f"알 수 없는 검사: {unknown} (가능: {', '.join(self.names())})")

        logger.info(f"🧪 {self.kind} 검사 {len(selected)}개 ({'축소' if self.quick else '전체'} 크기)")
        results: List[CheckResult] = []
        for name in selected:
            fn: Callable[[], CheckResult] = getattr(self, self.checks[name])
            start = time.perf_counter()
            res = fn()
            res.seconds = time.perf_counter() - start
            results.append(res)
            mark = '✅' if res.passed else '❌'
            logger.info(f"  {mark} {name}: {res.value:.4g} (한계 {res.limit:.4g}, {res.seconds:.1f}초) {res.detail}")

        records = pd.DataFrame(
            [{'suite': self.kind, 'name': r.name, 'passed': r.passed, 'value': r.value, 'limit': r.limit,
              'seconds': r.seconds, 'detail': r.detail} for r in results],
            columns=CHECK_COLUMNS,
        )
        failed = [r.name for r in results if not r.passed]
        return RunResult(
            kind=self.kind.replace('-', '_'),
            records=records,
            summary={'quick': self.quick, 'failed': failed, 'passed': not failed},
            config_echo=self.config.to_ini(),
            seeds=list(self.config.run.seeds),
        )

    def _with_seeds(self, seeds: Sequence[int]) -> ExperimentConfig:
        return replace(self.config, run=replace(self.config.run, seeds=list(seeds)))


# ============================================================
# invariants
# ============================================================

class InvariantSuite(CheckSuite):
    """몬테카를로 불변식과 실험 수용 기준"""

    kind = 'invariants'
    checks = {
        'noise_stats': 'check_noise_stats',
        'eta_covariance': 'check_eta_covariance',
        'w_covariance': 'check_w_covariance',
        'fixed_points': 'check_fixed_points',
        'gradient': 'check_gradient',
        'riccati_fixed_point': 'check_riccati_fixed_point',
        'fig2': 'check_fig2',
        'fig2_run4': 'check_fig2_run4',
        'method_equivalence': 'check_method_equivalence',
        'fluctuation_scaling': 'check_fluctuation_scaling',
        'controller': 'check_controller',
        'appendix_c': 'check_appendix_c',
        'regime_change': 'check_regime_change',
    }

    @property
    def mc_size(self) -> int:
        return 10_000 if self.quick else 100_000

    @property
    def mc_tolerance(self) -> float:
        return 0.10 if self.quick else 0.03

    @cached_property
    def model(self) -> LdsModel:
        return self.config.model.build()

    @cached_property
    def fig2_summary(self) -> Dict:
        seeds = range(3) if self.quick else range(10)
        return run_fig2(self._with_seeds(seeds)).summary

    # --- 잡음 통계 ---
    def check_noise_stats(self) -> CheckResult:
        n = self.mc_size
        model = self.model
        tol = 0.05 if not self.quick else 0.15
        worst, detail = 0.0, []
        draws = {
            'Q': (model.Q, draw_with_factor(model.q_factor, RngStream(0, NoiseSource.PLANT), n)),
            'R': (model.R, sensor_noise_batch(model, n, 0)),
            'P0': (model.P0, draw_with_factor(model.p0_factor, RngStream(0, NoiseSource.INITIAL), n)),
        }
        mean_ok = True
        for name, (cov, X) in draws.items():
            err = relative_frobenius(second_moment(X), cov)
            se = np.sqrt(np.maximum(np.diag(cov), 1e-300) / n)
            mean_ok &= bool(np.all(np.abs(X.mean(axis=0)) < 4.0 * se))
            worst = max(worst, err)
            detail.append(f"{name}={err:.3%}")
        return CheckResult('noise_stats', worst < tol and mean_ok, worst, tol, ', '.join(detail))

    # --- η 공분산 ---
    def check_eta_covariance(self, steps: int = 10) -> CheckResult:
        model = self.model
        tm = derive_transformed(model)
        n = self.mc_size
        Zs = z_path(tm, z_from_p(model, model.P0), steps)
        Y = simulate_block(model, n, steps + 1, seed=0).Y
        eta = model.x0_mean @ model.H.T - Y[0]
        worst = 0.0
        for t in range(steps + 1):
            worst = max(worst, relative_frobenius(second_moment(eta), Zs[t]))
            if t == steps:
                break
            Zinv = solve_spd(Zs[t], np.eye(tm.dy), 'Z')
            eta, _ = evolve_eta_batch(tm.F_tilde, tm.R, lambda E, M=Zinv: E @ M, eta, Y[t], Y[t + 1])
        tol = self.mc_tolerance
        return CheckResult('eta_covariance', worst < tol, worst, tol, f"{n} 특징 × {steps} 스텝")

    # --- w 공분산 ---
    def check_w_covariance(self, steps: int = 10) -> CheckResult:
        tm = derive_transformed(self.model)
        n = self.mc_size
        ctrl = create_controller(tm, N=steps, n_w=n, seed=0, g_hat=tm.g_tilde)
        init_w_ensemble(ctrl, tm)
        path = t_path(tm, terminal_t(tm), steps)
        worst = relative_frobenius(second_moment(ctrl.w), path[0])
        for k in range(steps):
            ctrl.t_rep = DirectInverseLateral.from_covariance(path[k])
            ctrl.t_rep_tau = ctrl.tau
            w_step_backward(ctrl, tm)
            worst = max(worst, relative_frobenius(second_moment(ctrl.w), path[k + 1]))
        tol = self.mc_tolerance
        return CheckResult('w_covariance', worst < tol, worst, tol, f"{n} 구성원 × {steps} 역방향 스텝")

    # --- 학습 규칙 고정점 ---
    def check_fixed_points(self) -> CheckResult:
        tol = 1e-12
        worst = 0.0
        for seed in range(5):
            rng = RngStream(seed, NoiseSource.MISC)
            d = 2 + seed % 2
            Z = _random_pd(rng, d, 0.5)
            batch = _exact_batch(Z)

            rep1 = NeumannLateral.from_covariance(Z)
            rep1.learn(batch, 0.3)
            worst = max(worst, relative_frobenius(rep1.covariance(), Z))

            rep2 = DirectInverseLateral.from_covariance(Z)
            Zinv = rep2.inverse_matrix()
            rep2.learn_from_v(batch @ Zinv, 0.03)
            worst = max(worst, relative_frobenius(rep2.Zinv, Zinv))

            tm = derive_transformed(random_model(seed, d))
            ctrl = create_controller(tm, N=1, n_w=d, t_method='method1', g_hat=tm.g_tilde)
            learn_t(ctrl, batch)
            learn_t(ctrl, batch)
            worst = max(worst, relative_frobenius(ctrl.t_rep.covariance(), Z))
            ctrl2 = create_controller(tm, N=1, n_w=d, t_method='method2', g_hat=tm.g_tilde, incremental=False)
            ctrl2.t_rep = DirectInverseLateral.from_covariance(Z)
            learn_tinv(ctrl2, batch @ Zinv)
            worst = max(worst, relative_frobenius(ctrl2.t_rep.Zinv, Zinv))

            worst = max(worst, relative_frobenius(learn_expectation(Z, batch, batch, 0.4), Z))
        return CheckResult('fixed_points', worst < tol, worst, tol, 'Z̃, Z⁻¹, T̃, T⁻¹, ⟨vz\'⟩')

    # --- F̃ 학습 기울기 ---
    def check_gradient(self, h: float = 1e-6) -> CheckResult:
        worst = 0.0
        for seed in range(5):
            rng = RngStream(seed, NoiseSource.MISC)
            d, n, gamma = 3, 20, 1e-3
            F0 = rng.uniform(-0.5, 0.5, (d, d))
            Yp = rng.standard_normal((n, d))
            Yn = rng.standard_normal((n, d))
            state = create_estimator(d, n, EstimatorMode.INITIAL_F, F_hat=F0,
                                     sample=SampleMethod.from_rate('a', n, 1.0), gamma_f=gamma, incremental=False)
            learn_f_initial(state, Yp, Yn)
            step = (F0 - state.F_hat) / gamma

            def half_loss(F):
                E = Yp @ F.T - Yn
                return 0.5 * float(np.mean(np.sum(E * E, axis=1)))

            grad = np.empty((d, d))
            for i in range(d):
                for j in range(d):
                    dF = np.zeros((d, d))
                    dF[i, j] = h
                    grad[i, j] = (half_loss(F0 + dF) - half_loss(F0 - dF)) / (2 * h)
            worst = max(worst, relative_frobenius(step, grad))
        tol = 1e-6
        return CheckResult('gradient', worst < tol, worst, tol, '½⟨ε\'ε⟩ 중앙 차분, 3차원')

    # --- Riccati 고정점 ---
    def check_riccati_fixed_point(self, steps: int = 200) -> CheckResult:
        spec = self.config.model
        model = LdsModel.rotation_example(spec.plant_deg, spec.measurement_deg, spec.q, spec.rho)
        P = riccati_path(model, np.eye(2), steps)['P_minus'][-1]
        p_star = steady_state_isotropic(spec.q, spec.rho)
        err = float(np.max(np.abs(P - p_star * np.eye(2))))
        tol = 1e-12
        return CheckResult('riccati_fixed_point', err < tol, err, tol, f"p*={p_star:.6e}")

    # --- 이득 학습 곡선 ---
    def check_fig2(self) -> CheckResult:
        s = self.fig2_summary
        ok = all(s['checks'][k] for k in ('run1_identity', 'run2_gain', 'run3_gain'))
        err = max(abs(s['run2_terminal_mean'] - s['target_gain22']), abs(s['run3_terminal_mean'] - s['target_gain22']))
        return CheckResult('fig2', ok, err, 0.05,
                           f"run1≡run1p {s['run1_identity_gap']:.1e}, run2 {s['run2_terminal_mean']:.4f}, "
                           f"run3 {s['run3_terminal_mean']:.4f}")

    def check_fig2_run4(self) -> CheckResult:
        s = self.fig2_summary
        ok = s['checks']['run4_F22'] and s['checks']['span_deficiency']
        err = abs(s['run4_F22_mean'] - s['target_F22'])
        return CheckResult('fig2_run4', ok, err, 0.02,
                           f"F̂₂₂ {s['run4_F22_mean']:.5f}, 투영 밖 |ΔF̂₂₂| {s['span_F22_change']:.2e}")

    def check_method_equivalence(self) -> CheckResult:
        s = self.fig2_summary
        gap = abs(s['run3_terminal_mean'] - s['run3_method2_terminal_mean'])
        return CheckResult('method_equivalence', gap < 0.05, gap, 0.05,
                           f"Method 1 {s['run3_terminal_mean']:.4f}, Method 2 {s['run3_method2_terminal_mean']:.4f}")

    def check_fluctuation_scaling(self) -> CheckResult:
        seeds = list(range(10 if self.quick else 30))
        small, large = (100, 400) if self.quick else (100, 1000)
        limit = 0.75 if self.quick else FLUCTUATION_RATIO
        config = self._with_seeds(seeds)

        def terminals(n):
            frames = run_seeds(_terminal_gain, seeds, config.run.workers, config=config, n_feat=n)
            return np.array(frames)

        ratio = float(np.std(terminals(large), ddof=1) / np.std(terminals(small), ddof=1))
        return CheckResult('fluctuation_scaling', ratio <= limit, ratio, limit,
                           f"n_feat {small} → {large}, {len(seeds)} seeds")

    # --- 실험 수준 ---
    def check_controller(self) -> CheckResult:
        config = self._with_seeds([self.config.run.seeds[0]])
        if self.quick:
            config = replace(config, controller=replace(config.controller, rollout_seeds=100, n_w=2000,
                                                        g_samples=20_000, r_samples=20_000))
        s = run_control_demo(config).summary
        return CheckResult('controller', s['passed'], s['relative_gap'], 0.10,
                           f"신경망 {s['mean_cost']['neural']:.5f}, 고전 {s['mean_cost']['classical']:.5f}, "
                           f"무제어 {s['mean_cost']['zero']:.5f}")

    def check_appendix_c(self) -> CheckResult:
        s = run_appendix_c_baseline(self._with_seeds(range(5 if self.quick else 20))).summary
        return CheckResult('appendix_c', s['passed'], s['fixed_ratio_mean'], 0.1,
                           f"KF 점근 오차 ≤ 고정 행렬: {s['checks']['kf_asymptotically_optimal']}")

    def check_regime_change(self) -> CheckResult:
        regime: RegimeSpec = replace(self.config.regime, stationary_steps=0)
        change_seeds = range(2 if self.quick else 5)
        config = replace(self._with_seeds(change_seeds), regime=regime)
        s = run_regime_change(config).summary

        fp_seeds = list(range(5 if self.quick else 100))
        fp_steps = 2000 if self.quick else 10_000
        fp_config = replace(config, regime=replace(regime, stationary_steps=fp_steps),
                            run=RunSpec(seeds=fp_seeds, workers=config.run.workers))
        stationary = run_seeds(stationary_seed, fp_seeds, config.run.workers, config=fp_config)
        checked = sum(d['checked'] for d in stationary)
        rate = sum(d['detections'] for d in stationary) / checked if checked else 0.0
        ok = s['passed'] and rate < FALSE_POSITIVE_LIMIT
        return CheckResult('regime_change', ok, rate, FALSE_POSITIVE_LIMIT,
                           f"지연 {s['detection_delay']}, 재수렴 {s['post_gain_mean']:.4f}")


def _terminal_gain(seed: int, config: ExperimentConfig, n_feat: int) -> float:
    df = run_feature_ensemble(config, seed, n_feat=n_feat, record=False)
    return float(df['IHK22'].iloc[-1])


# ============================================================
# oracle-equiv
# ============================================================

class OracleEquivalenceSuite(CheckSuite):
    """측정 공간 재귀 ↔ 고전 재귀 동치"""

    kind = 'oracle-equiv'
    checks = {
        'estimation': 'check_estimation',
        'control': 'check_control',
    }

    @property
    def n_models(self) -> int:
        return 5 if self.quick else 20

    def check_estimation(self, steps: int = 50) -> CheckResult:
        """Z 경로 = HP⁻H' + R 경로, 양정치 유지"""
        worst, pd_ok = 0.0, True
        for seed in range(self.n_models):
            model = random_model(seed, 2 + seed % 2)
            tm = derive_transformed(model)
            Ps = riccati_path(model, model.P0, steps)['P_minus']
            Zs = z_path(tm, z_from_p(model, model.P0), steps)
            for P, Z in zip(Ps, Zs):
                worst = max(worst, float(np.linalg.norm(Z - z_from_p(model, P))))
                pd_ok &= min_eigenvalue(Z) > 0
        tol = 1e-9
        return CheckResult('estimation', worst < tol and pd_ok, worst, tol,
                           f"{self.n_models} 모델 × {steps} 스텝")

    def check_control(self, steps: int = 20) -> CheckResult:
        """S = H'(T − g̃)H 와 L̃ = −HBLH⁺ (상대 Frobenius)"""
        worst, pd_ok = 0.0, True
        for seed in range(self.n_models):
            model = random_model(seed, 2 + seed % 2)
            tm = derive_transformed(model)
            N = steps
            kc = kc_backward(model, N, 0)
            Ts = t_path(tm, terminal_t(tm), steps)
            for k, T in enumerate(Ts):
                tau = N - k
                worst = max(worst, relative_frobenius(s_from_t(model, tm, T), kc.S[tau]))
                pd_ok &= min_eigenvalue(T) > 0
                if tau >= 1:
                    L_tilde = control_gain_from_t(tm, T)
                    expected = -tm.HB @ kc.gain(tau - 1) @ tm.H_pinv
                    worst = max(worst, relative_frobenius(L_tilde, expected))
        tol = 1e-9
        return CheckResult('control', worst < tol and pd_ok, worst, tol,
                           f"{self.n_models} 모델 × {steps} 역방향 스텝")


SUITES = {
    'invariants': InvariantSuite,
    'oracle-equiv': OracleEquivalenceSuite,
}
