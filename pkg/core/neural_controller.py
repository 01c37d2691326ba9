"""
신경망 칼만 제어기
Neural Kalman Controller

내부 생성 잡음 ν^g (공분산 g̃), ν^r (공분산 r̃) 로 만든 w 앙상블을 시간 역방향으로 진행시키며
T (또는 T⁻¹)를 Hebbian 규칙으로 학습합니다.

    w_N     = ν^r_{N+1} − ν^g_N                      (E[ww'] = r̃ + g̃ = T_N)
    w_{τ−1} = −ν^g_{τ−1} + ν^r_τ + F̃'(ν^g_τ + g̃ T_τ⁻¹ w_τ)
    ũ_t     = (−I + T_{t+1}⁻¹ ĝ) F̂ ŷ_t

ν^g_τ 는 w_τ 를 만들 때 쓴 바로 그 표본이며, ν^g_{τ−1}, ν^r_τ 는 w_τ 계산 뒤에 추출합니다.

저장 정책:
- a (StoreAll): 모든 실행 시각의 T 스냅샷 저장
- b (RelearnEachStep): 매 실행 시각마다 역방향 스윕을 다시 수행, 스냅샷 하나만 유지
- c (ReuseKSteps): t0, t0+k, ... 에서만 저장, 가장 최근 스냅샷 재사용

사용법:
    ctrl = create_controller(tm, N=5, n_w=10_000, estimator=est)
    learn_g_offline(ctrl, 100_000)
    schedule = kc_learning_sweep(ctrl, tm, t0=0)
    u_tilde = control_execute(ctrl, 0, yhat)
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import ModeError, ParameterError, ScheduleError
from core.kalman_oracle import KfState, cost_from_arrays, kc_backward, kf_execute_step, kf_learn_step
from core.lateral import (
    DEFAULT_PASSES, DEFAULT_TOL, DirectInverseLateral, LateralInverse, NeumannLateral, make_lateral,
)
from core.lds import (
    NOISE_FAMILIES, STREAMS_PER_FEATURE, LdsModel, NoiseSource, PlantState, RngStream,
    draw_initial_state, draw_with_factor, measure, step_plant,
)
from core.linalg import psd_factor, relative_frobenius, second_moment, symmetrize
from core.neural_estimator import EstimatorMode, EstimatorState, execute_frozen, learn_expectation
from core.transformed_oracle import TransformedModel, derive_transformed, t_path, terminal_t

logger = logging.getLogger(__name__)

# 제어기 스트림은 특징 스트림(feature * 8 + source)과 겹치지 않는 구간을 씁니다
CONTROLLER_STREAM_BASE = 10 ** 9
ROLLOUT_STREAM_BASE = 2 * 10 ** 9
G_CONDITION_LIMIT = 1e8


class StoragePolicy(str, Enum):
    """T 스냅샷 저장 정책"""
    STORE_ALL = 'a'
    RELEARN_EACH_STEP = 'b'
    REUSE_K_STEPS = 'c'


def controller_stream(seed: int, sweep_start: int, source: NoiseSource, family: str = 'gaussian') -> RngStream:
    """(seed, 스윕 시작 시각, 잡음원) 스트림. sweep_start = −1 은 오프라인 ĝ 학습용"""
    return RngStream(seed, CONTROLLER_STREAM_BASE + (sweep_start + 1) * STREAMS_PER_FEATURE + int(source), family)


@dataclass
class ControlSchedule:
    """
    실행 시각 t → T_{t+1} 표현 스냅샷

    Attributes:
        policy: 저장 정책
        t0: 스윕 시작 시각
        N: 호라이즌
        k: 정책 c의 재사용 간격
        snapshots: {t: T_{t+1} 표현}
    """
    policy: StoragePolicy
    t0: int
    N: int
    k: int = 1
    snapshots: Dict[int, LateralInverse] = field(default_factory=dict)

    def offer(self, t: int, rep: LateralInverse) -> None:
        """정책에 맞으면 스냅샷 저장"""
        if self.policy is StoragePolicy.STORE_ALL:
            keep = True
        elif self.policy is StoragePolicy.RELEARN_EACH_STEP:
            keep = t == self.t0
        else:
            keep = (t - self.t0) % self.k == 0
        if keep:
            self.snapshots[t] = rep.copy()

    def lookup(self, t: int) -> LateralInverse:
        """
        실행 시각 t의 T 표현

        Raises:
            ScheduleError: 정책상 해당 스냅샷이 없을 때
        """
        if not (self.t0 <= t < self.N):
            raise ScheduleError(f"t={t}: 스케줄 범위 [{self.t0}, {self.N - 1}] 밖입니다")
        if self.policy is StoragePolicy.REUSE_K_STEPS:
            stored = [s for s in self.snapshots if s <= t]
            if stored:
                return self.snapshots[max(stored)]
        elif t in self.snapshots:
            return self.snapshots[t]
        raise ScheduleError(f"t={t}: 정책 {self.policy.value}에서 저장된 T 스냅샷이 없습니다")

    @property
    def times(self) -> List[int]:
        return sorted(self.snapshots)


@dataclass
class ControllerState:
    """
    제어기 상태

    ĝ, T 표현, w 앙상블과 역방향 진행 시각 τ를 담습니다.
    F̃'는 연결된 추정기의 F̂ 를 전치해 읽습니다 (같은 학습 객체).
    """
    g_hat: np.ndarray
    noise_g: np.ndarray
    noise_r: np.ndarray
    N: int
    n_w: int = 10_000
    gamma_t: float = 1.0
    t_method: str = 'method1'
    incremental: bool = True
    storage_policy: StoragePolicy = StoragePolicy.STORE_ALL
    reuse_k: int = 1
    seed: int = 0
    noise_family: str = 'gaussian'
    neumann_passes: int = DEFAULT_PASSES
    neumann_tol: float = DEFAULT_TOL
    estimator: Optional[EstimatorState] = None
    g_ready: bool = False
    g_flag: str = ''
    # 스윕 상태
    t0: int = 0
    tau: Optional[int] = None
    t_rep: Optional[LateralInverse] = None
    t_rep_tau: Optional[int] = None
    w: Optional[np.ndarray] = None
    pending_g: Optional[np.ndarray] = None
    schedule: Optional[ControlSchedule] = None
    draw_log: List[Tuple[str, int]] = field(default_factory=list)
    _rng_g: Optional[RngStream] = field(default=None, repr=False)
    _rng_r: Optional[RngStream] = field(default=None, repr=False)

    @property
    def dy(self) -> int:
        return self.g_hat.shape[0]

    @property
    def rate_t(self) -> float:
        """갱신당 학습률 (Method 2 증분이면 γ_T / N_w)"""
        if self.t_method == 'method2' and self.incremental:
            return self.gamma_t / self.n_w
        return self.gamma_t

    def f_tilde(self, tm: Optional[TransformedModel] = None) -> np.ndarray:
        """제어에 쓰는 F̃ (추정기 F̂ 우선, 없으면 오라클)"""
        if self.estimator is not None:
            return self.estimator.F_hat
        if tm is None:
            raise ParameterError("추정기가 연결되지 않아 TransformedModel이 필요합니다")
        return tm.F_tilde

    def f_prime(self, tm: Optional[TransformedModel] = None) -> np.ndarray:
        """F̃' (추정기 F̂ 의 전치 뷰)"""
        return self.f_tilde(tm).T


def create_controller(
    tm: TransformedModel,
    N: int,
    n_w: int = 10_000,
    gamma_t: float = 1.0,
    t_method: str = 'method1',
    storage_policy=StoragePolicy.STORE_ALL,
    reuse_k: int = 1,
    seed: int = 0,
    estimator: Optional[EstimatorState] = None,
    g_hat: Optional[np.ndarray] = None,
    incremental: bool = True,
    neumann_passes: int = DEFAULT_PASSES,
    neumann_tol: float = DEFAULT_TOL,
    noise_family: str = 'gaussian',
) -> ControllerState:
    """
    제어기 생성

    ν^g, ν^r 생성기는 tm의 g̃, r̃ 로 설정됩니다 (분포는 noise_family).
    g_hat을 주면 학습된 것으로 간주하고, 없으면 learn_g_offline()을 먼저 호출해야 합니다.
    """
    if n_w < 1:
        raise ParameterError(f"N_w={n_w} 는 1 이상이어야 합니다")
    if t_method not in ('method1', 'method2'):
        raise ParameterError(f"t_method={t_method} (method1 | method2)")
    if not (0.0 <= gamma_t):
        raise ParameterError(f"γ_T={gamma_t} 는 0 이상이어야 합니다")
    policy = StoragePolicy(storage_policy)
    if policy is StoragePolicy.REUSE_K_STEPS and reuse_k < 1:
        raise ParameterError(f"reuse_k={reuse_k} 는 1 이상이어야 합니다")
    if noise_family not in NOISE_FAMILIES:
        raise ParameterError(f"noise_family={noise_family} (가능: {', '.join(NOISE_FAMILIES)})")
    d = tm.dy
    ctrl = ControllerState(
        g_hat=np.zeros((d, d)) if g_hat is None else symmetrize(g_hat),
        noise_g=symmetrize(tm.g_tilde),
        noise_r=symmetrize(tm.r_tilde),
        N=N,
        n_w=n_w,
        gamma_t=gamma_t,
        t_method=t_method,
        incremental=incremental,
        storage_policy=policy,
        reuse_k=reuse_k,
        seed=seed,
        noise_family=noise_family,
        neumann_passes=neumann_passes,
        neumann_tol=neumann_tol,
        estimator=estimator,
        g_ready=g_hat is not None,
    )
    if ctrl.rate_t > 1.0:
        raise ParameterError(f"갱신당 학습률 γ_T={ctrl.rate_t:g} 가 1을 넘습니다")
    logger.info(f"🎮 제어기 생성: Dy={d}, N={N}, N_w={n_w}, {t_method}, 정책={policy.value}, γ_T={gamma_t:g}")
    return ctrl


def _draw(ctrl: ControllerState, name: str, tau: int) -> np.ndarray:
    if name == 'nu_g':
        sample = draw_with_factor(psd_factor(ctrl.noise_g, 'g̃'), ctrl._rng_g, ctrl.n_w)
    else:
        sample = draw_with_factor(psd_factor(ctrl.noise_r, 'r̃'), ctrl._rng_r, ctrl.n_w)
    ctrl.draw_log.append((name, tau))
    return sample


def init_w_ensemble(ctrl: ControllerState, tm: Optional[TransformedModel] = None,
                    n_w: Optional[int] = None, rng: Optional[RngStream] = None,
                    sweep_start: int = 0) -> ControllerState:
    """
    w_N = ν^r_{N+1} − ν^g_N 앙상블 생성 (τ = N)

    스트림은 (seed, sweep_start)로 결정됩니다. rng를 주면 그 seed를 씁니다.
    ν^g_N 은 첫 역방향 스텝에서 다시 쓰이도록 보관합니다.
    """
    if n_w is not None:
        ctrl.n_w = n_w
    seed = ctrl.seed if rng is None else rng.seed
    ctrl._rng_g = controller_stream(seed, sweep_start, NoiseSource.CONTROL_G, ctrl.noise_family)
    ctrl._rng_r = controller_stream(seed, sweep_start, NoiseSource.CONTROL_R, ctrl.noise_family)
    ctrl.draw_log = []
    N = ctrl.N
    nu_r = _draw(ctrl, 'nu_r', N + 1)
    nu_g = _draw(ctrl, 'nu_g', N)
    ctrl.w = nu_r - nu_g
    ctrl.pending_g = nu_g
    ctrl.draw_log.append(('w', N))
    ctrl.tau = N
    ctrl.t_rep = None
    ctrl.t_rep_tau = None
    return ctrl


def learn_t(ctrl: ControllerState, w_batch) -> ControllerState:
    """
    Method 1: T' = (1−γ_T) T + γ_T ⟨ww'⟩, T̃ = I − cT 로 저장

    표현이 없으면 ⟨ww'⟩ 로 초기화합니다.
    """
    W = np.atleast_2d(np.asarray(w_batch, dtype=float))
    if ctrl.t_rep is None:
        ctrl.t_rep = NeumannLateral.from_covariance(second_moment(W), ctrl.neumann_passes, ctrl.neumann_tol)
        return ctrl
    if not isinstance(ctrl.t_rep, NeumannLateral):
        raise ParameterError("learn_t는 Method 1 표현에서만 사용합니다")
    ctrl.t_rep.learn(W, ctrl.rate_t)
    return ctrl


def learn_tinv(ctrl: ControllerState, v_batch) -> ControllerState:
    """Method 2: T⁻¹' = (1+γ_T) T⁻¹ − γ_T ⟨vv'⟩, v = T⁻¹w (대칭화)"""
    if not isinstance(ctrl.t_rep, DirectInverseLateral):
        raise ParameterError("learn_tinv는 Method 2 표현에서만 사용합니다")
    ctrl.t_rep.learn_from_v(v_batch, ctrl.rate_t)
    return ctrl


def _learn_t_rep(ctrl: ControllerState, W: np.ndarray) -> None:
    """현재 w 앙상블로 T_τ 학습 (Method 2 증분은 구성원마다 순차)"""
    if ctrl.t_method == 'method1':
        learn_t(ctrl, W)
    else:
        if ctrl.t_rep is None:
            ctrl.t_rep = make_lateral('method2', second_moment(W))
        elif ctrl.incremental:
            for w in W:
                learn_tinv(ctrl, ctrl.t_rep.apply_inverse(w)[None, :])
        else:
            learn_tinv(ctrl, ctrl.t_rep.apply_inverse(W))
    ctrl.t_rep_tau = ctrl.tau


def w_step_backward(ctrl: ControllerState, tm: Optional[TransformedModel] = None) -> ControllerState:
    """
    w_τ → w_{τ−1} 한 스텝, τ 감소

    w_{τ−1} = −ν^g_{τ−1} + ν^r_τ + F̃'(ν^g_τ + ĝ T_τ⁻¹ w_τ)

    Raises:
        ParameterError: τ ≤ t0
        ScheduleError: T_τ 가 아직 학습되지 않음
    """
    tau = ctrl.tau
    if tau is None or ctrl.w is None:
        raise ScheduleError("init_w_ensemble()을 먼저 호출해야 합니다")
    if tau <= ctrl.t0:
        raise ParameterError(f"τ={tau} ≤ t0={ctrl.t0}: 더 이상 역방향으로 진행할 수 없습니다")
    if ctrl.t_rep is None or ctrl.t_rep_tau != tau:
        raise ScheduleError(f"τ={tau}: T_τ 가 학습되지 않았습니다")
    drive = ctrl.pending_g + ctrl.t_rep.apply_inverse(ctrl.w) @ ctrl.g_hat.T
    nu_g = _draw(ctrl, 'nu_g', tau - 1)
    nu_r = _draw(ctrl, 'nu_r', tau)
    # 행 배치: (F̃' d)' = d' F̃
    ctrl.w = -nu_g + nu_r + drive @ ctrl.f_tilde(tm)
    ctrl.pending_g = nu_g
    ctrl.tau = tau - 1
    ctrl.draw_log.append(('w', tau - 1))
    return ctrl


def learn_g_offline(ctrl: ControllerState, n_samples: int, rng: Optional[RngStream] = None,
                    gamma: float = 1.0) -> ControllerState:
    """
    ν^g 생성기로 ĝ 학습  ĝ' = (1−γ) ĝ + γ ⟨ν^g ν^g'⟩

    계수 부족이나 조건수가 큰 ĝ 는 경고하고 ctrl.g_flag에 기록합니다.
    """
    if n_samples < 1:
        raise ParameterError(f"n_samples={n_samples} 는 1 이상이어야 합니다")
    rng = controller_stream(ctrl.seed, -1, NoiseSource.CONTROL_G, ctrl.noise_family) if rng is None else rng
    nu = draw_with_factor(psd_factor(ctrl.noise_g, 'g̃'), rng, n_samples)
    ctrl.g_hat = symmetrize(learn_expectation(ctrl.g_hat, nu, nu, gamma))
    ctrl.g_ready = True

    d = ctrl.dy
    rank = int(np.linalg.matrix_rank(ctrl.g_hat)) if np.any(ctrl.g_hat) else 0
    cond = float(np.linalg.cond(ctrl.g_hat)) if rank == d else float('inf')
    if rank < d or cond > G_CONDITION_LIMIT:
        ctrl.g_flag = f"rank={rank}/{d}, cond={cond:.3e}"
        logger.warning(f"⚠️ 학습된 ĝ 가 불충분합니다 ({ctrl.g_flag}, 표본 {n_samples}개)")
    else:
        ctrl.g_flag = ''
    logger.debug(f"ĝ 학습 완료: diag={np.diag(ctrl.g_hat)}")
    return ctrl


def kc_learning_sweep(ctrl: ControllerState, tm: Optional[TransformedModel] = None,
                      t0: int = 0, rng: Optional[RngStream] = None) -> ControlSchedule:
    """
    역방향 학습 스윕

    T_N 을 w_N 앙상블로 학습한 뒤 τ = N … t0+2 에 대해 w_step_backward/T 학습을 반복합니다.
    실행 시각 t의 스냅샷은 T_{t+1} 입니다.

    Raises:
        ParameterError: N ≤ t0
        ModeError: ĝ 가 준비되지 않음
    """
    N = ctrl.N
    if N <= t0:
        raise ParameterError(f"N({N}) > t0({t0}) 이어야 합니다")
    if not ctrl.g_ready:
        raise ModeError("ĝ 가 없습니다: learn_g_offline()을 먼저 호출하거나 g_hat을 지정하세요")
    ctrl.t0 = t0
    schedule = ControlSchedule(ctrl.storage_policy, t0, N, ctrl.reuse_k)

    init_w_ensemble(ctrl, tm, rng=rng, sweep_start=t0)
    _learn_t_rep(ctrl, ctrl.w)
    schedule.offer(N - 1, ctrl.t_rep)
    for _ in range(N, t0 + 1, -1):
        w_step_backward(ctrl, tm)
        _learn_t_rep(ctrl, ctrl.w)
        schedule.offer(ctrl.tau - 1, ctrl.t_rep)

    ctrl.schedule = schedule
    logger.debug(f"역방향 스윕 완료: t0={t0}, N={N}, 스냅샷 {schedule.times}")
    return schedule


def control_execute(ctrl: ControllerState, t: int, yhat,
                    schedule: Optional[ControlSchedule] = None,
                    tm: Optional[TransformedModel] = None) -> np.ndarray:
    """
    ũ_t = (−I + T_{t+1}⁻¹ ĝ) F̂ ŷ_t

    Raises:
        ScheduleError: 정책상 스냅샷이 없을 때
    """
    schedule = ctrl.schedule if schedule is None else schedule
    if schedule is None:
        raise ScheduleError("학습된 제어 스케줄이 없습니다")
    rep = schedule.lookup(t)
    a = np.asarray(yhat, dtype=float) @ ctrl.f_tilde(tm).T
    return -a + rep.apply_inverse(a @ ctrl.g_hat.T)


def schedule_deviation(schedule: ControlSchedule, tm: TransformedModel) -> Dict[int, float]:
    """저장된 T_{t+1} 과 오라클 T 경로의 상대 Frobenius 오차 {t: 오차}"""
    path = t_path(tm, terminal_t(tm), schedule.N - schedule.t0 - 1)
    out = {}
    for t, rep in schedule.snapshots.items():
        out[t] = relative_frobenius(rep.covariance(), path[schedule.N - (t + 1)])
    return out


# ============================================================
# 폐루프 평가
# ============================================================

CONTROLLERS = ('neural', 'classical', 'zero')


@dataclass
class ClosedLoopResult:
    """
    폐루프 비용 통계

    Attributes:
        costs: {제어기: seed별 J 배열}
        u_tilde: {seed: 신경망 ũ 시퀀스 (N−t0, Dy)}
    """
    seeds: List[int]
    costs: Dict[str, np.ndarray]
    u_tilde: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def mean(self) -> Dict[str, float]:
        return {k: float(np.mean(v)) for k, v in self.costs.items()}

    @property
    def std(self) -> Dict[str, float]:
        return {k: float(np.std(v, ddof=1)) if len(v) > 1 else 0.0 for k, v in self.costs.items()}

    def relative_gap(self) -> float:
        """(신경망 − 고전) / 고전 평균 비용"""
        m = self.mean
        if m['classical'] == 0.0:
            return 0.0 if m['neural'] == 0.0 else float('inf')
        return (m['neural'] - m['classical']) / m['classical']


def _rollout_streams(seed: int, family: str) -> Tuple[RngStream, RngStream, RngStream]:
    base = ROLLOUT_STREAM_BASE
    return (RngStream(seed, base + NoiseSource.INITIAL, family),
            RngStream(seed, base + NoiseSource.PLANT, family),
            RngStream(seed, base + NoiseSource.SENSOR, family))


def _rollout(model: LdsModel, seed: int, t0: int, N: int, policy: str, act) -> Tuple[float, np.ndarray]:
    """
    한 seed의 폐루프 실현 (같은 seed는 제어기와 무관하게 같은 잡음)

    act(t, y) → u_t
    """
    rng_x0, rng_m, rng_n = _rollout_streams(seed, model.noise_family)
    s = draw_initial_state(model, rng_x0)
    s = PlantState(x=s.x, t=t0)
    X, U = [s.x], []
    for t in range(t0, N):
        y, _ = measure(model, s, rng_n)
        u = act(t, y)
        U.append(u)
        s = step_plant(model, s, u, rng_m)
        X.append(s.x)
    X, U = np.array(X), np.array(U)
    logger.debug(f"seed {seed} {policy}: 비용 {cost_from_arrays(X, U, model):.6f}")
    return cost_from_arrays(X, U, model), U


def closed_loop_run(
    model: LdsModel,
    estimator: EstimatorState,
    ctrl: ControllerState,
    t0: int,
    N: int,
    seeds: Sequence[int],
    tm: Optional[TransformedModel] = None,
    filter_P0: Optional[np.ndarray] = None,
) -> ClosedLoopResult:
    """
    신경망 KC, 고전 KC, 무제어의 폐루프 비용 비교

    학습은 고정된 상태로 평가합니다. 신경망 제어는 u = (HB)⁺ũ 로 플랜트에 가해지고
    ũ는 원심성 사본으로 추정기 예측 ŷ⁻_{t+1} = F̂ŷ_t + ũ_t 에 들어갑니다.

    Args:
        filter_P0: 고전 필터의 사전 공분산 (기본: 모델 P0)

    Raises:
        ModeError: 추정기가 Kalman 모드가 아닐 때
    """

    if estimator.mode is not EstimatorMode.KALMAN:
        raise ModeError(f"closed_loop_run: 추정기가 Kalman 모드여야 합니다 (현재 {estimator.mode.value})")
    if ctrl.N != N:
        raise ParameterError(f"제어기 호라이즌 {ctrl.N} != N {N}")
    tm = derive_transformed(model) if tm is None else tm

    if ctrl.storage_policy is StoragePolicy.RELEARN_EACH_STEP:
        schedules = {t: kc_learning_sweep(ctrl, tm, t) for t in range(t0, N)}
    else:
        sched = kc_learning_sweep(ctrl, tm, t0)
        schedules = {t: sched for t in range(t0, N)}
    kc = kc_backward(model, N, t0)

    costs = {name: np.empty(len(seeds)) for name in CONTROLLERS}
    u_tildes: Dict[int, np.ndarray] = {}
    for i, seed in enumerate(seeds):
        # 신경망: 고정된 추정기 + 학습된 스케줄
        pred = {'yhat_minus': None}
        used: List[np.ndarray] = []

        def act_neural(t, y):
            yhat = execute_frozen(estimator, pred['yhat_minus'], y)
            ut = control_execute(ctrl, t, yhat, schedules[t], tm)
            pred['yhat_minus'] = yhat @ estimator.F_hat.T + ut
            used.append(ut)
            return tm.u_of(ut)

        # 고전: KF + KC
        kf = {'state': KfState.initial(model, P0=filter_P0)}

        def act_classical(t, y):
            st = kf_learn_step(model, kf['state'])
            xhat = st.xhat_minus + st.K @ (y - model.H @ st.xhat_minus)
            u = -kc.gain(t) @ xhat
            kf['state'] = kf_execute_step(model, st, y, u)
            return u

        costs['neural'][i], _ = _rollout(model, seed, t0, N, 'neural', act_neural)
        costs['classical'][i], _ = _rollout(model, seed, t0, N, 'classical', act_classical)
        costs['zero'][i], _ = _rollout(model, seed, t0, N, 'zero', lambda t, y: np.zeros(model.du))
        u_tildes[seed] = np.array(used)

    result = ClosedLoopResult(seeds=list(seeds), costs=costs, u_tilde=u_tildes)
    m = result.mean
    logger.info(f"🏁 폐루프 평가 ({len(seeds)} seeds): 신경망 {m['neural']:.6f}, "
                f"고전 {m['classical']:.6f}, 무제어 {m['zero']:.6f} (차이 {result.relative_gap():+.2%})")
    return result
