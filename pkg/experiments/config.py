"""
실험 설정
Experiment Configuration

INI 파일의 [섹션]은 데이터클래스 하나, 키는 필드 하나에 대응합니다.
모든 필드에는 기본값이 있으며 기본값은 회전 모델 수치 예제를 재현합니다.
문법은 docs/CONFIG_FORMAT.md 참고.

사용법:
    from experiments.config import load_config

    config = load_config('configs/fig2.ini')
    ok, message = config.validate()
    print(config.to_ini())
"""

import configparser
import logging
import os
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, List, Optional, Tuple, Union, get_args, get_origin, get_type_hints

import numpy as np
from dotenv import load_dotenv

from core.adaptive_rate import F_PARAMETERS, Z_PARAMETERS, AdaptiveRateState
from core.errors import ConfigError, ParameterError
from core.lds import LdsModel, rotation

logger = logging.getLogger(__name__)

ENV_OUTPUT_DIR = 'NKL_OUTPUT_DIR'
ENV_LOG_LEVEL = 'NKL_LOG_LEVEL'


# ============================================================
# 값 문법
# ============================================================

def parse_matrix(text: str) -> np.ndarray:
    """'a b; c d' → 2차원 배열 (행은 ';', 원소는 공백 또는 ',')"""
    rows = [r for r in (row.strip() for row in text.split(';')) if r]
    if not rows:
        raise ConfigError(f"빈 행렬: '{text}'")
    try:
        data = [[float(v) for v in re.split(r'[,\s]+', row) if v] for row in rows]
    except ValueError as e:
        raise ConfigError(f"행렬 파싱 실패: '{text}' ({e})") from e
    if len({len(r) for r in data}) != 1:
        raise ConfigError(f"행 길이가 다릅니다: '{text}'")
    return np.array(data)


def format_matrix(M) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return '; '.join(' '.join(repr(float(v)) for v in row) for row in M)


def parse_seeds(text: str) -> List[int]:
    """'0 1 2' 또는 '0..9' (양끝 포함)"""
    text = text.strip()
    m = re.fullmatch(r'(\d+)\s*\.\.\s*(\d+)', text)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        if hi < lo:
            raise ConfigError(f"seed 범위가 비었습니다: '{text}'")
        return list(range(lo, hi + 1))
    try:
        return [int(v) for v in re.split(r'[,\s]+', text) if v]
    except ValueError as e:
        raise ConfigError(f"seed 파싱 실패: '{text}'") from e


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ('true', 'yes', 'on', '1'):
        return True
    if low in ('false', 'no', 'off', '0'):
        return False
    raise ConfigError(f"불리언 값이 아닙니다: '{text}'")


def _parse_value(tp: Any, text: str, name: str) -> Any:
    origin = get_origin(tp)
    if origin is Union:
        inner = [a for a in get_args(tp) if a is not type(None)][0]
        if text.strip().lower() in ('none', ''):
            return None
        return _parse_value(inner, text, name)
    try:
        if tp is bool:
            return _parse_bool(text)
        if tp is int:
            return int(text)
        if tp is float:
            return float(text)
        if tp is str:
            return text.strip()
        if origin in (tuple, Tuple):
            return tuple(float(v) for v in re.split(r'[,\s]+', text.strip()) if v)
        if origin in (list, List):
            return parse_seeds(text)
    except ValueError as e:
        raise ConfigError(f"{name}: 값 '{text}' 를 {tp} 로 읽을 수 없습니다") from e
    raise ConfigError(f"{name}: 지원하지 않는 타입 {tp}")


def _format_value(value: Any) -> str:
    if value is None:
        return 'none'
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ' '.join(repr(v) if isinstance(v, float) else str(v) for v in value)
    return str(value)


# ============================================================
# 섹션 데이터클래스
# ============================================================

@dataclass
class ModelSpec:
    """
    플랜트/센서/비용

    F, H, B, Q, R, g, r, x0_mean, P0 를 문자열 행렬로 주면 각도/스칼라 설정보다 우선합니다.
    noise_family 는 플랜트, 센서, 초기 상태 잡음과 제어기의 내부 생성 잡음에 함께 쓰입니다.
    """
    plant_deg: float = 15.0
    measurement_deg: float = 50.0
    q: float = 1e-5
    rho: float = 1e-4
    g_scale: float = 1.0
    r_scale: float = 1.0
    F: Optional[str] = None
    H: Optional[str] = None
    B: Optional[str] = None
    Q: Optional[str] = None
    R: Optional[str] = None
    g: Optional[str] = None
    r: Optional[str] = None
    x0_mean: Optional[str] = None
    P0: Optional[str] = None
    noise_family: str = 'gaussian'

    def build(self) -> LdsModel:
        """LdsModel 생성 (ParameterError는 ConfigError로 변환)"""
        def mat(text, default):
            return default if text is None else parse_matrix(text)

        F = mat(self.F, rotation(self.plant_deg))
        H = mat(self.H, rotation(self.measurement_deg))
        dx, dy = F.shape[0], H.shape[0]
        B = mat(self.B, np.eye(dx))
        du = B.shape[1]
        x0 = None if self.x0_mean is None else parse_matrix(self.x0_mean).ravel()
        try:
            return LdsModel(
                F=F, B=B, H=H,
                Q=mat(self.Q, self.q * np.eye(dx)),
                R=mat(self.R, self.rho * np.eye(dy)),
                g=mat(self.g, self.g_scale * np.eye(du)),
                r=mat(self.r, self.r_scale * np.eye(dx)),
                x0_mean=x0,
                P0=None if self.P0 is None else parse_matrix(self.P0),
                noise_family=self.noise_family,
            )
        except ParameterError as e:
            raise ConfigError(f"[model] 모델 구성 실패: {e}") from e


@dataclass
class RateSpec:
    """스텝당 학습률 (증분 학습이면 갱신당 γ/n_feat) 과 적응 학습률"""
    gamma_f: float = 5.0
    gamma_f_refine: Optional[float] = None
    gamma_r: float = 1.0
    gamma_z: float = 1.0
    adaptive: bool = False
    z_params: Tuple[float, ...] = Z_PARAMETERS
    f_params: Tuple[float, ...] = F_PARAMETERS
    rate_floor: float = 1e-6
    rate_cap: float = 0.1

    def adaptive_states(self) -> Tuple[Optional[AdaptiveRateState], Optional[AdaptiveRateState]]:
        """(Z, F) 적응 학습률 상태 (비활성이면 None)"""
        if not self.adaptive:
            return None, None
        return (AdaptiveRateState.create(self.z_params, self.rate_floor, self.rate_cap),
                AdaptiveRateState.create(self.f_params, self.rate_floor, self.rate_cap))


@dataclass
class EstimatorSpec:
    z_method: str = 'method1'
    sample_kind: str = 'c'
    z_init: str = 'gain'
    initial_gain: float = 0.5
    neumann_passes: int = 50
    neumann_tol: float = 1e-8
    incremental: bool = True
    f_init_scale: float = 0.1


@dataclass
class ControllerSpec:
    """제어 데모: 학습, 스윕, 폐루프 평가"""
    horizon: int = 5
    t0: int = 0
    n_w: int = 10_000
    gamma_t: float = 1.0
    t_method: str = 'method1'
    storage_policy: str = 'a'
    reuse_k: int = 1
    g_samples: int = 100_000
    r_samples: int = 100_000
    rollout_seeds: int = 500
    train_features: int = 100
    train_steps: int = 30
    learn_f: bool = True


@dataclass
class Fig2Spec:
    """이득/F̂ 학습 곡선 실행들"""
    classical_steps: int = 7
    run2_steps: int = 700
    run2_gamma_z: float = 0.01
    run3_features: int = 100
    run3_steps: int = 7
    run4_steps: int = 7
    fluctuation_features: Tuple[float, ...] = (100.0, 1000.0)
    span_steps: int = 50
    span_features: int = 100


@dataclass
class AppendixCSpec:
    """고정 혼합 행렬 기준선"""
    horizon: int = 60
    n_feat: int = 200
    offset_scale: float = 1e3
    blend: float = 0.5
    stable_scale: float = 0.9
    decay_step: int = 10


@dataclass
class RegimeSpec:
    """급격한 F 변화 감지와 재학습"""
    n_feat: int = 1
    pre_steps: int = 1500
    post_steps: int = 1500
    change_deg: float = 90.0
    initial_f_steps: int = 100
    gamma_f: float = 0.2
    gamma_f_refine: float = 0.005
    gamma_z: float = 0.005
    r_samples: int = 20_000
    p0_scale: float = 0.01
    window: int = 10
    factor: float = 3.0
    terminal_window: int = 300
    stationary_steps: int = 10_000


@dataclass
class RunSpec:
    seeds: List[int] = field(default_factory=lambda: list(range(10)))
    workers: int = 1
    quick: bool = False


@dataclass
class OutputSpec:
    out_dir: str = 'results'
    svg: bool = False


_SECTIONS = {
    'model': ModelSpec,
    'rates': RateSpec,
    'estimator': EstimatorSpec,
    'controller': ControllerSpec,
    'fig2': Fig2Spec,
    'appendix_c': AppendixCSpec,
    'regime': RegimeSpec,
    'run': RunSpec,
    'output': OutputSpec,
}


@dataclass
class ExperimentConfig:
    """
    실험 설정 전체

    Attributes:
        model / rates / estimator / controller / fig2 / appendix_c / regime / run / output
    """
    model: ModelSpec = field(default_factory=ModelSpec)
    rates: RateSpec = field(default_factory=RateSpec)
    estimator: EstimatorSpec = field(default_factory=EstimatorSpec)
    controller: ControllerSpec = field(default_factory=ControllerSpec)
    fig2: Fig2Spec = field(default_factory=Fig2Spec)
    appendix_c: AppendixCSpec = field(default_factory=AppendixCSpec)
    regime: RegimeSpec = field(default_factory=RegimeSpec)
    run: RunSpec = field(default_factory=RunSpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    def validate(self) -> Tuple[bool, str]:
        """
        설정 검증

        Returns:
            Tuple[bool, str]: (유효 여부, 오류 메시지 또는 'OK')
        """
        try:
            model = self.model.build()
        except ConfigError as e:
            return False, str(e)

        checks = [
            (self.estimator.z_method in ('method1', 'method2'), f"[estimator] z_method={self.estimator.z_method}"),
            (self.estimator.sample_kind in ('a', 'b', 'c'), f"[estimator] sample_kind={self.estimator.sample_kind}"),
            (self.estimator.z_init in ('sample', 'identity', 'gain'), f"[estimator] z_init={self.estimator.z_init}"),
            (0.0 < self.estimator.initial_gain <= 1.0, "[estimator] initial_gain 는 (0, 1]"),
            (self.estimator.neumann_passes >= 1, "[estimator] neumann_passes ≥ 1"),
            (self.rates.gamma_f > 0 and self.rates.gamma_z > 0, "[rates] γ_F, γ_Z > 0"),
            (0.0 < self.rates.gamma_r <= 1.0, "[rates] γ_R 는 (0, 1]"),
            (0.0 < self.rates.rate_floor <= self.rates.rate_cap, "[rates] 0 < rate_floor ≤ rate_cap"),
            (len(self.rates.z_params) == 4 and len(self.rates.f_params) == 4, "[rates] z_params/f_params 는 4개 값"),
            (self.controller.horizon > self.controller.t0 >= 0, "[controller] horizon > t0 ≥ 0"),
            (self.controller.n_w >= 1, "[controller] n_w ≥ 1"),
            (self.controller.t_method in ('method1', 'method2'), f"[controller] t_method={self.controller.t_method}"),
            (self.controller.storage_policy in ('a', 'b', 'c'), f"[controller] storage_policy={self.controller.storage_policy}"),
            (self.controller.reuse_k >= 1, "[controller] reuse_k ≥ 1"),
            (self.controller.t_method == 'method2' or self.controller.gamma_t <= 1.0, "[controller] Method 1 γ_T ≤ 1"),
            (self.controller.rollout_seeds >= 1 and self.controller.g_samples >= 1, "[controller] rollout_seeds, g_samples ≥ 1"),
            (self.fig2.run2_steps > 100 and 0 < self.fig2.run2_gamma_z < 1, "[fig2] run2_steps > 100, 0 < run2_gamma_z < 1"),
            (self.fig2.run3_features >= 2 and self.fig2.run3_steps >= 1, "[fig2] run3_features ≥ 2, run3_steps ≥ 1"),
            (all(n >= 2 and float(n).is_integer() for n in self.fig2.fluctuation_features), "[fig2] fluctuation_features 는 2 이상의 정수"),
            (self.appendix_c.horizon > self.appendix_c.decay_step >= 1, "[appendix_c] horizon > decay_step ≥ 1"),
            (self.appendix_c.n_feat >= 1, "[appendix_c] n_feat ≥ 1"),
            (self.regime.window >= 1 and self.regime.factor > 1.0, "[regime] window ≥ 1, factor > 1"),
            (self.regime.pre_steps > self.regime.initial_f_steps + 2 * self.regime.window,
             "[regime] pre_steps 가 InitialF 스텝과 감지 창 2개보다 길어야 합니다"),
            (self.regime.post_steps > self.regime.terminal_window, "[regime] post_steps > terminal_window"),
            (len(self.run.seeds) >= 1, "[run] seeds 가 비었습니다"),
            (all(s >= 0 for s in self.run.seeds), "[run] seed 는 음수일 수 없습니다"),
            (self.run.workers >= 1, "[run] workers ≥ 1"),
        ]
        for ok, message in checks:
            if not ok:
                return False, message
        if model.dy < 2:
            return False, "[model] (I−HK)₂₂, F̂₂₂ 기록을 위해 Dy ≥ 2 이어야 합니다"
        return True, 'OK'

    def to_ini(self) -> str:
        """설정 에코 (다시 읽으면 같은 설정)"""
        lines = []
        for section, cls in _SECTIONS.items():
            spec = getattr(self, section)
            lines.append(f"[{section}]")
            lines.extend(f"{f.name} = {_format_value(getattr(spec, f.name))}" for f in fields(cls))
            lines.append('')
        return '\n'.join(lines)

    def with_overrides(self, seed: Optional[int] = None, out_dir: Optional[str] = None,
                       svg: Optional[bool] = None, workers: Optional[int] = None,
                       quick: Optional[bool] = None) -> 'ExperimentConfig':
        """CLI 플래그 적용"""
        run, output = self.run, self.output
        if seed is not None:
            run = replace(run, seeds=[seed])
        if workers is not None:
            run = replace(run, workers=workers)
        if quick is not None:
            run = replace(run, quick=quick)
        if out_dir is not None:
            output = replace(output, out_dir=out_dir)
        if svg is not None:
            output = replace(output, svg=svg)
        return replace(self, run=run, output=output)


def config_from_text(text: str) -> ExperimentConfig:
    """
    INI 문자열에서 설정 생성

    Raises:
        ConfigError: 알 수 없는 섹션/키, 값 파싱 실패
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#',))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"설정 파싱 실패: {e}") from e

    sections = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"알 수 없는 섹션: [{section}]")
        cls = _SECTIONS[section]
        hints = get_type_hints(cls)
        known = {f.name for f in fields(cls)}
        values = {}
        for key, raw in parser[section].items():
            if key not in known:
                raise ConfigError(f"[{section}] 알 수 없는 키: {key}")
            values[key] = _parse_value(hints[key], raw, f"[{section}] {key}")
        sections[section] = cls(**values)
    return ExperimentConfig(**sections)


def load_config(path: Optional[Union[str, Path]] = None, env_path: Optional[Path] = None) -> ExperimentConfig:
    """
    설정 파일 로드 및 검증

    path가 None이면 기본 설정을 씁니다. .env의 NKL_OUTPUT_DIR 은
    파일에 [output] out_dir 가 없을 때 기본 출력 디렉토리가 됩니다.

    Raises:
        ConfigError: 파싱 또는 검증 실패
    """
    load_dotenv(env_path)
    if path is None:
        text = ''
    else:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"설정 파일이 없습니다: {path}")
        text = path.read_text(encoding='utf-8')
    config = config_from_text(text)

    env_out = os.getenv(ENV_OUTPUT_DIR)
    has_out = re.search(r'^\s*out_dir\s*=', text, re.MULTILINE) is not None
    if env_out and not has_out:
        config = config.with_overrides(out_dir=env_out)

    ok, message = config.validate()
    if not ok:
        raise ConfigError(f"설정 검증 실패: {message}")
    logger.info(f"⚙️ 설정 로드 완료: {path if path else '(기본값)'}")
    return config


def env_log_level(default: str = 'INFO') -> str:
    """.env / 환경 변수의 NKL_LOG_LEVEL"""
    load_dotenv()
    return os.getenv(ENV_LOG_LEVEL, default)
