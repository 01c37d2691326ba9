#!/usr/bin/env python3
"""
Neural Kalman Lab
메인 진입점 - 실험 하위 명령

하위 명령:
- fig2          : 이득/F̂ 학습 곡선 (고전 기준, 단일 특징, 특징 앙상블, F̃ 학습)
- control-demo  : 신경망 칼만 제어 폐루프 비교
- appendix-c    : 고정 혼합 행렬 기준선
- regime-change : 레짐 변화 감지와 재학습
- invariants    : 몬테카를로 불변식/수용 검사
- oracle-equiv  : 측정 공간 재귀와 고전 재귀의 동치 검사

종료 코드: 0 성공, 1 설정/파라미터 오류, 2 수치 실패, 3 수용 검사 실패
"""

import sys
import argparse
import logging
from pathlib import Path
from typing import Callable, Dict, Optional

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_ACCEPTANCE = 3


def setup_logging(log_level: str = 'INFO', log_file: Optional[Path] = None):
    """
    로깅 설정

    Args:
        log_level: 로그 레벨 (DEBUG, INFO, WARNING, ERROR)
        log_file: 로그 파일 경로 (None이면 logs/neural_kalman.log)
    """
    log_dir = Path(__file__).parent / 'logs'
    log_dir.mkdir(exist_ok=True)

    if log_file is None:
        log_file = log_dir / 'neural_kalman.log'

    logger = logging.getLogger()
    logger.setLevel(getattr(logging, log_level.upper()))
    # 다시 호출되면 이전에 붙인 핸들러를 교체
    for handler in [h for h in logger.handlers if getattr(h, '_nkl', False)]:
        logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    file_handler = logging.FileHandler(log_file, encoding='utf-8')
    file_handler.setFormatter(formatter)
    file_handler._nkl = True
    logger.addHandler(file_handler)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)
    console_handler._nkl = True
    logger.addHandler(console_handler)

    logging.info("=" * 60)
    logging.info("Neural Kalman Lab")
    logging.info("=" * 60)


def _experiment(name: str) -> Callable:
    """하위 명령 → 실행 함수 (지연 import)"""
    if name == 'fig2':
        from experiments.fig2 import run_fig2
        return run_fig2
    if name == 'control-demo':
        from experiments.control_demo import run_control_demo
        return run_control_demo
    if name == 'appendix-c':
        from experiments.appendix_c import run_appendix_c_baseline
        return run_appendix_c_baseline
    if name == 'regime-change':
        from experiments.regime_change import run_regime_change
        return run_regime_change
    raise ValueError(f"알 수 없는 실험: {name}")


def run_command(args: argparse.Namespace) -> int:
    """
    하위 명령 실행

    Args:
        args: 커맨드 라인 인자

    Returns:
        int: 종료 코드
    """
    from core.errors import AcceptanceError, ConfigError, NumericalError, ParameterError
    from experiments.config import load_config
    from experiments.results import ResultWriter

    try:
        config = load_config(args.config).with_overrides(
            seed=args.seed, out_dir=args.out, svg=args.svg or None,
            workers=args.workers, quick=getattr(args, 'quick', None) or None,
        )
        ok, message = config.validate()
        if not ok:
            raise ConfigError(f"설정 검증 실패: {message}")

        logging.info(f"🚀 {args.command} 시작")
        logging.info(f"   - 설정: {args.config or '(기본값)'}")
        logging.info(f"   - seeds: {config.run.seeds}")
        logging.info(f"   - 출력: {config.output.out_dir}")

        if args.command in ('invariants', 'oracle-equiv'):
            from experiments.checks import SUITES
            only = args.only.split(',') if getattr(args, 'only', None) else None
            result = SUITES[args.command](config).run(only=only)
        else:
            result = _experiment(args.command)(config)

        paths = ResultWriter(Path(config.output.out_dir), svg=config.output.svg).write(result)
        logging.info(f"📁 결과: {', '.join(str(p) for p in paths.values())}")

        if not result.passed:
            failed = result.summary.get('failed') or [
                k for k, v in result.summary.get('checks', {}).items() if not v
            ]
            if args.command in ('invariants', 'oracle-equiv'):
                raise AcceptanceError(f"수용 검사 실패: {failed}")
            logging.warning(f"⚠️ 기준 미달 항목: {failed}")

        logging.info(f"✅ {args.command} 완료")
        return EXIT_OK

    except (ConfigError, ParameterError) as e:
        logging.error(f"❌ 설정/파라미터 오류: {e}")
        return EXIT_VALIDATION
    except NumericalError as e:
        logging.error(f"❌ 수치 실패: {e}", exc_info=True)
        return EXIT_NUMERICAL
    except AcceptanceError as e:
        logging.error(f"❌ {e}")
        return EXIT_ACCEPTANCE


def build_parser() -> argparse.ArgumentParser:
    """커맨드 라인 파서"""
    parser = argparse.ArgumentParser(
        description='Neural Kalman Lab - 신경망 칼만 추정/제어 실험',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
예제:
  # 이득 학습 곡선 (SVG 포함)
  python main.py fig2 --config configs/fig2.ini --svg

  # 제어 데모, seed 하나
  python main.py control-demo --seed 3 --out results/demo

  # 불변식 검사 일부만 축소 크기로
  python main.py invariants --only fixed_points,gradient --quick

  # 동치 검사
  python main.py oracle-equiv
        """
    )
    parser.add_argument('--log-level', default=None, choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='로그 레벨 (기본: NKL_LOG_LEVEL 또는 INFO)')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, default=None, help='설정 파일 (INI)')
    common.add_argument('--seed', type=int, default=None, help='단일 seed로 덮어쓰기')
    common.add_argument('--out', type=str, default=None, help='출력 디렉토리')
    common.add_argument('--svg', action='store_true', help='SVG 차트 저장')
    common.add_argument('--workers', type=int, default=None, help='seed 병렬 프로세스 수')

    sub = parser.add_subparsers(dest='command', required=True)
    helps: Dict[str, str] = {
        'fig2': '이득/F̂ 학습 곡선',
        'control-demo': '신경망 칼만 제어 폐루프 비교',
        'appendix-c': '고정 혼합 행렬 기준선',
        'regime-change': '레짐 변화 감지와 재학습',
        'invariants': '몬테카를로 불변식/수용 검사',
        'oracle-equiv': '측정 공간 재귀 ↔ 고전 재귀 동치',
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text)
        if name in ('invariants', 'oracle-equiv'):
            p.add_argument('--only', type=str, default=None, help='쉼표로 구분한 검사 이름')
            p.add_argument('--quick', action='store_true', help='축소 크기로 실행')
    return parser


def main(argv=None) -> int:
    """
    메인 함수
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    from experiments.config import env_log_level
    setup_logging(args.log_level or env_log_level())
    return run_command(args)


if __name__ == '__main__':
    sys.exit(main())
