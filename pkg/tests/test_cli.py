"""
커맨드 라인 테스트

하위 명령 파싱과 종료 코드 (0 성공, 1 설정 오류, 2 수치 실패, 3 수용 실패) 를 확인합니다.
"""

import sys
from pathlib import Path

import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.errors import NumericalError
from experiments.checks import CheckResult, InvariantSuite
from main import EXIT_ACCEPTANCE, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, build_parser, main


def test_parser_subcommands():
    """공통 플래그와 검사 전용 플래그"""
    parser = build_parser()
    args = parser.parse_args(['oracle-equiv', '--quick', '--seed', '3', '--out', 'x'])
    assert args.command == 'oracle-equiv' and args.quick and args.seed == 3 and args.out == 'x'
    args = parser.parse_args(['--log-level', 'DEBUG', 'fig2', '--svg', '--workers', '4'])
    assert args.log_level == 'DEBUG' and args.svg and args.workers == 4
    with pytest.raises(SystemExit):
        parser.parse_args(['fig2', '--only', 'x'])
    with pytest.raises(SystemExit):
        parser.parse_args([])


def test_invariants_subset_succeeds(tmp_path):
    """통과하는 검사는 종료 코드 0, 결과 파일 생성"""
    code = main(['invariants', '--only', 'fixed_points', '--quick', '--out', str(tmp_path)])
    assert code == EXIT_OK
    assert (tmp_path / 'invariants.csv').exists()
    assert (tmp_path / 'invariants_summary.json').exists()


def test_config_errors_exit_1(tmp_path):
    """없는 설정 파일, 검증 실패, 알 수 없는 검사 이름은 종료 코드 1"""
    assert main(['fig2', '--config', str(tmp_path / 'missing.ini'), '--out', str(tmp_path)]) == EXIT_VALIDATION
    bad = tmp_path / 'bad.ini'
    bad.write_text("[controller]\nhorizon = 0\n", encoding='utf-8')
    assert main(['control-demo', '--config', str(bad), '--out', str(tmp_path)]) == EXIT_VALIDATION
    assert main(['invariants', '--only', 'nope', '--out', str(tmp_path)]) == EXIT_VALIDATION


def test_failed_check_exits_3(tmp_path, monkeypatch):
    """수용 검사 실패는 종료 코드 3"""
    monkeypatch.setattr(InvariantSuite, 'check_fixed_points',
                        lambda self: CheckResult('fixed_points', False, 1.0, 0.0, 'forced'))
    assert main(['invariants', '--only', 'fixed_points', '--out', str(tmp_path)]) == EXIT_ACCEPTANCE


def test_numerical_failure_exits_2(tmp_path, monkeypatch):
    """수치 실패는 종료 코드 2"""
    def boom(self):
        raise NumericalError("forced")

    monkeypatch.setattr(InvariantSuite, 'check_fixed_points', boom)
    assert main(['invariants', '--only', 'fixed_points', '--out', str(tmp_path)]) == EXIT_NUMERICAL
