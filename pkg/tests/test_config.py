"""
실험 설정 테스트

INI 문법, 검증, 설정 에코 왕복, .env 기본값을 확인합니다.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.errors import ConfigError
from experiments.config import (
    ENV_OUTPUT_DIR, ExperimentConfig, config_from_text, load_config, parse_matrix, parse_seeds,
)


def test_parse_matrix():
    """'a b; c d' 문법, 쉼표 구분 허용"""
    np.testing.assert_array_equal(parse_matrix('1 0; 0 1'), np.eye(2))
    np.testing.assert_array_equal(parse_matrix('1, 2; 3, 4'), [[1.0, 2.0], [3.0, 4.0]])
    with pytest.raises(ConfigError):
        parse_matrix('1 2; 3')
    with pytest.raises(ConfigError):
        parse_matrix('1 x')
    with pytest.raises(ConfigError):
        parse_matrix(' ; ')


def test_parse_seeds():
    """목록과 양끝 포함 범위"""
    assert parse_seeds('0..3') == [0, 1, 2, 3]
    assert parse_seeds('1, 2 5') == [1, 2, 5]
    with pytest.raises(ConfigError):
        parse_seeds('3..1')
    with pytest.raises(ConfigError):
        parse_seeds('a b')


def test_defaults_reproduce_rotation_example():
    """기본 설정은 회전 모델"""
    config = ExperimentConfig()
    model = config.model.build()
    np.testing.assert_allclose(model.R, 1e-4 * np.eye(2))
    assert config.validate() == (True, 'OK')
    assert config.run.seeds == list(range(10))


def test_sections_and_keys():
    """섹션/키가 데이터클래스 필드로 들어감"""
    config = config_from_text(
        "[model]\nrho = 2e-4\nF = 0.9 0; 0 0.9\n"
        "[estimator]\nz_method = method2\n"
        "[run]\nseeds = 0..2\nquick = yes\n"
        "[rates]\ngamma_f_refine = none\nz_params = 0.5 30 0.05 0.1\n"
    )
    assert config.model.rho == pytest.approx(2e-4)
    np.testing.assert_allclose(config.model.build().F, 0.9 * np.eye(2))
    assert config.estimator.z_method == 'method2'
    assert config.run.seeds == [0, 1, 2] and config.run.quick is True
    assert config.rates.gamma_f_refine is None
    assert config.rates.z_params == (0.5, 30.0, 0.05, 0.1)


def test_unknown_section_or_key():
    """알 수 없는 섹션/키, 잘못된 값은 ConfigError"""
    with pytest.raises(ConfigError):
        config_from_text("[plant]\nq = 1\n")
    with pytest.raises(ConfigError):
        config_from_text("[run]\nfoo = 1\n")
    with pytest.raises(ConfigError):
        config_from_text("[run]\nworkers = many\n")
    with pytest.raises(ConfigError):
        config_from_text("[output]\nsvg = maybe\n")


def test_validation_messages():
    """검증 실패는 (False, 섹션 포함 메시지)"""
    ok, message = config_from_text("[controller]\nhorizon = 0\n").validate()
    assert not ok and '[controller]' in message
    ok, message = config_from_text("[model]\nQ = 1 0; 0 -1\n").validate()
    assert not ok and '[model]' in message
    ok, message = config_from_text("[fig2]\nrun2_gamma_z = 1.5\n").validate()
    assert not ok and '[fig2]' in message


def test_config_echo_round_trip():
    """to_ini() 를 다시 읽으면 같은 설정"""
    config = config_from_text("[model]\nplant_deg = 20\nP0 = 2 0; 0 2\n[run]\nseeds = 3 7\n")
    again = config_from_text(config.to_ini())
    assert again == config


def test_with_overrides():
    """CLI 플래그 덮어쓰기"""
    config = ExperimentConfig().with_overrides(seed=4, out_dir='out', svg=True, workers=2, quick=True)
    assert config.run.seeds == [4]
    assert config.output.out_dir == 'out' and config.output.svg
    assert config.run.workers == 2 and config.run.quick
    assert ExperimentConfig().with_overrides().run.seeds == list(range(10))


def test_load_config_file_and_env(tmp_path, monkeypatch):
    """파일 없음은 ConfigError, out_dir 가 없으면 NKL_OUTPUT_DIR 사용"""
    missing_env = tmp_path / 'missing.env'
    with pytest.raises(ConfigError):
        load_config(tmp_path / 'nope.ini', env_path=missing_env)

    monkeypatch.setenv(ENV_OUTPUT_DIR, str(tmp_path / 'from_env'))
    plain = tmp_path / 'plain.ini'
    plain.write_text("[run]\nseeds = 0\n", encoding='utf-8')
    assert load_config(plain, env_path=missing_env).output.out_dir == str(tmp_path / 'from_env')

    explicit = tmp_path / 'explicit.ini'
    explicit.write_text("[output]\nout_dir = mine\n", encoding='utf-8')
    assert load_config(explicit, env_path=missing_env).output.out_dir == 'mine'

    bad = tmp_path / 'bad.ini'
    bad.write_text("[controller]\nn_w = 0\n", encoding='utf-8')
    with pytest.raises(ConfigError):
        load_config(bad, env_path=missing_env)


def test_shipped_configs_load():
    """configs/ 의 설정 파일은 모두 검증 통과"""
    for path in sorted((project_root / 'configs').glob('*.ini')):
        config = load_config(path)
        assert config.validate()[0], path.name


def test_noise_family_setting():
    """[model] noise_family 는 모델로 전달, 알 수 없는 값은 검증 실패"""
    config = config_from_text("[model]\nnoise_family = laplace\n")
    assert config.model.build().noise_family == 'laplace'
    ok, message = config_from_text("[model]\nnoise_family = cauchy\n").validate()
    assert not ok and '[model]' in message
