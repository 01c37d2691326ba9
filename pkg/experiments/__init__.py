"""
Experiment Harness

Modules:
- config: INI 설정 (ExperimentConfig) 과 .env 기본값
- results: RunResult, CSV/JSON/SVG 저장
- runner: seed 병렬 실행
- fig2: 이득/F̂ 학습 곡선
- control_demo: 제어 데모
- appendix_c: 고정 혼합 행렬 기준선
- regime_change: 레짐 변화 감지와 재학습
- checks: invariants / oracle-equiv 검사 모음
"""
