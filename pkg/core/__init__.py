"""
Neural Kalman Core Module

Modules:
- lds: 선형 동적 시스템, 난수 스트림, 앙상블 시뮬레이션
- kalman_oracle: 고전 칼만 필터/제어기 (기준값)
- transformed_oracle: 측정 공간 재귀 (Z, T)
- lateral: Method 1 (Neumann) / Method 2 (직접 역행렬) 표현
- neural_estimator: 신경망 칼만 추정기와 시스템 식별
- neural_controller: 신경망 칼만 제어기
- adaptive_rate: 적응 학습률

Usage:
    from core.lds import LdsModel
    from core.transformed_oracle import derive_transformed

    model = LdsModel.rotation_example()
    tm = derive_transformed(model)
"""
