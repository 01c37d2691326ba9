"""
실험 결과 저장
Run Results (CSV / JSON / SVG)

CSV가 기준 출력입니다. 실수는 17자리 유효숫자로 쓰고 round_trip 정밀도로 읽어
무손실 왕복을 보장합니다. SVG 차트는 matplotlib Agg 백엔드로 그립니다.

출력 파일 (out_dir 아래):
- <kind>.csv            레코드
- <kind>_summary.json   요약 통계
- <kind>_config.ini     설정 에코 (다시 실행하면 같은 결과)
- <kind>.svg            선 그래프 (--svg)
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'
FIG2_COLUMNS = ['method', 'seed', 't_plot', 'feature', 'IHK22', 'F22']


@dataclass
class RunResult:
    """
    실험 한 종류의 결과

    Attributes:
        kind: 'fig2', 'control_demo', 'appendix_c', 'regime_change', 'invariants', 'oracle_equiv'
        records: 레코드 DataFrame
        summary: 요약 통계 (JSON 직렬화 가능)
        config_echo: 설정 에코 (INI 텍스트)
        seeds: 사용한 seed 목록
        chart: SVG 차트 사양 {'x': 열, 'y': 열, 'group': 열, 'title': 제목}
    """
    kind: str
    records: pd.DataFrame
    summary: Dict[str, Any] = field(default_factory=dict)
    config_echo: str = ''
    seeds: List[int] = field(default_factory=list)
    chart: Optional[Dict[str, str]] = None

    @property
    def passed(self) -> bool:
        """요약의 'passed' 항목 (없으면 True)"""
        return bool(self.summary.get('passed', True))


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def write_csv(df: pd.DataFrame, path: Path) -> Path:
    """17자리 유효숫자 CSV"""
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding='utf-8')
    return path


def read_csv(path: Path) -> pd.DataFrame:
    """무손실 CSV 읽기"""
    return pd.read_csv(path, float_precision='round_trip', encoding='utf-8')


def write_svg(df: pd.DataFrame, path: Path, x: str, y: str, group: Optional[str] = None,
              title: str = '', reference: Optional[float] = None) -> Path:
    """
    선 그래프 SVG

    Args:
        df: 레코드
        x, y: 열 이름
        group: 선을 나누는 열 (예: method)
        reference: 수평 기준선 (예: 정상 상태 이득)
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(8, 5))
    groups = [(None, df)] if group is None else df.groupby(group, sort=False)
    for name, part in groups:
        part = part.dropna(subset=[y]).groupby(x, sort=True)[y].mean()
        ax.plot(part.index, part.values, label=None if name is None else str(name), linewidth=1.2)
    if reference is not None:
        ax.axhline(reference, color='gray', linestyle='--', linewidth=0.8)
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if group is not None:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format='svg')
    plt.close(fig)
    return path


class ResultWriter:
    """
    결과 저장기

    RunResult를 출력 디렉토리에 CSV, JSON, INI (그리고 선택적으로 SVG)로 저장합니다.
    """

    def __init__(self, output_dir: Path, svg: bool = False):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.svg = svg
        logger.info(f"Result Writer 초기화: {self.output_dir}")

    def write(self, result: RunResult) -> Dict[str, Path]:
        """
        결과 저장

        Returns:
            Dict[str, Path]: {'csv', 'summary', 'config', ('svg')} 경로
        """
        paths = {'csv': write_csv(result.records, self.output_dir / f"{result.kind}.csv")}
        logger.info(f"  💾 CSV 저장: {paths['csv'].name} ({len(result.records)}행)")

        summary = {'kind': result.kind, 'seeds': result.seeds, **result.summary}
        paths['summary'] = self.output_dir / f"{result.kind}_summary.json"
        with open(paths['summary'], 'w', encoding='utf-8') as f:
            json.dump(_jsonable(summary), f, indent=2, ensure_ascii=False)
        logger.info(f"  💾 JSON 저장: {paths['summary'].name}")

        if result.config_echo:
            paths['config'] = self.output_dir / f"{result.kind}_config.ini"
            paths['config'].write_text(result.config_echo, encoding='utf-8')

        if self.svg and result.chart is not None and not result.records.empty:
            chart = result.chart
            paths['svg'] = write_svg(
                result.records, self.output_dir / f"{result.kind}.svg",
                x=chart['x'], y=chart['y'], group=chart.get('group'), title=chart.get('title', result.kind),
                reference=chart.get('reference'),
            )
            logger.info(f"  📈 SVG 저장: {paths['svg'].name}")
        return paths


def concat_records(frames: Sequence[pd.DataFrame], columns: Optional[List[str]] = None) -> pd.DataFrame:
    """seed별 레코드 결합 (열 순서 고정)"""
    frames = [f for f in frames if f is not None and not f.empty]
    if not frames:
        return pd.DataFrame(columns=columns or [])
    df = pd.concat(frames, ignore_index=True)
    return df if columns is None else df[columns]
