"""
seed 분산 실행
Seed Fan-out

seed마다 독립인 작업을 프로세스 풀에 나눠 실행합니다.
결과는 항상 seed 순서로 돌려주므로 작업자 수와 무관하게 출력 바이트가 같습니다.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Any, Callable, List, Sequence

logger = logging.getLogger(__name__)


def run_seeds(fn: Callable[..., Any], seeds: Sequence[int], workers: int = 1, **kwargs) -> List[Any]:
    """
    seed마다 fn(seed=seed, **kwargs) 실행

    Args:
        fn: 모듈 최상위 함수 (프로세스 풀에서 pickle 가능해야 함)
        seeds: seed 목록
        workers: 프로세스 수 (1이면 현재 프로세스에서 순차 실행)

    Returns:
        List: seeds와 같은 순서의 결과
    """
    seeds = list(seeds)
    task = partial(fn, **kwargs)
    if workers <= 1 or len(seeds) <= 1:
        return [task(seed=s) for s in seeds]

    logger.info(f"🚀 {len(seeds)}개 seed를 {workers}개 프로세스로 실행")
    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(task, seed=s) for s in seeds]
        return [f.result() for f in futures]
