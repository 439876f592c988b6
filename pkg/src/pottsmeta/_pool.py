"""Process pool helper that returns results in task order."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def map_ordered(fn, tasks, workers: int = 1) -> list:
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))
