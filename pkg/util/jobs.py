from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional

import psutil

from util.log import log


def default_jobs() -> int:
    return psutil.cpu_count(logical=True) or 1


def parallel_map(function: Callable, items: Iterable, jobs: Optional[int] = None, description: str = "batch") -> List:
    """
    Applies `function` to every item, in a process pool when `jobs` > 1.

    Results are returned in submission order, so batch artifacts do not depend on scheduling.
    `function` and the items must be picklable (module-level functions, dataclasses, arrays).
    """
    items = list(items)
    jobs = default_jobs() if jobs is None else max(1, int(jobs))

    results = []
    with log.progress(description, total=len(items)) as progress:
        if jobs == 1 or len(items) <= 1:
            for item in items:
                results.append(function(item))
                progress.advance()
            return results

        with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
            futures = [pool.submit(function, item) for item in items]
            for future in futures:
                results.append(future.result())
                progress.advance()
    return results
