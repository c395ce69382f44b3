import os
from concurrent.futures import ProcessPoolExecutor


def default_workers() -> int:
    env = os.environ.get("OSCHAM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"OSCHAM_THREADS must be an integer, got {env!r}") from None
    return 1


def pmap(func, items, workers: int | None = None):
    """Order-preserving map; fork-join over a process pool when workers > 1."""
    items = list(items)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(items) < 2:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(func, items, chunksize=max(1, len(items) // (4 * workers))))
