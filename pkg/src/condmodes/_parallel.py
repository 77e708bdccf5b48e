from concurrent.futures import ProcessPoolExecutor


def parallel_map(fn, items, threads=1):
    """Ordered map, in worker processes when ``threads > 1``.

    Output order always follows ``items`` so merged results do not depend on
    scheduling.
    """
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
