"""Seeded, chunked random draws whose output does not depend on worker count.

Every chunk of ``CHUNK`` samples gets its own PCG64 stream derived from
``SeedSequence(seed, spawn_key=(*stream, chunk_index))``, where ``stream`` is
an integer or tuple of integers naming the draw (setting, qubit state, ...). Workers only decide
which chunks run concurrently; results are concatenated in chunk order.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import InvalidArgument

CHUNK = 1 << 16


def resolve_workers(workers):
    if workers is None or workers == 0:
        return os.cpu_count() or 1
    if workers < 0:
        raise InvalidArgument(f"workers must be >= 0, got {workers}")
    return int(workers)


def chunk_rng(seed, stream, index):
    stream = tuple(stream) if isinstance(stream, (tuple, list)) else (stream,)
    ss = np.random.SeedSequence(int(seed), spawn_key=(*(int(s) for s in stream), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def chunked(n, seed, stream, draw, workers=1):
    """Call ``draw(rng, m)`` for each chunk and concatenate the results.

    ``draw`` must return a tuple of arrays with leading dimension ``m``.
    """
    if int(n) != n or n < 1:
        raise InvalidArgument(f"number of samples must be a positive integer, got {n!r}")
    if int(seed) != seed or seed < 0 or seed >= 2**64:
        raise InvalidArgument(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    sizes = [CHUNK] * (int(n) // CHUNK)
    if n % CHUNK:
        sizes.append(int(n) % CHUNK)
    jobs = [(k, m) for k, m in enumerate(sizes)]

    def run(job):
        k, m = job
        return draw(chunk_rng(seed, stream, k), m)

    workers = resolve_workers(workers)
    if workers == 1 or len(jobs) == 1:
        parts = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, jobs))
    return tuple(np.concatenate(col) for col in zip(*parts))


def ordered_map(fn, items, workers=1):
    """``[fn(x) for x in items]``, optionally on a thread pool; order preserved."""
    items = list(items)
    workers = resolve_workers(workers)
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
