"""Deterministic chunked Monte Carlo over a thread pool."""

import logging
import os
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

import numpy as np

from ..const import MC_CHUNK_SIZE, THREADS_ENV
from .exceptions.im_exception import ConfigurationException

_LOGGER = logging.getLogger(__name__)

T = TypeVar("T")


def resolve_threads(threads: int | None = None) -> int:
    """Return the worker cap: explicit value, then IMKIT_THREADS, then 1."""
    if threads is None:
        env_value = os.environ.get(THREADS_ENV)
        if env_value:
            try:
                threads = int(env_value)
            except ValueError as ex:
                msg = f"{THREADS_ENV} must be an integer, got {env_value!r}"
                raise ConfigurationException(msg) from ex
        else:
            threads = 1
    if threads < 1:
        msg = f"Thread count must be positive, got {threads}"
        raise ConfigurationException(msg)
    return threads


def chunk_sizes(total: int, chunk: int = MC_CHUNK_SIZE) -> list[int]:
    """Split total draws into fixed-size chunks; independent of thread count."""
    full, rest = divmod(total, chunk)
    sizes = [chunk] * full
    if rest:
        sizes.append(rest)
    return sizes


def spawn_generators(seed, count: int) -> list[np.random.Generator]:
    """Independent generators from one seed via SeedSequence stream splitting."""
    sequence = (
        seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    )
    return [np.random.default_rng(child) for child in sequence.spawn(count)]


def run_chunked(
    task: Callable[[np.random.Generator, int], T],
    total: int,
    seed,
    threads: int | None = None,
    chunk: int = MC_CHUNK_SIZE,
) -> list[T]:
    """
    Run task(rng, size) on every chunk and return results in chunk order.

    Chunking and stream assignment depend only on (total, seed, chunk), so
    merged results are identical for any number of worker threads.
    """
    sizes = chunk_sizes(total, chunk)
    generators = spawn_generators(seed, len(sizes))
    workers = min(resolve_threads(threads), max(len(sizes), 1))
    _LOGGER.debug(
        "Running %d draws in %d chunks on %d thread(s)", total, len(sizes), workers
    )
    if workers == 1:
        return [task(rng, size) for rng, size in zip(generators, sizes, strict=True)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, generators, sizes))
