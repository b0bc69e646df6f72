"""Ordered, thread-capped map used by grid and probe loops"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor

from .errors import ValidationError

logger = logging.getLogger(__name__)

_thread_limit = None


def set_thread_limit(threads):
    """Cap worker threads for every parallel_map call (None restores the default)"""
    global _thread_limit
    if threads is not None and int(threads) < 1:
        raise ValidationError(f"threads must be at least 1, got {threads}")
    _thread_limit = None if threads is None else int(threads)
    logger.debug(f"Thread limit set to {_thread_limit}")


def get_thread_limit():
    """Get the effective worker count"""
    if _thread_limit is not None:
        return _thread_limit
    return min(8, os.cpu_count() or 1)


def parallel_map(func, items):
    """Apply func to every item and return results in input order.

    Reductions over the returned list are left to the caller so the result does
    not depend on the number of workers.
    """
    items = list(items)
    workers = min(get_thread_limit(), len(items))
    if workers <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
