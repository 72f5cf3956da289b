# core/cache.py

"""
Caching utilities for expensive deterministic computations.
"""

import os
import json
import hashlib
import logging
from functools import wraps
from typing import Any, Callable, Dict, Optional

logger = logging.getLogger(__name__)

CACHE_DIR_ENV = "POSEMATCH_CACHE_DIR"


class ResultCache:
    """Keeps JSON-serializable results in memory and, when a directory is set, on disk."""

    def __init__(self, cache_dir: Optional[str] = None):
        self.cache_dir = cache_dir
        self._memory: Dict[str, Any] = {}

    def get_cache_key(self, kind: str, params: Dict) -> str:
        """Generate a unique cache key for a computation and its parameters."""
        hash_data = {'kind': kind, 'params': params}
        hash_str = hashlib.md5(json.dumps(hash_data, sort_keys=True, default=str).encode()).hexdigest()
        return f"{kind}_{hash_str}"

    def _path(self, key: str) -> Optional[str]:
        if not self.cache_dir:
            return None
        return os.path.join(self.cache_dir, f"{key}.json")

    def get(self, key: str) -> Optional[Any]:
        """Retrieve a cached result."""
        if key in self._memory:
            return self._memory[key]
        path = self._path(key)
        if path and os.path.exists(path):
            try:
                with open(path) as f:
                    data = json.load(f)
                self._memory[key] = data
                logger.info(f"Cache hit for {key}")
                return data
            except (OSError, ValueError) as e:
                logger.warning(f"Failed to load cache: {e}")
        return None

    def store(self, key: str, data: Any) -> None:
        """Store a result."""
        self._memory[key] = data
        path = self._path(key)
        if not path:
            return
        try:
            os.makedirs(self.cache_dir, exist_ok=True)
            with open(path, 'w') as f:
                json.dump(data, f, sort_keys=True)
            logger.info(f"Stored result in cache as {key}")
        except (OSError, TypeError) as e:
            logger.warning(f"Failed to store in cache: {e}")

    def clear(self) -> None:
        self._memory.clear()


_cache = ResultCache(os.environ.get(CACHE_DIR_ENV))


def get_cache() -> ResultCache:
    return _cache


def cached_result(kind: str):
    """
    Decorator for caching functions whose result is a JSON-serializable value
    fully determined by their keyword/positional arguments.

    Example usage:

    @cached_result("standardization")
    def standardization_pool_stats(n, seed):
        # Computation...
        return {'mean': [...], 'std': [...]}
    """
    def decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(*args, **kwargs):
            params = {**kwargs}
            if args:
                params['_args'] = list(args)

            key = _cache.get_cache_key(kind, params)

            cached = _cache.get(key)
            if cached is not None:
                return cached

            result = func(*args, **kwargs)
            _cache.store(key, result)
            return result
        return wrapper
    return decorator
