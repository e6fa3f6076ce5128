"""
File cache for expensive planning artifacts (visibility tables).
"""

import hashlib
import json
import logging
import pickle
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Callable, Optional, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")


class ArtifactCache:
    """Pickle-backed, content-addressed cache with optional expiry."""

    def __init__(
        self,
        cache_dir: Optional[Path] = None,
        default_ttl: Optional[int] = None,
    ):
        """
        Initialize cache.

        Args:
            cache_dir: Directory for cache files (defaults to ~/.rsuplan/cache)
            default_ttl: Time-to-live in seconds; None keeps entries until cleared
        """
        if cache_dir is None:
            cache_dir = Path.home() / ".rsuplan" / "cache"

        self.cache_dir = Path(cache_dir)
        self.default_ttl = default_ttl
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        logger.debug(f"Cache directory: {self.cache_dir}")

    def _get_cache_path(self, key: str) -> Path:
        digest = hashlib.sha256(key.encode()).hexdigest()
        return self.cache_dir / f"{digest}.cache"

    def get(self, key: str) -> Optional[Any]:
        """
        Get value from cache.

        Args:
            key: Cache key

        Returns:
            Cached value or None if not found/expired
        """
        cache_path = self._get_cache_path(key)

        if not cache_path.exists():
            logger.debug(f"Cache miss: {key[:64]}")
            return None

        try:
            with open(cache_path, "rb") as f:
                cache_data = pickle.load(f)

            expiry = cache_data.get("expiry")
            if expiry and datetime.now() > expiry:
                logger.debug(f"Cache expired: {key[:64]}")
                cache_path.unlink()
                return None

            logger.debug(f"Cache hit: {key[:64]}")
            return cache_data.get("value")

        except (pickle.PickleError, EOFError, OSError, AttributeError) as e:
            logger.warning(f"Error reading cache file {cache_path.name}: {e}")
            if cache_path.exists():
                cache_path.unlink()
            return None

    def set(self, key: str, value: Any, ttl: Optional[int] = None) -> None:
        """
        Set value in cache.

        Args:
            key: Cache key
            value: Picklable value
            ttl: Time-to-live in seconds (default_ttl when None)
        """
        if ttl is None:
            ttl = self.default_ttl

        cache_data = {
            "value": value,
            "expiry": datetime.now() + timedelta(seconds=ttl) if ttl is not None else None,
            "created_at": datetime.now(),
        }

        try:
            with open(self._get_cache_path(key), "wb") as f:
                pickle.dump(cache_data, f)
            logger.debug(f"Cached: {key[:64]} (TTL: {ttl if ttl is not None else 'none'})")
        except (pickle.PickleError, OSError) as e:
            logger.warning(f"Error writing cache for {key[:64]}: {e}")

    def get_or_compute(self, key: str, compute: Callable[[], T], ttl: Optional[int] = None) -> T:
        """
        Return the cached value or compute, store and return it.

        Args:
            key: Cache key
            compute: Producer called on a miss
            ttl: Time-to-live for a fresh entry

        Returns:
            Cached or freshly computed value
        """
        cached = self.get(key)
        if cached is not None:
            return cached
        value = compute()
        self.set(key, value, ttl=ttl)
        return value

    def delete(self, key: str) -> None:
        """Delete one entry."""
        cache_path = self._get_cache_path(key)
        if cache_path.exists():
            cache_path.unlink()
            logger.debug(f"Deleted cache: {key[:64]}")

    def clear(self) -> int:
        """
        Clear all cache files.

        Returns:
            Number of files deleted
        """
        deleted = 0
        for cache_file in self.cache_dir.glob("*.cache"):
            try:
                cache_file.unlink()
                deleted += 1
            except OSError as e:
                logger.warning(f"Error deleting cache file {cache_file}: {e}")

        logger.info(f"Cache cleared ({deleted} files)")
        return deleted

    def clear_expired(self) -> int:
        """
        Clear expired and unreadable cache files.

        Returns:
            Number of files deleted
        """
        deleted = 0
        for cache_file in self.cache_dir.glob("*.cache"):
            try:
                with open(cache_file, "rb") as f:
                    cache_data = pickle.load(f)

                expiry = cache_data.get("expiry")
                if expiry and datetime.now() > expiry:
                    cache_file.unlink()
                    deleted += 1

            except (pickle.PickleError, EOFError, OSError, AttributeError):
                cache_file.unlink()
                deleted += 1

        logger.info(f"Cleared {deleted} expired cache files")
        return deleted


def generate_cache_key(*args: Any, **kwargs: Any) -> str:
    """
    Stable cache key from arguments.

    Args:
        *args: Positional parts
        **kwargs: Named parts

    Returns:
        JSON string with sorted keys
    """
    key_data = {
        "args": [str(arg) for arg in args],
        "kwargs": {k: str(v) for k, v in sorted(kwargs.items())},
    }
    return json.dumps(key_data, sort_keys=True)
