"""
缓存基础设施包
"""

from .memory_cache import DeserCache

__all__ = [
    "DeserCache",
]
