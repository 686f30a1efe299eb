"""
状态数据库: 分段读写锁保护的版本化键值存储
"""

from .rwlock import ReadWriteLock
from .statedb import (
    CHECKPOINT_FILE,
    DEFAULT_STRIPES,
    LockStripes,
    SnapshotRead,
    StateDb,
    StateEntry,
)

__all__ = [
    "CHECKPOINT_FILE",
    "DEFAULT_STRIPES",
    "LockStripes",
    "ReadWriteLock",
    "SnapshotRead",
    "StateDb",
    "StateEntry",
]
