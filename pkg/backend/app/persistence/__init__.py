"""
持久化: 批量刷盘的追加日志、崩溃恢复与账本文件
"""

from .batcher import AppendLog, BatcherConfig, FsyncPolicy, RecoveryResult, recover
from .ledger_store import LEDGER_FILE, LedgerStore

__all__ = [
    "LEDGER_FILE",
    "AppendLog",
    "BatcherConfig",
    "FsyncPolicy",
    "LedgerStore",
    "RecoveryResult",
    "recover",
]
