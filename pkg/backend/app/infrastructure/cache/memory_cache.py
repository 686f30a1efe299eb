#!/usr/bin/env python3
"""
反序列化缓存
按负载哈希缓存已反序列化的交易, 避免同一负载在流水线中被重复解析
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from typing import TYPE_CHECKING, Any

from app.ledger.codec import deserialize_tx

if TYPE_CHECKING:
    from app.ledger.types import Transaction

logger = logging.getLogger(__name__)


class DeserCache:
    """有界 LRU 缓存: payload_hash -> Transaction

    只由单个接收线程访问, 因此不加锁. 条目插入后不可变.
    """

    def __init__(self, max_size: int = 10000, enabled: bool = True):
        """
        初始化反序列化缓存

        Args:
            max_size: 最大缓存条目数
            enabled: False 时每次都重新反序列化 (用于 A/B 对比)
        """
        if max_size <= 0:
            raise ValueError("max_size must be > 0")
        self.max_size = max_size
        self.enabled = enabled
        self._cache: OrderedDict[bytes, Transaction] = OrderedDict()

        # 统计信息
        self.stats = {
            "hits": 0,
            "misses": 0,
            "evictions": 0,
        }

    def get(self, payload_hash: bytes) -> Transaction | None:
        if not self.enabled:
            return None
        tx = self._cache.get(payload_hash)
        if tx is None:
            return None
        self._cache.move_to_end(payload_hash)
        return tx

    def put(self, payload_hash: bytes, tx: Transaction) -> None:
        if not self.enabled or payload_hash in self._cache:
            return
        while len(self._cache) >= self.max_size:
            self._cache.popitem(last=False)
            self.stats["evictions"] += 1
        self._cache[payload_hash] = tx

    def cached_deserialize(self, payload: bytes, payload_hash: bytes) -> Transaction:
        """命中则返回缓存值, 否则反序列化并插入

        反序列化失败时抛出 SerializationError, 不缓存失败结果.
        """
        tx = self.get(payload_hash)
        if tx is not None:
            self.stats["hits"] += 1
            return tx
        self.stats["misses"] += 1
        tx = deserialize_tx(payload)
        self.put(payload_hash, tx)
        return tx

    def __len__(self) -> int:
        return len(self._cache)

    def clear(self) -> None:
        self._cache.clear()

    def get_stats(self) -> dict[str, Any]:
        """获取缓存统计信息"""
        total = self.stats["hits"] + self.stats["misses"]
        hit_rate = self.stats["hits"] / total * 100 if total > 0 else 0
        return {
            "cache_stats": self.stats.copy(),
            "hit_rate": round(hit_rate, 2),
            "cache_size": len(self._cache),
            "max_size": self.max_size,
            "enabled": self.enabled,
        }
