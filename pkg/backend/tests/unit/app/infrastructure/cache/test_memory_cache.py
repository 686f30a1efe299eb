#!/usr/bin/env python3
"""
反序列化缓存单元测试
"""

import pytest

from app.infrastructure.cache import DeserCache
from app.infrastructure.error_handling_service import SerializationError
from app.ledger.codec import serialize_tx
from app.ordering.types import payload_hash_of
from tests.fixtures.factories import MALFORMED_PAYLOAD, kv_key, make_tx


@pytest.fixture
def payloads(null_identities):
    return [serialize_tx(make_tx(null_identities, writes={kv_key(f"k{i}"): b"v"})) for i in range(3)]


class TestDeserCache:
    """反序列化缓存测试"""

    def test_invalid_size(self):
        """测试容量必须为正"""
        with pytest.raises(ValueError):
            DeserCache(max_size=0)

    def test_hit_returns_same_object(self, payloads):
        """测试同一负载第二次命中缓存"""
        cache = DeserCache()
        h = payload_hash_of(payloads[0])
        first = cache.cached_deserialize(payloads[0], h)
        second = cache.cached_deserialize(payloads[0], h)
        assert first is second
        assert cache.stats == {"hits": 1, "misses": 1, "evictions": 0}

    def test_lru_eviction(self, payloads):
        """测试超过容量时淘汰最久未用的条目"""
        cache = DeserCache(max_size=2)
        hashes = [payload_hash_of(p) for p in payloads]
        cache.cached_deserialize(payloads[0], hashes[0])
        cache.cached_deserialize(payloads[1], hashes[1])
        cache.get(hashes[0])
        cache.cached_deserialize(payloads[2], hashes[2])
        assert len(cache) == 2
        assert cache.get(hashes[1]) is None
        assert cache.get(hashes[0]) is not None
        assert cache.stats["evictions"] == 1

    def test_failures_not_cached(self):
        """测试反序列化失败不进入缓存"""
        cache = DeserCache()
        h = payload_hash_of(MALFORMED_PAYLOAD)
        for _ in range(2):
            with pytest.raises(SerializationError):
                cache.cached_deserialize(MALFORMED_PAYLOAD, h)
        assert len(cache) == 0
        assert cache.stats["misses"] == 2

    def test_disabled(self, payloads):
        """测试关闭后每次都重新反序列化"""
        cache = DeserCache(enabled=False)
        h = payload_hash_of(payloads[0])
        first = cache.cached_deserialize(payloads[0], h)
        second = cache.cached_deserialize(payloads[0], h)
        assert first == second
        assert first is not second
        assert len(cache) == 0

    def test_stats(self, payloads):
        """测试统计信息与清空"""
        cache = DeserCache(max_size=5)
        h = payload_hash_of(payloads[0])
        cache.cached_deserialize(payloads[0], h)
        cache.cached_deserialize(payloads[0], h)
        stats = cache.get_stats()
        assert stats["hit_rate"] == 50.0
        assert stats["cache_size"] == 1
        assert stats["max_size"] == 5
        cache.clear()
        assert len(cache) == 0
