#!/usr/bin/env python3
"""
单节点排序服务单元测试
"""

import threading

import pytest

from app.infrastructure.error_handling_service import NotFoundError, RetentionError
from app.ordering.solo import SoloOrderer


@pytest.fixture
def disk_orderer(tmp_path, fast_batcher):
    orderer = SoloOrderer(tmp_path, batcher=fast_batcher)
    yield orderer
    orderer.stop()


class TestSoloOrderer:
    """持久化 solo 排序测试"""

    def test_order_assigns_dense_seqs(self, disk_orderer):
        """测试序号从 1 开始连续分配"""
        assert [disk_orderer.order(p) for p in (b"a", b"b", b"c")] == [1, 2, 3]
        assert disk_orderer.last_seq == 3
        assert disk_orderer.get(2).payload == b"b"
        seq, entry = disk_orderer.get_last()
        assert seq == 3 and entry.payload == b"c"

    def test_empty_payload(self, disk_orderer):
        """测试空负载被拒绝"""
        with pytest.raises(ValueError):
            disk_orderer.order(b"")

    def test_get_unassigned(self, disk_orderer):
        """测试读取尚未分配的序号"""
        assert disk_orderer.get_last() is None
        with pytest.raises(NotFoundError):
            disk_orderer.get(1)

    def test_concurrent_order(self, disk_orderer):
        """测试并发提交得到互不相同的序号"""
        seqs = []
        lock = threading.Lock()

        def submit(i):
            seq = disk_orderer.order(f"p{i}".encode())
            with lock:
                seqs.append(seq)

        threads = [threading.Thread(target=submit, args=(i,)) for i in range(40)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(seqs) == list(range(1, 41))
        assert disk_orderer.last_seq == 40

    def test_wait_for(self, disk_orderer):
        """测试等待尚未提交的序号"""
        assert disk_orderer.wait_for(1, timeout=0.05) is False
        timer = threading.Timer(0.05, disk_orderer.order, args=(b"late",))
        timer.start()
        assert disk_orderer.wait_for(1, timeout=3) is True
        timer.join()

    def test_wait_for_returns_on_stop(self, tmp_path, fast_batcher):
        """测试停止后等待立即返回"""
        orderer = SoloOrderer(tmp_path, batcher=fast_batcher)
        orderer.stop()
        assert orderer.stopped
        assert orderer.wait_for(1, timeout=5) is False

    def test_restart_keeps_entries(self, tmp_path, fast_batcher):
        """测试重启后已排序条目仍可读取"""
        first = SoloOrderer(tmp_path, batcher=fast_batcher)
        first.order(b"a")
        first.order(b"b")
        first.stop()
        second = SoloOrderer(tmp_path, batcher=fast_batcher)
        try:
            assert second.last_seq == 2
            assert second.get(1).payload == b"a"
            assert second.order(b"c") == 3
        finally:
            second.stop()

    def test_status(self, disk_orderer):
        """测试状态信息"""
        assert disk_orderer.is_leader
        assert disk_orderer.status()["role"] == "solo"


class TestMemoryRetention:
    """内存模式保留窗口测试"""

    def test_invalid_retain(self):
        """测试保留条数必须为正"""
        with pytest.raises(ValueError):
            SoloOrderer(retain=0)

    def test_restart_from(self):
        """测试落后于保留窗口时返回 restart_from"""
        orderer = SoloOrderer(retain=3)
        for i in range(5):
            orderer.order(bytes([i + 1]))
        assert orderer.retention_floor == 3
        assert orderer.get(3).payload == b"\x03"
        with pytest.raises(RetentionError) as exc:
            orderer.get(1)
        assert exc.value.restart_from == 3

    def test_unbounded(self):
        """测试不限保留时全部可读"""
        orderer = SoloOrderer()
        for i in range(10):
            orderer.order(bytes([i + 1]))
        assert orderer.retention_floor == 1
        assert orderer.get(1).seq == 1
