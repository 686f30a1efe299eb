#!/usr/bin/env python3
"""
写入批处理器单元测试

覆盖按大小与超时触发的异步刷盘、读取未落盘尾部、截断、崩溃恢复与刷盘失败停机。
"""

import time

import pytest

from app.infrastructure.error_handling_service import (
    FailStopGuard,
    OutOfRangeError,
    PersistenceError,
)
from app.ledger.chain import GENESIS_HASH, encode_record, make_record
from app.persistence.batcher import AppendLog, BatcherConfig, FsyncPolicy, recover

NO_FSYNC = FsyncPolicy.NEVER


def wait_until(predicate, timeout=3.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(0.005)
    return predicate()


class TestBatcherConfig:
    """批处理配置测试"""

    @pytest.mark.parametrize("kwargs", [{"flush_bytes": 0}, {"flush_timeout_ms": 0}])
    def test_rejects_non_positive(self, kwargs):
        """测试阈值必须为正"""
        with pytest.raises(ValueError):
            BatcherConfig(**kwargs)

    def test_from_settings(self, make_settings):
        """测试从配置读取阈值与 fsync 策略"""
        config = BatcherConfig.from_settings(make_settings(FSYNC=True, FLUSH_BYTES=1024))
        assert config.flush_bytes == 1024
        assert config.fsync_policy is FsyncPolicy.PER_FLUSH


class TestAppendLog:
    """追加日志测试"""

    def test_manual_flush(self, tmp_path):
        """测试关闭自动刷盘时只有显式 flush 才落盘"""
        log = AppendLog(tmp_path / "a.log", BatcherConfig(fsync_policy=NO_FSYNC), auto_flush=False)
        try:
            assert log.buffered_append(b"hello") == 0
            assert log.buffered_append(b"world") == 5
            assert log.logical_length == 10
            assert log.durable_length == 0
            assert (tmp_path / "a.log").read_bytes() == b""
            assert log.flush() is True
            assert log.flush() is False
            assert log.durable_length == 10
            assert (tmp_path / "a.log").read_bytes() == b"helloworld"
            assert log.flush_count == 1
        finally:
            log.close()

    def test_size_threshold_flush(self, tmp_path):
        """测试缓冲达到 flush_bytes 后由后台线程刷盘"""
        config = BatcherConfig(flush_bytes=64, flush_timeout_ms=60_000, fsync_policy=NO_FSYNC)
        log = AppendLog(tmp_path / "a.log", config)
        try:
            log.buffered_append(b"x" * 100)
            assert wait_until(lambda: log.durable_length == 100)
        finally:
            log.close()

    def test_timeout_flush(self, tmp_path):
        """测试不足阈值的尾部在超时后刷盘"""
        config = BatcherConfig(flush_bytes=1 << 20, flush_timeout_ms=20, fsync_policy=NO_FSYNC)
        log = AppendLog(tmp_path / "a.log", config)
        try:
            log.buffered_append(b"tail")
            assert wait_until(lambda: log.durable_length == 4)
            assert log.flush_count >= 1
        finally:
            log.close()

    def test_read_flushes_overlapping_tail(self, tmp_path):
        """测试读取未落盘区域时先同步刷盘"""
        log = AppendLog(tmp_path / "a.log", BatcherConfig(fsync_policy=NO_FSYNC), auto_flush=False)
        try:
            log.buffered_append(b"abcdef")
            assert log.read_at(2, 3) == b"cde"
            assert log.durable_length == 6
        finally:
            log.close()

    def test_read_out_of_range(self, tmp_path):
        """测试读取超出逻辑长度"""
        log = AppendLog(tmp_path / "a.log", BatcherConfig(fsync_policy=NO_FSYNC), auto_flush=False)
        try:
            log.buffered_append(b"abc")
            with pytest.raises(OutOfRangeError):
                log.read_at(1, 3)
            with pytest.raises(OutOfRangeError):
                log.read_at(-1, 1)
        finally:
            log.close()

    def test_truncate(self, tmp_path):
        """测试截断后从截断点继续追加"""
        log = AppendLog(tmp_path / "a.log", BatcherConfig(fsync_policy=NO_FSYNC), auto_flush=False)
        try:
            log.buffered_append(b"abcdef")
            log.truncate(2)
            assert log.logical_length == 2
            assert log.buffered_append(b"XY") == 2
            assert log.read_at(0, 4) == b"abXY"
            with pytest.raises(OutOfRangeError):
                log.truncate(10)
        finally:
            log.close()

    def test_close_flushes(self, tmp_path):
        """测试关闭时刷出剩余缓冲"""
        log = AppendLog(tmp_path / "a.log", BatcherConfig(fsync_policy=NO_FSYNC))
        log.buffered_append(b"last words")
        log.close()
        assert (tmp_path / "a.log").read_bytes() == b"last words"
        with pytest.raises(PersistenceError):
            log.buffered_append(b"more")

    def test_reopen_appends_after_existing(self, tmp_path):
        """测试重新打开后从文件末尾继续"""
        path = tmp_path / "a.log"
        path.write_bytes(b"old")
        log = AppendLog(path, BatcherConfig(fsync_policy=NO_FSYNC), auto_flush=False)
        try:
            assert log.durable_length == 3
            assert log.buffered_append(b"new") == 3
        finally:
            log.close()
        assert path.read_bytes() == b"oldnew"

    def test_flush_failure_halts(self, tmp_path, mocker):
        """测试刷盘失败后组件停机, 之后的追加立即失败"""
        guard = FailStopGuard(component="test")
        log = AppendLog(
            tmp_path / "a.log", BatcherConfig(fsync_policy=NO_FSYNC), guard=guard, auto_flush=False
        )
        log.buffered_append(b"data")
        mocker.patch("app.persistence.batcher.os.pwrite", side_effect=OSError(28, "No space left"))
        with pytest.raises(PersistenceError):
            log.flush()
        assert guard.halted
        assert isinstance(guard.cause, PersistenceError)
        with pytest.raises(PersistenceError):
            log.buffered_append(b"more")
        mocker.stopall()
        log.close()

    def test_fsync_per_flush(self, tmp_path, mocker):
        """测试 per-flush 策略在每次刷盘后 fsync"""
        fsync = mocker.patch("app.persistence.batcher.os.fsync")
        log = AppendLog(tmp_path / "a.log", BatcherConfig(), auto_flush=False)
        log.buffered_append(b"x")
        log.flush()
        assert fsync.call_count == 1
        log.close()

    def test_stats(self, tmp_path):
        """测试统计信息"""
        log = AppendLog(tmp_path / "a.log", BatcherConfig(fsync_policy=NO_FSYNC), auto_flush=False)
        log.buffered_append(b"12345")
        log.flush()
        stats = log.stats()
        log.close()
        assert stats["flush_count"] == 1
        assert stats["flushed_bytes"] == 5
        assert stats["durable_length"] == stats["logical_length"] == 5


class TestRecover:
    """崩溃恢复测试"""

    def _frames(self, n):
        prev = GENESIS_HASH
        frames = []
        for seq in range(1, n + 1):
            record = make_record(prev, seq, True, f"tx{seq}".encode())
            frames.append(encode_record(record))
            prev = record.chain_hash
        return frames

    def test_missing_file(self, tmp_path):
        """测试文件不存在时恢复为空"""
        result = recover(tmp_path / "none")
        assert result.valid_length == 0 and result.records == []

    def test_truncates_torn_tail(self, tmp_path):
        """测试截掉残缺的最后一帧"""
        frames = self._frames(3)
        path = tmp_path / "ledger.dat"
        path.write_bytes(b"".join(frames) + frames[0][:10])
        result = recover(path)
        assert [r.seq for r in result.records] == [1, 2, 3]
        assert result.truncated_bytes == 10
        assert path.stat().st_size == result.valid_length

    def test_every_cut_point(self, tmp_path):
        """测试在任意字节处截断都恢复出完整帧前缀"""
        frames = self._frames(3)
        data = b"".join(frames)
        ends = [sum(len(f) for f in frames[: i + 1]) for i in range(3)]
        path = tmp_path / "ledger.dat"
        for cut in range(len(data) + 1):
            path.write_bytes(data[:cut])
            result = recover(path)
            expected = sum(1 for end in ends if end <= cut)
            assert len(result.records) == expected
            assert path.stat().st_size == (ends[expected - 1] if expected else 0)
