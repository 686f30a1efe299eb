"""
本地写入批处理器

追加写先进入内存缓冲, 累计到 flush_bytes 或距第一次未刷盘追加超过
flush_timeout 时由后台线程异步刷盘. 读取若触及未落盘的尾部, 先同步刷盘.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING

from app.infrastructure.error_handling_service import (
    ErrorContext,
    FailStopGuard,
    OutOfRangeError,
    PersistenceError,
)
from app.ledger.chain import iter_frames

if TYPE_CHECKING:
    from app.core.config import Settings
    from app.infrastructure.monitoring import PerformanceMonitor
    from app.ledger.types import LedgerRecord

logger = logging.getLogger(__name__)


class FsyncPolicy(str, Enum):
    PER_FLUSH = "per-flush"
    NEVER = "never"  # 仅用于测试与无盘基线


@dataclass(frozen=True)
class BatcherConfig:
    flush_bytes: int = 64 * 1024
    flush_timeout_ms: int = 100
    fsync_policy: FsyncPolicy = FsyncPolicy.PER_FLUSH

    def __post_init__(self) -> None:
        if self.flush_bytes <= 0:
            raise ValueError("flush_bytes must be > 0")
        if self.flush_timeout_ms <= 0:
            raise ValueError("flush_timeout_ms must be > 0")

    @classmethod
    def from_settings(cls, settings: Settings) -> BatcherConfig:
        return cls(
            flush_bytes=settings.FLUSH_BYTES,
            flush_timeout_ms=settings.FLUSH_TIMEOUT_MS,
            fsync_policy=FsyncPolicy.PER_FLUSH if settings.FSYNC else FsyncPolicy.NEVER,
        )


class AppendLog:
    """带异步批量刷盘的追加日志.

    不变式: durable_length <= logical_length; 文件内容始终是逻辑内容的前缀.
    """

    def __init__(
        self,
        path: str | Path,
        config: BatcherConfig | None = None,
        monitor: PerformanceMonitor | None = None,
        guard: FailStopGuard | None = None,
        auto_flush: bool = True,
    ) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.config = config or BatcherConfig()
        self.monitor = monitor
        self.guard = guard or FailStopGuard(component=f"log:{self.path.name}")

        self._fd = os.open(self.path, os.O_RDWR | os.O_CREAT, 0o644)
        size = os.fstat(self._fd).st_size
        self._durable = size
        self._logical = size
        self._buffer = bytearray()
        self._buffer_start = size
        self._deadline: float | None = None
        self._closed = False

        self._cond = threading.Condition()
        self._flush_lock = threading.Lock()

        self.flush_count = 0
        self.flushed_bytes = 0
        self.max_flush_ms = 0.0

        self._flusher: threading.Thread | None = None
        if auto_flush:
            self._flusher = threading.Thread(
                target=self._flush_loop, name=f"flusher-{self.path.name}", daemon=True
            )
            self._flusher.start()

    @property
    def durable_length(self) -> int:
        with self._cond:
            return self._durable

    @property
    def logical_length(self) -> int:
        with self._cond:
            return self._logical

    def buffered_append(self, record: bytes) -> int:
        """追加记录并返回其逻辑偏移; 记录立即可读, 持久化推迟到下次刷盘"""
        self.guard.check()
        with self._cond:
            if self._closed:
                raise PersistenceError(f"{self.path} is closed")
            offset = self._logical
            self._buffer += record
            self._logical += len(record)
            if self._deadline is None:
                # 超时在刷盘后的第一次追加时启动
                self._deadline = time.monotonic() + self.config.flush_timeout_ms / 1000
                self._cond.notify_all()
            elif len(self._buffer) >= self.config.flush_bytes:
                self._cond.notify_all()
        return offset

    def _flush_loop(self) -> None:
        while True:
            with self._cond:
                while not self._closed:
                    if self._buffer:
                        if len(self._buffer) >= self.config.flush_bytes:
                            break
                        remaining = (self._deadline or 0.0) - time.monotonic()
                        if remaining <= 0:
                            break
                        self._cond.wait(remaining)
                    else:
                        self._cond.wait()
                if self._closed:
                    return
            try:
                self.flush()
            except PersistenceError:
                return

    def flush(self) -> bool:
        """把缓冲尾部写入文件; 没有待写数据时返回 False"""
        with self._flush_lock:
            with self._cond:
                if not self._buffer:
                    return False
                data = bytes(self._buffer)
                start = self._buffer_start
                self._buffer.clear()
                self._buffer_start += len(data)
                self._deadline = None

            began = time.perf_counter()
            try:
                self._write_fully(data, start)
                if self.config.fsync_policy is FsyncPolicy.PER_FLUSH:
                    os.fsync(self._fd)
            except OSError as e:
                err = PersistenceError(
                    f"flush of {len(data)} bytes to {self.path} failed: {e}",
                    os_error=e,
                    context=ErrorContext(operation="flush", component=str(self.path)),
                )
                self.guard.halt(err)
                raise err from e
            elapsed_ms = (time.perf_counter() - began) * 1000

            with self._cond:
                self._durable = start + len(data)
                self.flush_count += 1
                self.flushed_bytes += len(data)
                self.max_flush_ms = max(self.max_flush_ms, elapsed_ms)
                self._cond.notify_all()

        if self.monitor is not None:
            self.monitor.increment(f"{self.path.name}.flush_count")
            self.monitor.increment(f"{self.path.name}.flush_bytes", len(data))
            self.monitor.record_timing(f"{self.path.name}.flush", elapsed_ms)
        logger.debug("flushed %d bytes to %s in %.2f ms", len(data), self.path, elapsed_ms)
        return True

    def _write_fully(self, data: bytes, offset: int) -> None:
        view = memoryview(data)
        while view:
            written = os.pwrite(self._fd, view, offset)
            view = view[written:]
            offset += written

    def read_at(self, offset: int, length: int) -> bytes:
        """读取 [offset, offset+length); 与未落盘尾部重叠时先同步刷盘"""
        with self._cond:
            logical = self._logical
            durable = self._durable
        if offset < 0 or length < 0 or offset + length > logical:
            raise OutOfRangeError(
                f"read [{offset}, {offset + length}) beyond logical length {logical}"
            )
        if offset + length > durable:
            self.flush()
        chunks = []
        pos = offset
        end = offset + length
        while pos < end:
            chunk = os.pread(self._fd, end - pos, pos)
            if not chunk:
                raise PersistenceError(f"short read from {self.path} at {pos}")
            chunks.append(chunk)
            pos += len(chunk)
        return b"".join(chunks)

    def truncate(self, length: int) -> None:
        """丢弃 length 之后的全部内容 (用于日志冲突回滚)"""
        self.flush()
        with self._flush_lock, self._cond:
            if length > self._logical:
                raise OutOfRangeError(f"truncate to {length} beyond {self._logical}")
            os.ftruncate(self._fd, length)
            if self.config.fsync_policy is FsyncPolicy.PER_FLUSH:
                os.fsync(self._fd)
            self._durable = self._logical = self._buffer_start = length

    def close(self) -> None:
        with self._cond:
            if self._closed:
                return
            self._closed = True
            self._cond.notify_all()
        if self._flusher is not None:
            self._flusher.join(timeout=5)
        try:
            if not self.guard.halted:
                self.flush()
        finally:
            os.close(self._fd)

    def stats(self) -> dict[str, float]:
        with self._cond:
            return {
                "flush_count": self.flush_count,
                "flushed_bytes": self.flushed_bytes,
                "max_flush_ms": self.max_flush_ms,
                "durable_length": self._durable,
                "logical_length": self._logical,
            }


@dataclass(frozen=True)
class RecoveryResult:
    valid_length: int
    records: list[LedgerRecord]
    truncated_bytes: int


def recover(path: str | Path) -> RecoveryResult:
    """读取记录帧文件, 返回最长的完整帧前缀并截掉残缺尾部"""
    path = Path(path)
    if not path.exists():
        return RecoveryResult(valid_length=0, records=[], truncated_bytes=0)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise PersistenceError(f"cannot read {path}: {e}", os_error=e) from e

    records = []
    valid_length = 0
    for frame in iter_frames(data):
        records.append(frame.record)
        valid_length = frame.offset + frame.length

    truncated = len(data) - valid_length
    if truncated:
        logger.warning("截断 %s 的残缺尾部: %d 字节", path, truncated)
        try:
            os.truncate(path, valid_length)
        except OSError as e:
            raise PersistenceError(f"cannot truncate {path}: {e}", os_error=e) from e
    return RecoveryResult(valid_length=valid_length, records=records, truncated_bytes=truncated)
