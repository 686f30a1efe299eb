"""
内存版本化键值存储 (账本的物化视图)

键按哈希分配到 stripe_count 个读写锁分段. 背书读取按分段顺序逐段加读锁;
唯一的提交线程只对被写入的分段按升序加写锁.
"""

from __future__ import annotations

import hashlib
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

from app.infrastructure.error_handling_service import PersistenceError
from app.ledger.codec import U32, U64, Reader
from app.ledger.types import ABSENT_VERSION, Key, Version
from app.persistence.batcher import AppendLog, BatcherConfig, FsyncPolicy
from app.state.rwlock import ReadWriteLock

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from app.infrastructure.monitoring import PerformanceMonitor

logger = logging.getLogger(__name__)

DEFAULT_STRIPES = 64
CHECKPOINT_FILE = "state.ckpt"


@dataclass(frozen=True)
class StateEntry:
    value: bytes
    version: Version


@dataclass(frozen=True)
class SnapshotRead:
    key: Key
    version: Version
    value: bytes | None


class LockStripes:
    """固定数量的读写锁分段; stripe_for 在进程生命周期内稳定"""

    def __init__(self, stripe_count: int = DEFAULT_STRIPES) -> None:
        if stripe_count <= 0 or stripe_count & (stripe_count - 1):
            raise ValueError("stripe_count must be a positive power of two")
        self.stripe_count = stripe_count
        self.stripes = [ReadWriteLock() for _ in range(stripe_count)]
        self._mask = stripe_count - 1

    def stripe_for(self, key: Key) -> int:
        digest = hashlib.blake2b(key.encode(), digest_size=8).digest()
        return int.from_bytes(digest, "little") & self._mask

    def group(self, keys: Iterable[Key]) -> dict[int, list[Key]]:
        """按分段号升序分组"""
        groups: dict[int, list[Key]] = {}
        for key in keys:
            groups.setdefault(self.stripe_for(key), []).append(key)
        return dict(sorted(groups.items()))


class StateDb:
    def __init__(
        self,
        stripe_count: int = DEFAULT_STRIPES,
        monitor: PerformanceMonitor | None = None,
    ) -> None:
        self.locks = LockStripes(stripe_count)
        self._maps: list[dict[Key, StateEntry]] = [{} for _ in range(stripe_count)]
        # 提交与检查点互斥, 保证检查点是某个提交边界上的一致切面
        self._commit_guard = threading.Lock()
        self._last_applied = 0
        self.monitor = monitor

    @property
    def stripe_count(self) -> int:
        return self.locks.stripe_count

    @property
    def last_applied_seq(self) -> int:
        return self._last_applied

    def stripe_for(self, key: Key) -> int:
        return self.locks.stripe_for(key)

    def get(self, key: Key) -> StateEntry | None:
        idx = self.locks.stripe_for(key)
        with self.locks.stripes[idx].read():
            return self._maps[idx].get(key)

    def version_of(self, key: Key) -> Version:
        entry = self.get(key)
        return entry.version if entry is not None else ABSENT_VERSION

    def mvcc_check(self, reads: Iterable[tuple[Key, Version]]) -> bool:
        return all(self.version_of(key) == version for key, version in reads)

    def apply_writes(
        self, writes: Sequence[tuple[Key, bytes | None]], commit_seq: int
    ) -> None:
        """以 commit_seq 为版本应用写集合; value 为 None 表示删除.

        只允许唯一的提交线程调用. 涉及的分段按升序加写锁, 同一分段内的写入
        对读者原子可见.
        """
        with self._commit_guard:
            assert commit_seq > self._last_applied, (
                f"commit_seq {commit_seq} not after last applied {self._last_applied}"
            )
            by_stripe: dict[int, list[tuple[Key, bytes | None]]] = {}
            for key, value in writes:
                by_stripe.setdefault(self.locks.stripe_for(key), []).append((key, value))
            for idx in sorted(by_stripe):
                stripe = self._maps[idx]
                with self.locks.stripes[idx].write():
                    for key, value in by_stripe[idx]:
                        current = stripe.get(key)
                        assert current is None or current.version < commit_seq, (
                            f"version regression on {key}"
                        )
                        if value is None:
                            stripe.pop(key, None)
                        else:
                            stripe[key] = StateEntry(value=value, version=commit_seq)
            self._last_applied = commit_seq

    def mark_applied(self, commit_seq: int) -> None:
        """无写入 (或无效) 的交易也推进 last_applied"""
        self.apply_writes((), commit_seq)

    def snapshot_read(self, keys: Iterable[Key]) -> list[SnapshotRead]:
        """按分段升序逐段加读锁读取; 每个分段内的结果对应某个提交边界"""
        wanted = list(dict.fromkeys(keys))
        found: dict[Key, SnapshotRead] = {}
        for idx, group in self.locks.group(wanted).items():
            stripe = self._maps[idx]
            with self.locks.stripes[idx].read():
                for key in group:
                    entry = stripe.get(key)
                    found[key] = (
                        SnapshotRead(key, entry.version, entry.value)
                        if entry is not None
                        else SnapshotRead(key, ABSENT_VERSION, None)
                    )
        return [found[key] for key in wanted]

    def items(self) -> tuple[int, list[tuple[Key, StateEntry]]]:
        """在提交边界上复制全部条目, 按键排序"""
        with self._commit_guard:
            seq = self._last_applied
            entries: list[tuple[Key, StateEntry]] = []
            for idx, stripe in enumerate(self._maps):
                with self.locks.stripes[idx].read():
                    entries.extend(stripe.items())
        entries.sort(key=lambda kv: kv[0])
        return seq, entries

    def __len__(self) -> int:
        return sum(len(m) for m in self._maps)

    def state_digest(self) -> str:
        """全部状态的 SHA256 摘要, 用于比较两个执行结果"""
        _, entries = self.items()
        h = hashlib.sha256()
        for key, entry in entries:
            encoded = key.encode()
            h.update(U32.pack(len(encoded)) + encoded)
            h.update(U64.pack(entry.version))
            h.update(U32.pack(len(entry.value)) + entry.value)
        return h.hexdigest()

    def write_checkpoint(self, directory: str | Path, fsync: bool = True) -> int:
        """写检查点 (临时文件 + rename), 返回检查点对应的 last_applied_seq"""
        directory = Path(directory)
        seq, entries = self.items()
        target = directory / CHECKPOINT_FILE
        tmp = directory / f"{CHECKPOINT_FILE}.tmp"
        tmp.unlink(missing_ok=True)

        log = AppendLog(
            tmp,
            BatcherConfig(
                fsync_policy=FsyncPolicy.PER_FLUSH if fsync else FsyncPolicy.NEVER
            ),
            auto_flush=False,
        )
        try:
            log.buffered_append(U64.pack(seq))
            for key, entry in entries:
                encoded = key.encode()
                log.buffered_append(
                    U32.pack(len(encoded))
                    + encoded
                    + U64.pack(entry.version)
                    + U32.pack(len(entry.value))
                    + entry.value
                )
        finally:
            log.close()
        os.replace(tmp, target)
        logger.info("检查点写入完成: seq=%d, %d 个键 -> %s", seq, len(entries), target)
        if self.monitor is not None:
            self.monitor.record_metric("state.checkpoint_seq", seq)
        return seq

    def load_checkpoint(self, directory: str | Path) -> int:
        """从检查点恢复 (只能在空库上调用), 返回其 last_applied_seq; 无检查点返回 0"""
        path = Path(directory) / CHECKPOINT_FILE
        if not path.exists():
            return 0
        if len(self) or self._last_applied:
            raise PersistenceError("checkpoint can only be loaded into an empty store")
        try:
            data = path.read_bytes()
        except OSError as e:
            raise PersistenceError(f"cannot read checkpoint {path}: {e}", os_error=e) from e

        r = Reader(data)
        seq = r.u64()
        with self._commit_guard:
            while r.remaining():
                key = Key.decode(r.raw(r.u32()))
                version = r.u64()
                value = r.raw(r.u32())
                idx = self.locks.stripe_for(key)
                self._maps[idx][key] = StateEntry(value=value, version=version)
            self._last_applied = seq
        logger.info("从检查点恢复状态: seq=%d, %d 个键", seq, len(self))
        return seq
