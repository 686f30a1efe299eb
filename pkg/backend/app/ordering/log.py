"""
排序节点的持久化复制日志

日志文件沿用账本记录帧: seq 字段存日志下标, 链哈希字段存负载的 SHA256,
交易字节为 [u64 term][负载]. 空负载是新 leader 上任时追加的空操作条目,
不分配排序序号.
"""

from __future__ import annotations

import bisect
import json
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

from app.infrastructure.error_handling_service import (
    ChainIntegrityError,
    NotFoundError,
    PersistenceError,
)
from app.ledger.chain import encode_record
from app.ledger.codec import U64
from app.ledger.types import LedgerRecord
from app.ordering.types import OrderedEntry, payload_hash_of
from app.persistence.batcher import AppendLog, BatcherConfig, FsyncPolicy, recover

if TYPE_CHECKING:
    from app.infrastructure.error_handling_service import FailStopGuard
    from app.infrastructure.monitoring import PerformanceMonitor

logger = logging.getLogger(__name__)

ORDERER_LOG_FILE = "orderer.log"
RAFT_META_FILE = "raft.meta"


@dataclass(frozen=True)
class LogEntry:
    term: int
    payload: bytes

    @property
    def is_noop(self) -> bool:
        return not self.payload


class OrdererLog:
    """日志下标从 1 开始; 只追加, 冲突时可截断未提交的尾部"""

    def __init__(
        self,
        data_dir: str | Path,
        config: BatcherConfig | None = None,
        monitor: PerformanceMonitor | None = None,
        guard: FailStopGuard | None = None,
    ) -> None:
        self.path = Path(data_dir) / ORDERER_LOG_FILE
        recovered = recover(self.path)

        self._entries: list[LogEntry] = []
        self._hashes: list[bytes] = []
        self._ends: list[int] = []
        self._payload_indexes: list[int] = []
        self._lock = threading.Lock()

        end = 0
        for i, record in enumerate(recovered.records, start=1):
            if record.seq != i or len(record.tx_bytes) < U64.size:
                raise ChainIntegrityError(f"{self.path}: malformed log entry {i}", seq=i)
            term = U64.unpack_from(record.tx_bytes)[0]
            payload = record.tx_bytes[U64.size :]
            if payload_hash_of(payload) != record.chain_hash:
                raise ChainIntegrityError(f"{self.path}: payload hash mismatch at {i}", seq=i)
            end += len(encode_record(record))
            self._push(LogEntry(term, payload), record.chain_hash, end)

        self.log = AppendLog(self.path, config=config, monitor=monitor, guard=guard)
        if self._entries:
            logger.info("排序日志恢复: %s, %d 条, 最后 term=%d", self.path, len(self._entries), self.last_term)

    def _push(self, entry: LogEntry, payload_hash: bytes, end: int) -> None:
        self._entries.append(entry)
        self._hashes.append(payload_hash)
        self._ends.append(end)
        if not entry.is_noop:
            self._payload_indexes.append(len(self._entries))

    @property
    def last_index(self) -> int:
        with self._lock:
            return len(self._entries)

    @property
    def last_term(self) -> int:
        with self._lock:
            return self._entries[-1].term if self._entries else 0

    def term_at(self, index: int) -> int:
        if index == 0:
            return 0
        with self._lock:
            return self._entries[index - 1].term

    def entry(self, index: int) -> LogEntry:
        with self._lock:
            return self._entries[index - 1]

    def entries(self, start: int, limit: int) -> list[LogEntry]:
        with self._lock:
            return self._entries[start - 1 : start - 1 + limit]

    def append(self, entry: LogEntry) -> int:
        payload_hash = payload_hash_of(entry.payload)
        tx_bytes = U64.pack(entry.term) + entry.payload
        with self._lock:
            index = len(self._entries) + 1
            frame = encode_record(LedgerRecord(index, True, payload_hash, tx_bytes))
            offset = self.log.buffered_append(frame)
            self._push(entry, payload_hash, offset + len(frame))
            return index

    def truncate_from(self, index: int) -> None:
        """删除 index 及之后的全部条目"""
        with self._lock:
            if index < 1 or index > len(self._entries):
                return
            start = self._ends[index - 2] if index > 1 else 0
            dropped = len(self._entries) - index + 1
            del self._entries[index - 1 :]
            del self._hashes[index - 1 :]
            del self._ends[index - 1 :]
            cut = bisect.bisect_left(self._payload_indexes, index)
            del self._payload_indexes[cut:]
            self.log.truncate(start)
        logger.warning("排序日志截断: 从下标 %d 起丢弃 %d 条", index, dropped)

    def durable_index(self) -> int:
        """已落盘的最大日志下标"""
        durable = self.log.durable_length
        with self._lock:
            return bisect.bisect_right(self._ends, durable)

    def flush(self) -> bool:
        return self.log.flush()

    # 排序序号 (非空操作条目的编号) 与日志下标的映射

    def seq_upto(self, index: int) -> int:
        with self._lock:
            return bisect.bisect_right(self._payload_indexes, index)

    def index_of_seq(self, seq: int) -> int:
        with self._lock:
            if not 1 <= seq <= len(self._payload_indexes):
                raise NotFoundError(f"no ordered entry {seq}", seq=seq)
            return self._payload_indexes[seq - 1]

    def ordered_entry(self, seq: int) -> OrderedEntry:
        index = self.index_of_seq(seq)
        with self._lock:
            return OrderedEntry(
                seq=seq,
                payload=self._entries[index - 1].payload,
                payload_hash=self._hashes[index - 1],
            )

    def close(self) -> None:
        self.log.close()


class RaftMetaStore:
    """持久化 current_term 与 voted_for (JSON, 临时文件 + rename)"""

    def __init__(self, data_dir: str | Path, fsync: bool = True) -> None:
        self.path = Path(data_dir) / RAFT_META_FILE
        self.fsync = fsync

    def load(self) -> tuple[int, str | None]:
        if not self.path.exists():
            return 0, None
        try:
            meta = json.loads(self.path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise PersistenceError(f"cannot read {self.path}: {e}") from e
        return int(meta["current_term"]), meta.get("voted_for")

    def save(self, current_term: int, voted_for: str | None) -> None:
        tmp = self.path.with_suffix(".tmp")
        data = json.dumps({"current_term": current_term, "voted_for": voted_for})
        try:
            with open(tmp, "w", encoding="utf-8") as f:
                f.write(data)
                f.flush()
                if self.fsync:
                    os.fsync(f.fileno())
            os.replace(tmp, self.path)
        except OSError as e:
            raise PersistenceError(f"cannot persist {self.path}: {e}", os_error=e) from e


def meta_store_for(data_dir: str | Path, config: BatcherConfig) -> RaftMetaStore:
    return RaftMetaStore(data_dir, fsync=config.fsync_policy is FsyncPolicy.PER_FLUSH)
