"""
peer 本地账本文件 ledger.dat: 追加哈希链记录, 按序号读回
"""

from __future__ import annotations

import logging
import threading
from pathlib import Path
from typing import TYPE_CHECKING

from app.infrastructure.error_handling_service import (
    ChainIntegrityError,
    NotFoundError,
)
from app.ledger.chain import (
    GENESIS_HASH,
    RECORD_HEADER_SIZE,
    encode_record,
    first_broken_link,
    iter_frames,
    make_record,
)
from app.persistence.batcher import AppendLog, BatcherConfig, recover

if TYPE_CHECKING:
    from collections.abc import Iterator

    from app.infrastructure.error_handling_service import FailStopGuard
    from app.infrastructure.monitoring import PerformanceMonitor
    from app.ledger.types import LedgerRecord

logger = logging.getLogger(__name__)

LEDGER_FILE = "ledger.dat"


class LedgerStore:
    """账本写入者; 只允许提交线程调用 append"""

    def __init__(
        self,
        data_dir: str | Path,
        config: BatcherConfig | None = None,
        monitor: PerformanceMonitor | None = None,
        guard: FailStopGuard | None = None,
        auto_flush: bool = True,
    ) -> None:
        self.path = Path(data_dir) / LEDGER_FILE
        recovered = recover(self.path)
        broken = first_broken_link(recovered.records)
        if broken is not None:
            raise ChainIntegrityError(
                f"{self.path}: chain broken at record index {broken}", seq=broken + 1
            )

        self._index: list[tuple[int, int]] = []
        offset = 0
        for record in recovered.records:
            length = RECORD_HEADER_SIZE + len(record.tx_bytes)
            self._index.append((offset, length))
            offset += length
        self._prev_hash = (
            recovered.records[-1].chain_hash if recovered.records else GENESIS_HASH
        )
        self._recovered = recovered.records
        self._lock = threading.Lock()
        self.log = AppendLog(
            self.path, config=config, monitor=monitor, guard=guard, auto_flush=auto_flush
        )
        if recovered.records:
            logger.info("账本恢复完成: %s, 共 %d 条记录", self.path, len(recovered.records))

    @property
    def last_seq(self) -> int:
        with self._lock:
            return len(self._index)

    @property
    def head_hash(self) -> bytes:
        with self._lock:
            return self._prev_hash

    def recovered_records(self) -> list[LedgerRecord]:
        """启动时从磁盘恢复的记录 (用于状态重放)"""
        return list(self._recovered)

    def append(self, seq: int, valid: bool, tx_bytes: bytes) -> LedgerRecord:
        with self._lock:
            expected = len(self._index) + 1
            if seq != expected:
                raise ChainIntegrityError(
                    f"ledger append out of order: got seq {seq}, expected {expected}",
                    seq=seq,
                )
            record = make_record(self._prev_hash, seq, valid, tx_bytes)
            frame = encode_record(record)
            offset = self.log.buffered_append(frame)
            self._index.append((offset, len(frame)))
            self._prev_hash = record.chain_hash
            return record

    def read(self, seq: int) -> LedgerRecord:
        with self._lock:
            if not 1 <= seq <= len(self._index):
                raise NotFoundError(f"ledger has no record {seq}", seq=seq)
            offset, length = self._index[seq - 1]
        frame = next(iter_frames(self.log.read_at(offset, length)))
        return frame.record

    def iter_records(self, from_seq: int = 1) -> Iterator[LedgerRecord]:
        for seq in range(from_seq, self.last_seq + 1):
            yield self.read(seq)

    def flush(self) -> bool:
        return self.log.flush()

    def close(self) -> None:
        self.log.close()
