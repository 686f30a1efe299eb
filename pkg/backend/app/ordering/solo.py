"""
单节点排序服务

作为节点侧排序接口背后的可替换后端: 可持久化到排序日志 (term 固定为 0),
也可纯内存运行并只保留最近 retain 条, 落后太多的订阅者会收到
RetentionError (restart_from).
"""

from __future__ import annotations

import logging
import threading
import time
from collections import deque
from pathlib import Path
from typing import TYPE_CHECKING

from app.infrastructure.error_handling_service import (
    FailStopGuard,
    NotFoundError,
    RetentionError,
)
from app.ordering.log import LogEntry, OrdererLog
from app.ordering.types import OrderedEntry

if TYPE_CHECKING:
    from app.infrastructure.monitoring import PerformanceMonitor
    from app.persistence.batcher import BatcherConfig

logger = logging.getLogger(__name__)


class SoloOrderer:
    def __init__(
        self,
        data_dir: str | Path | None = None,
        batcher: BatcherConfig | None = None,
        retain: int | None = None,
        monitor: PerformanceMonitor | None = None,
        node_id: str = "orderer0",
    ) -> None:
        if retain is not None and retain < 1:
            raise ValueError("retain must be >= 1")
        self.node_id = node_id
        self.monitor = monitor
        self.guard = FailStopGuard(component=node_id)
        self._cond = threading.Condition()
        self._stop = threading.Event()

        self._log: OrdererLog | None = None
        self._memory: deque[OrderedEntry] = deque(maxlen=retain)
        if data_dir is not None:
            self._log = OrdererLog(data_dir, config=batcher, monitor=monitor, guard=self.guard)
            self._committed = self._log.seq_upto(self._log.last_index)
        else:
            self._committed = 0
        logger.info("solo 排序节点 %s 就绪, 已有 %d 条", node_id, self._committed)

    @property
    def is_leader(self) -> bool:
        return True

    @property
    def stopped(self) -> bool:
        return self._stop.is_set()

    def order(self, payload: bytes) -> int:
        if not payload:
            raise ValueError("payload must be non-empty")
        self.guard.check()
        began = time.perf_counter()
        if self._log is not None:
            index = self._log.append(LogEntry(0, payload))
            # 并发提交者共享同一次刷盘
            self._log.flush()
            durable = self._log.seq_upto(self._log.durable_index())
            seq = self._log.seq_upto(index)
            with self._cond:
                if durable > self._committed:
                    self._committed = durable
                    self._cond.notify_all()
        else:
            with self._cond:
                seq = self._committed + 1
                self._memory.append(OrderedEntry.of(seq, payload))
                self._committed = seq
                self._cond.notify_all()
        if self.monitor is not None:
            self.monitor.record_timing("order", (time.perf_counter() - began) * 1000)
        return seq

    @property
    def last_seq(self) -> int:
        with self._cond:
            return self._committed

    @property
    def retention_floor(self) -> int:
        """内存模式下仍保留的最小序号"""
        if self._log is not None:
            return 1
        with self._cond:
            return self._memory[0].seq if self._memory else self._committed + 1

    def get(self, seq: int) -> OrderedEntry:
        last = self.last_seq
        if seq < 1 or seq > last:
            raise NotFoundError(f"seq {seq} not ordered yet (last {last})", seq=seq)
        if self._log is not None:
            return self._log.ordered_entry(seq)
        with self._cond:
            floor = self._memory[0].seq if self._memory else self._committed + 1
            if seq < floor:
                raise RetentionError(
                    f"seq {seq} fell out of the retention window", restart_from=floor
                )
            return self._memory[seq - floor]

    def get_last(self) -> tuple[int, OrderedEntry] | None:
        seq = self.last_seq
        if seq == 0:
            return None
        return seq, self.get(seq)

    def wait_for(self, seq: int, timeout: float | None = None) -> bool:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while self._committed < seq:
                if self._stop.is_set():
                    return False
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return False
                self._cond.wait(remaining if remaining is not None else 0.5)
            return True

    def status(self) -> dict[str, object]:
        return {"node_id": self.node_id, "role": "solo", "last_seq": self.last_seq}

    def start(self) -> SoloOrderer:
        return self

    def stop(self) -> None:
        self._stop.set()
        with self._cond:
            self._cond.notify_all()
        if self._log is not None:
            self._log.close()
