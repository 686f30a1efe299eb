"""
第三阶段: 关键路径之外的收尾工作

更新指标、唤醒等待某笔交易的客户端、推送给订阅者、维护 tx_id 辅助索引.
tx_id 索引默认在整个运行期间保留全部事件; 给出 index_capacity 时按提交顺序淘汰最旧的条目,
被淘汰的交易只能从账本查到.
订阅者各自有界; 跟不上的订阅者被标记为 lagging 并丢弃事件, 不会拖慢流水线.
"""

from __future__ import annotations

import logging
import queue
import threading
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from app.infrastructure.monitoring import PerformanceMonitor
    from app.validator.events import CommitEvent

logger = logging.getLogger(__name__)

_STOP = object()


class Subscription:
    def __init__(self, capacity: int = 1024) -> None:
        self._queue: queue.Queue[CommitEvent] = queue.Queue(maxsize=capacity)
        self.lagging = False
        self.dropped = 0
        self.closed = False

    def offer(self, event: CommitEvent) -> None:
        try:
            self._queue.put_nowait(event)
        except queue.Full:
            if not self.lagging:
                logger.warning("订阅者跟不上提交速度, 标记为 lagging (seq %d)", event.seq)
            self.lagging = True
            self.dropped += 1

    def get(self, timeout: float | None = None) -> CommitEvent | None:
        try:
            return self._queue.get(timeout=timeout)
        except queue.Empty:
            return None


class _Waiter:
    __slots__ = ("done", "event")

    def __init__(self) -> None:
        self.done = threading.Event()
        self.event: CommitEvent | None = None


class Housekeeper:
    def __init__(
        self,
        capacity: int = 1024,
        monitor: PerformanceMonitor | None = None,
        name: str = "peer",
        index_capacity: int = 0,
    ) -> None:
        if index_capacity < 0:
            raise ValueError("index_capacity must be >= 0")
        self.monitor = monitor
        self.name = name
        self.index_capacity = index_capacity
        self._queue: queue.Queue[CommitEvent | object] = queue.Queue(maxsize=capacity)
        self._lock = threading.Lock()
        self._index: dict[bytes, CommitEvent] = {}
        self._waiters: dict[bytes, list[_Waiter]] = {}
        self._subscribers: list[Subscription] = []
        self._gate = threading.Event()
        self._gate.set()
        self._thread: threading.Thread | None = None
        self.backpressure_events = 0
        self.processed = 0
        self.last_seq = 0
        self.evicted = 0

    # --- 第二阶段侧 ---

    def submit(self, event: CommitEvent) -> None:
        """队列满时记录一次背压并阻塞等待"""
        try:
            self._queue.put_nowait(event)
        except queue.Full:
            self.backpressure_events += 1
            if self.monitor is not None:
                self.monitor.increment("stage3.backpressure")
            self._queue.put(event)

    @property
    def queued(self) -> int:
        return self._queue.qsize()

    # --- 处理线程 ---

    def start(self) -> Housekeeper:
        self._thread = threading.Thread(target=self._run, name=f"{self.name}-stage3", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._gate.set()
        if self._thread is not None:
            self._queue.put(_STOP)
            self._thread.join(timeout=5)
            self._thread = None

    def pause(self) -> None:
        """暂停处理 (故障注入); 事件继续在队列中累积"""
        self._gate.clear()

    def resume(self) -> None:
        self._gate.set()

    def _run(self) -> None:
        while True:
            item = self._queue.get()
            if item is _STOP:
                return
            self._gate.wait()
            try:
                self.handle(item)  # type: ignore[arg-type]
            except Exception:
                logger.exception("第三阶段处理事件失败")

    def handle(self, event: CommitEvent) -> None:
        if self.monitor is not None:
            self.monitor.increment("commit.valid" if event.valid else "commit.invalid")
            self.monitor.record_timing("stage1", (event.verified_ns - event.received_ns) / 1e6)
            self.monitor.record_timing("stage2", (event.committed_ns - event.verified_ns) / 1e6)
            self.monitor.record_metric("commit.last_seq", event.seq)
        with self._lock:
            # 重复提交的 tx_id 保留第一次的结果
            first = self._index.setdefault(event.tx_id, event)
            if first is event and self.index_capacity and len(self._index) > self.index_capacity:
                # dict 保持插入顺序, 第一个键即最早提交的事件
                del self._index[next(iter(self._index))]
                self.evicted += 1
            waiters = self._waiters.pop(event.tx_id, []) if first is event else []
            subscribers = list(self._subscribers)
            self.processed += 1
            self.last_seq = event.seq
        for waiter in waiters:
            waiter.event = event
            waiter.done.set()
        for sub in subscribers:
            sub.offer(event)

    # --- 客户端侧 ---

    def lookup(self, tx_id: bytes) -> CommitEvent | None:
        with self._lock:
            return self._index.get(tx_id)

    def wait_for_tx(self, tx_id: bytes, timeout: float | None = None) -> CommitEvent | None:
        with self._lock:
            event = self._index.get(tx_id)
            if event is not None:
                return event
            waiter = _Waiter()
            self._waiters.setdefault(tx_id, []).append(waiter)
        if waiter.done.wait(timeout):
            return waiter.event
        with self._lock:
            pending = self._waiters.get(tx_id)
            if pending is not None and waiter in pending:
                pending.remove(waiter)
                if not pending:
                    del self._waiters[tx_id]
        return waiter.event

    def subscribe(self, capacity: int = 1024) -> Subscription:
        sub = Subscription(capacity)
        with self._lock:
            self._subscribers.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        sub.closed = True
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    def index_size(self) -> int:
        with self._lock:
            return len(self._index)
