"""
验证节点的三阶段流水线

流式模式:
    接收线程 (反序列化缓存) -> 签名校验线程池 -> 重排缓冲 -> 单个提交线程 -> 收尾线程
基线模式:
    按区块处理, 只在区块内部并行校验签名, 逐笔提交, 每个区块刷盘一次后才发出事件.
"""

from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

from app.infrastructure.cache import DeserCache
from app.infrastructure.error_handling_service import (
    ChainIntegrityError,
    ErrorContext,
    LedgerError,
    SerializationError,
)
from app.ordering.deliver import deliver_blocks, deliver_stream
from app.validator.commit import check_signatures
from app.validator.events import NULL_TX_ID, CommitEvent, ValidationCode
from app.validator.housekeeping import Housekeeper
from app.validator.reorder import ReorderBuffer

if TYPE_CHECKING:
    from collections.abc import Iterable

    from app.core.config import Settings
    from app.core.security import Membership
    from app.endorser.policy import PolicyBook
    from app.infrastructure.monitoring import PerformanceMonitor
    from app.ledger.types import Transaction
    from app.ordering.types import Block, OrderedEntry, OrderingService
    from app.validator.commit import Committer

logger = logging.getLogger(__name__)


class PipelineMode(str, Enum):
    STREAM = "stream"
    BLOCK = "block"


@dataclass(frozen=True)
class PipelineConfig:
    sig_workers: int = 6
    queue_capacity: int = 256
    mode: PipelineMode = PipelineMode.STREAM
    block_size: int = 10
    block_timeout_ms: int = 1000
    housekeeping_capacity: int = 1024
    tx_index_capacity: int = 0
    cache_enabled: bool = True
    cache_max_size: int = 10000

    def __post_init__(self) -> None:
        if not 1 <= self.sig_workers <= 32:
            raise ValueError("sig_workers must be within 1..32")
        if self.queue_capacity < self.sig_workers:
            raise ValueError("queue_capacity must be >= sig_workers")
        if self.block_size < 1 or self.block_timeout_ms <= 0:
            raise ValueError("block_size and block_timeout_ms must be positive")

    @classmethod
    def from_settings(cls, settings: Settings) -> PipelineConfig:
        return cls(
            sig_workers=settings.SIG_WORKERS,
            queue_capacity=settings.QUEUE_CAPACITY,
            mode=PipelineMode(settings.MODE),
            block_size=settings.BLOCK_SIZE,
            block_timeout_ms=settings.BLOCK_TIMEOUT_MS,
            housekeeping_capacity=settings.HOUSEKEEPING_QUEUE_CAPACITY,
            tx_index_capacity=settings.TX_INDEX_CAPACITY,
            cache_enabled=settings.CACHE_ENABLED,
            cache_max_size=settings.CACHE_MAX_SIZE,
        )


@dataclass(frozen=True)
class _Verified:
    entry: OrderedEntry
    tx: Transaction | None
    sig_ok: bool
    received_ns: int
    verified_ns: int


class ValidatingPipeline:
    def __init__(
        self,
        committer: Committer,
        policies: PolicyBook,
        membership: Membership,
        config: PipelineConfig | None = None,
        monitor: PerformanceMonitor | None = None,
        name: str = "peer",
    ) -> None:
        self.committer = committer
        self.policies = policies
        self.membership = membership
        self.config = config or PipelineConfig()
        self.monitor = monitor
        self.name = name

        self.cache = DeserCache(
            max_size=self.config.cache_max_size, enabled=self.config.cache_enabled
        )
        self.housekeeper = Housekeeper(
            capacity=self.config.housekeeping_capacity,
            index_capacity=self.config.tx_index_capacity,
            monitor=monitor,
            name=name,
        )
        self.stop_event = threading.Event()
        self._executor = ThreadPoolExecutor(
            max_workers=self.config.sig_workers, thread_name_prefix=f"{name}-stage1"
        )
        self._reorder: ReorderBuffer[_Verified] = ReorderBuffer(
            self.config.queue_capacity, next_seq=committer.ledger.last_seq + 1
        )
        self._committed = committer.ledger.last_seq
        self._received = self._committed
        self._cond = threading.Condition()
        self._intake_done = threading.Event()
        self._threads: list[threading.Thread] = []
        self.block_count = 0
        committer.guard.on_halt(lambda _cause: self.stop_event.set())

    @property
    def mode(self) -> PipelineMode:
        return self.config.mode

    @property
    def next_seq(self) -> int:
        return self.committer.ledger.last_seq + 1

    @property
    def last_committed_seq(self) -> int:
        with self._cond:
            return self._committed

    @property
    def halted(self) -> bool:
        return self.committer.guard.halted

    # --- 生命周期 ---

    def source_for(self, service: OrderingService) -> Iterable[OrderedEntry] | Iterable[Block]:
        """从本地账本末尾之后开始订阅排序服务"""
        if self.mode is PipelineMode.BLOCK:
            return deliver_blocks(
                service,
                self.next_seq,
                self.config.block_size,
                self.config.block_timeout_ms / 1000,
                stop=self.stop_event,
            )
        return deliver_stream(service, self.next_seq, stop=self.stop_event)

    def start(self, source: Iterable[OrderedEntry] | Iterable[Block]) -> ValidatingPipeline:
        self.housekeeper.start()
        if self.mode is PipelineMode.BLOCK:
            intake = threading.Thread(
                target=self._block_intake, args=(source,), name=f"{self.name}-blocks", daemon=True
            )
            self._threads = [intake]
        else:
            intake = threading.Thread(
                target=self._stream_intake, args=(source,), name=f"{self.name}-intake", daemon=True
            )
            commit = threading.Thread(target=self._commit_loop, name=f"{self.name}-stage2", daemon=True)
            self._threads = [intake, commit]
        for t in self._threads:
            t.start()
        logger.info(
            "%s 流水线启动: mode=%s sig_workers=%d queue=%d, 从 seq %d 开始",
            self.name,
            self.mode.value,
            self.config.sig_workers,
            self.config.queue_capacity,
            self.next_seq,
        )
        return self

    def stop(self) -> None:
        self.stop_event.set()
        with self._cond:
            self._cond.notify_all()
        for t in self._threads:
            t.join(timeout=5)
        self._executor.shutdown(wait=True, cancel_futures=True)
        self.housekeeper.stop()
        logger.info("%s 流水线停止, 最后提交 seq %d", self.name, self.last_committed_seq)

    def wait_committed(self, seq: int, timeout: float | None = None) -> bool:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while self._committed < seq:
                if self.stop_event.is_set():
                    return False
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return False
                self._cond.wait(remaining if remaining is not None else 0.5)
            return True

    def drain(self, timeout: float | None = None) -> bool:
        """等到有限输入全部提交"""
        if not self._intake_done.wait(timeout):
            return False
        with self._cond:
            target = self._received
        return self.wait_committed(target, timeout)

    # --- 流式模式 ---

    def _deserialize(self, entry: OrderedEntry) -> Transaction | None:
        try:
            return self.cache.cached_deserialize(entry.payload, entry.payload_hash)
        except SerializationError as e:
            logger.warning("seq %d 无法反序列化: %s", entry.seq, e)
            return None

    def _check_contiguous(self, seq: int, expected: int) -> bool:
        """重复投递的旧条目跳过; 出现空洞则停机"""
        if seq < expected:
            return False
        if seq > expected:
            err = ChainIntegrityError(
                f"ordered stream skipped from {expected} to {seq}",
                seq=seq,
                context=ErrorContext(operation="intake", component=self.name),
            )
            self.committer.guard.halt(err)
            raise err
        return True

    def _stream_intake(self, source: Iterable[OrderedEntry]) -> None:
        expected = self._reorder.next_seq
        try:
            for entry in source:
                if self.stop_event.is_set():
                    break
                if not self._check_contiguous(entry.seq, expected):
                    continue
                received = time.time_ns()
                while not self._reorder.reserve(timeout=0.1):
                    if self.stop_event.is_set():
                        return
                tx = self._deserialize(entry)
                self._executor.submit(self._stage1, entry, tx, received)
                expected += 1
                with self._cond:
                    self._received = entry.seq
        except LedgerError as e:
            if not self.committer.guard.halted:
                logger.error("%s 接收中断: %s", self.name, e)
        except RuntimeError:
            # 线程池已关闭
            pass
        finally:
            self._intake_done.set()

    def _stage1(self, entry: OrderedEntry, tx: Transaction | None, received: int) -> None:
        try:
            sig_ok = check_signatures(tx, self.policies, self.membership)
        except Exception:
            logger.exception("seq %d 签名校验异常, 按无效处理", entry.seq)
            sig_ok = False
        self._reorder.put(entry.seq, _Verified(entry, tx, sig_ok, received, time.time_ns()))

    def _commit_loop(self) -> None:
        while not self.stop_event.is_set():
            item = self._reorder.take(timeout=0.1)
            if item is None:
                continue
            try:
                code, _ = self.committer.commit(item.entry.seq, item.entry.payload, item.tx, item.sig_ok)
            except LedgerError:
                logger.critical("%s 提交失败, 流水线停止", self.name)
                return
            event = CommitEvent(
                seq=item.entry.seq,
                tx_id=item.tx.tx_id if item.tx is not None else NULL_TX_ID,
                valid=code is ValidationCode.VALID,
                received_ns=item.received_ns,
                verified_ns=item.verified_ns,
                committed_ns=time.time_ns(),
                code=code,
            )
            self._publish([event])

    def _publish(self, events: list[CommitEvent]) -> None:
        with self._cond:
            self._committed = events[-1].seq
            self._cond.notify_all()
        for event in events:
            self.housekeeper.submit(event)

    # --- 基线模式 ---

    def _block_intake(self, source: Iterable[Block]) -> None:
        try:
            for block in source:
                if self.stop_event.is_set():
                    break
                self.run_block_mode(block)
        except LedgerError as e:
            if not self.committer.guard.halted:
                logger.error("%s 区块处理中断: %s", self.name, e)
        finally:
            self._intake_done.set()

    def run_block_mode(self, block: Block) -> list[CommitEvent]:
        """区块内并行校验签名, 逐笔提交, 刷盘一次后发出全部事件"""
        expected = self.next_seq
        entries = []
        for entry in block.entries:
            if self._check_contiguous(entry.seq, expected):
                entries.append(entry)
                expected += 1
        if not entries:
            return []
        with self._cond:
            self._received = entries[-1].seq
        received = time.time_ns()
        txs = [self._deserialize(e) for e in entries]
        sig_oks = list(
            self._executor.map(lambda tx: check_signatures(tx, self.policies, self.membership), txs)
        )
        verified = time.time_ns()

        codes = [
            self.committer.commit(entry.seq, entry.payload, tx, ok)[0]
            for entry, tx, ok in zip(entries, txs, sig_oks)
        ]
        self.committer.ledger.flush()
        committed = time.time_ns()
        self.block_count += 1

        events = [
            CommitEvent(
                seq=entry.seq,
                tx_id=tx.tx_id if tx is not None else NULL_TX_ID,
                valid=code is ValidationCode.VALID,
                received_ns=received,
                verified_ns=verified,
                committed_ns=committed,
                code=code,
            )
            for entry, tx, code in zip(entries, txs, codes)
        ]
        self._publish(events)
        logger.debug("区块 #%d 提交 %d 条", block.block_no, len(events))
        return events
