"""
Raft 风格的 CFT 排序节点

单 leader 复制日志: leader 把条目先批量落盘再复制给 follower, 多数派
(含自己) 持久化后推进提交下标. 新 leader 上任时追加一个空操作条目, 使前任
term 的条目能尽快提交. 订阅者只能看到已提交的条目.

线程: 一个计时线程 (选举超时), 每个 follower 一个复制线程;
order() 由任意数量的提交线程并发调用.
"""

from __future__ import annotations

import logging
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from concurrent.futures import TimeoutError as FuturesTimeout
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Protocol

from app.infrastructure.error_handling_service import (
    ErrorContext,
    FailStopGuard,
    NotFoundError,
    NotLeaderError,
    OrderingTimeoutError,
)
from app.ordering.log import LogEntry, OrdererLog, meta_store_for

if TYPE_CHECKING:
    from app.core.config import Settings
    from app.infrastructure.monitoring import PerformanceMonitor
    from app.ordering.types import OrderedEntry
    from app.persistence.batcher import BatcherConfig

logger = logging.getLogger(__name__)


class Role(str, Enum):
    FOLLOWER = "follower"
    CANDIDATE = "candidate"
    LEADER = "leader"


@dataclass(frozen=True)
class RaftConfig:
    election_timeout_min_ms: int = 150
    election_timeout_max_ms: int = 300
    heartbeat_interval_ms: int = 50
    order_timeout_s: float = 5.0
    replication_batch: int = 256

    @classmethod
    def from_settings(cls, settings: Settings) -> RaftConfig:
        return cls(
            election_timeout_min_ms=settings.ELECTION_TIMEOUT_MIN_MS,
            election_timeout_max_ms=settings.ELECTION_TIMEOUT_MAX_MS,
            heartbeat_interval_ms=settings.HEARTBEAT_INTERVAL_MS,
            order_timeout_s=settings.ORDER_TIMEOUT_S,
            replication_batch=settings.REPLICATION_BATCH,
        )


@dataclass(frozen=True)
class AppendRequest:
    term: int
    leader_id: str
    prev_index: int
    prev_term: int
    entries: tuple[LogEntry, ...]
    leader_commit: int


@dataclass(frozen=True)
class AppendResponse:
    term: int
    success: bool
    match_index: int


@dataclass(frozen=True)
class VoteRequest:
    term: int
    candidate_id: str
    last_index: int
    last_term: int


@dataclass(frozen=True)
class VoteResponse:
    term: int
    granted: bool


class RaftTransport(Protocol):
    """同步 RPC; 目标不可达时返回 None"""

    def append_entries(self, target: str, request: AppendRequest) -> AppendResponse | None: ...

    def request_vote(self, target: str, request: VoteRequest) -> VoteResponse | None: ...


class RaftNode:
    def __init__(
        self,
        node_id: str,
        peers: list[str],
        data_dir: str | Path,
        transport: RaftTransport,
        config: RaftConfig | None = None,
        batcher: BatcherConfig | None = None,
        monitor: PerformanceMonitor | None = None,
    ) -> None:
        from app.persistence.batcher import BatcherConfig

        self.node_id = node_id
        self.peers = [p for p in peers if p != node_id]
        self.transport = transport
        self.config = config or RaftConfig()
        self.monitor = monitor
        batcher = batcher or BatcherConfig()

        self.guard = FailStopGuard(component=node_id)
        self.log = OrdererLog(data_dir, config=batcher, monitor=monitor, guard=self.guard)
        self.meta = meta_store_for(data_dir, batcher)
        self.current_term, self.voted_for = self.meta.load()

        self.role = Role.FOLLOWER
        self.leader_id: str | None = None
        self.commit_index = 0
        self._next_index: dict[str, int] = {}
        self._match_index: dict[str, int] = {}

        self._lock = threading.RLock()
        self._cond = threading.Condition(self._lock)
        self._stop = threading.Event()
        self._wake = {p: threading.Event() for p in self.peers}
        self._threads: list[threading.Thread] = []
        self._vote_pool = ThreadPoolExecutor(
            max_workers=max(1, len(self.peers)), thread_name_prefix=f"{node_id}-vote"
        )
        self._rng = random.Random()
        self._election_deadline = 0.0
        self._reset_election_deadline()

    # --- 生命周期 ---

    @property
    def majority(self) -> int:
        return (len(self.peers) + 1) // 2 + 1

    def start(self) -> RaftNode:
        ticker = threading.Thread(target=self._tick_loop, name=f"{self.node_id}-tick", daemon=True)
        self._threads.append(ticker)
        for peer in self.peers:
            self._threads.append(
                threading.Thread(
                    target=self._replicate_loop,
                    args=(peer,),
                    name=f"{self.node_id}-repl-{peer}",
                    daemon=True,
                )
            )
        for t in self._threads:
            t.start()
        logger.info("排序节点 %s 启动, term=%d, 日志 %d 条", self.node_id, self.current_term, self.log.last_index)
        return self

    def stop(self) -> None:
        self._stop.set()
        for ev in self._wake.values():
            ev.set()
        with self._cond:
            self._cond.notify_all()
        for t in self._threads:
            t.join(timeout=5)
        self._vote_pool.shutdown(wait=False, cancel_futures=True)
        self.log.close()
        logger.info("排序节点 %s 已停止", self.node_id)

    @property
    def stopped(self) -> bool:
        return self._stop.is_set()

    @property
    def is_leader(self) -> bool:
        with self._lock:
            return self.role is Role.LEADER

    # --- 状态迁移 (调用方持有锁) ---

    def _reset_election_deadline(self) -> None:
        timeout_ms = self._rng.uniform(
            self.config.election_timeout_min_ms, self.config.election_timeout_max_ms
        )
        self._election_deadline = time.monotonic() + timeout_ms / 1000

    def _persist_meta(self) -> None:
        self.meta.save(self.current_term, self.voted_for)

    def _step_down(self, term: int) -> None:
        if term > self.current_term:
            self.current_term = term
            self.voted_for = None
            self._persist_meta()
        if self.role is not Role.FOLLOWER:
            logger.info("%s 退为 follower (term %d)", self.node_id, self.current_term)
        self.role = Role.FOLLOWER
        self._cond.notify_all()

    def _become_leader(self) -> None:
        self.role = Role.LEADER
        self.leader_id = self.node_id
        last = self.log.last_index
        self._next_index = {p: last + 1 for p in self.peers}
        self._match_index = {p: 0 for p in self.peers}
        self.log.append(LogEntry(self.current_term, b""))
        logger.info("%s 当选 leader, term=%d", self.node_id, self.current_term)
        if self.monitor is not None:
            self.monitor.increment("raft.elections_won")
        if not self.peers:
            self.log.flush()
            self._advance_commit()
        for ev in self._wake.values():
            ev.set()

    def _advance_commit(self) -> None:
        if self.role is not Role.LEADER:
            return
        matches = sorted(
            [self.log.durable_index(), *self._match_index.values()], reverse=True
        )
        candidate = matches[self.majority - 1]
        # 只按多数派提交本 term 的条目
        if candidate > self.commit_index and self.log.term_at(candidate) == self.current_term:
            self.commit_index = candidate
            self._cond.notify_all()

    # --- 选举 ---

    def _tick_loop(self) -> None:
        tick = min(self.config.heartbeat_interval_ms, 10) / 1000
        while not self._stop.wait(tick):
            with self._lock:
                due = self.role is not Role.LEADER and time.monotonic() >= self._election_deadline
            if due:
                try:
                    self._run_election()
                except Exception:
                    logger.exception("%s 选举失败", self.node_id)

    def _run_election(self) -> None:
        with self._lock:
            self.current_term += 1
            term = self.current_term
            self.voted_for = self.node_id
            self.role = Role.CANDIDATE
            self.leader_id = None
            self._persist_meta()
            self._reset_election_deadline()
            request = VoteRequest(term, self.node_id, self.log.last_index, self.log.last_term)
            votes = 1
            if votes >= self.majority:
                self._become_leader()
                return
        logger.debug("%s 发起选举 term=%d", self.node_id, term)

        futures = [
            self._vote_pool.submit(self.transport.request_vote, p, request) for p in self.peers
        ]
        try:
            for fut in as_completed(futures, timeout=self.config.election_timeout_min_ms / 1000):
                response = fut.result()
                if response is None:
                    continue
                with self._lock:
                    if response.term > self.current_term:
                        self._step_down(response.term)
                        return
                    if self.role is not Role.CANDIDATE or self.current_term != term:
                        return
                    if response.granted:
                        votes += 1
                        if votes >= self.majority:
                            self._become_leader()
                            return
        except FuturesTimeout:
            pass

    def handle_vote(self, request: VoteRequest) -> VoteResponse:
        with self._lock:
            if request.term > self.current_term:
                self._step_down(request.term)
            granted = False
            if request.term == self.current_term and self.voted_for in (None, request.candidate_id):
                up_to_date = (request.last_term, request.last_index) >= (
                    self.log.last_term,
                    self.log.last_index,
                )
                if up_to_date:
                    self.voted_for = request.candidate_id
                    self._persist_meta()
                    self._reset_election_deadline()
                    granted = True
            return VoteResponse(self.current_term, granted)

    # --- 复制 ---

    def _replicate_loop(self, peer: str) -> None:
        wake = self._wake[peer]
        heartbeat = self.config.heartbeat_interval_ms / 1000
        while not self._stop.is_set():
            wake.wait(heartbeat)
            wake.clear()
            if self._stop.is_set():
                return
            with self._lock:
                if self.role is not Role.LEADER:
                    continue
                term = self.current_term
                next_index = self._next_index[peer]
                prev_index = next_index - 1
                request = AppendRequest(
                    term=term,
                    leader_id=self.node_id,
                    prev_index=prev_index,
                    prev_term=self.log.term_at(prev_index),
                    entries=tuple(self.log.entries(next_index, self.config.replication_batch)),
                    leader_commit=self.commit_index,
                )
            try:
                # 先让本地落盘 (与其他复制线程共享一次刷盘)
                self.log.flush()
            except Exception:
                logger.exception("%s 刷盘失败", self.node_id)
                return
            with self._lock:
                self._advance_commit()

            response = self.transport.append_entries(peer, request)
            if response is None:
                continue
            with self._lock:
                if response.term > self.current_term:
                    self._step_down(response.term)
                    continue
                if self.role is not Role.LEADER or self.current_term != term:
                    continue
                if response.success:
                    match = max(self._match_index[peer], response.match_index)
                    self._match_index[peer] = match
                    self._next_index[peer] = match + 1
                    self._advance_commit()
                    if match < self.log.last_index:
                        wake.set()
                else:
                    self._next_index[peer] = max(1, min(next_index - 1, response.match_index + 1))
                    wake.set()

    def handle_append(self, request: AppendRequest) -> AppendResponse:
        with self._lock:
            if request.term < self.current_term:
                return AppendResponse(self.current_term, False, 0)
            if request.term > self.current_term or self.role is not Role.FOLLOWER:
                self._step_down(request.term)
            self.leader_id = request.leader_id
            self._reset_election_deadline()

            last = self.log.last_index
            if request.prev_index > last or self.log.term_at(request.prev_index) != request.prev_term:
                hint = min(last, request.prev_index - 1)
                return AppendResponse(self.current_term, False, max(hint, 0))

            index = request.prev_index
            for entry in request.entries:
                index += 1
                if index <= self.log.last_index:
                    if self.log.term_at(index) == entry.term:
                        continue
                    if index <= self.commit_index:
                        logger.critical("%s 拒绝截断已提交的条目 %d", self.node_id, index)
                        return AppendResponse(self.current_term, False, self.commit_index)
                    self.log.truncate_from(index)
                self.log.append(entry)
            match = request.prev_index + len(request.entries)
            if request.entries:
                self.log.flush()
            new_commit = min(request.leader_commit, match)
            if new_commit > self.commit_index:
                self.commit_index = new_commit
                self._cond.notify_all()
            return AppendResponse(self.current_term, True, match)

    # --- 排序接口 ---

    def order(self, payload: bytes) -> int:
        """复制并在多数派持久化后返回分配的序号"""
        if not payload:
            raise ValueError("payload must be non-empty")
        deadline = time.monotonic() + self.config.order_timeout_s
        with self._lock:
            if self.role is not Role.LEADER or self._stop.is_set():
                raise NotLeaderError(
                    f"{self.node_id} is not the leader", leader_hint=self.leader_id
                )
            term = self.current_term
            index = self.log.append(LogEntry(term, payload))
            seq = self.log.seq_upto(index)
        for ev in self._wake.values():
            ev.set()
        if not self.peers:
            self.log.flush()
            with self._lock:
                self._advance_commit()

        with self._cond:
            while self.commit_index < index:
                if self.role is not Role.LEADER or self.current_term != term or self._stop.is_set():
                    raise NotLeaderError(
                        f"{self.node_id} lost leadership before seq {seq} committed",
                        leader_hint=self.leader_id,
                    )
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise OrderingTimeoutError(
                        f"no quorum for seq {seq} within {self.config.order_timeout_s}s",
                        context=ErrorContext(operation="order", component=self.node_id, seq=seq),
                    )
                self._cond.wait(remaining)
            if self.log.term_at(index) != term:
                raise NotLeaderError(f"entry {index} was overwritten", leader_hint=self.leader_id)
        if self.monitor is not None:
            self.monitor.increment("raft.ordered")
        return seq

    @property
    def last_seq(self) -> int:
        with self._lock:
            return self.log.seq_upto(self.commit_index)

    def get(self, seq: int) -> OrderedEntry:
        if seq < 1 or seq > self.last_seq:
            raise NotFoundError(f"seq {seq} is not committed on {self.node_id}", seq=seq)
        return self.log.ordered_entry(seq)

    def get_last(self) -> tuple[int, OrderedEntry] | None:
        seq = self.last_seq
        if seq == 0:
            return None
        return seq, self.log.ordered_entry(seq)

    def wait_for(self, seq: int, timeout: float | None = None) -> bool:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while self.log.seq_upto(self.commit_index) < seq:
                if self._stop.is_set():
                    return False
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return False
                self._cond.wait(remaining if remaining is not None else 0.5)
            return True

    def status(self) -> dict[str, object]:
        with self._lock:
            return {
                "node_id": self.node_id,
                "role": self.role.value,
                "term": self.current_term,
                "leader": self.leader_id,
                "last_index": self.log.last_index,
                "commit_index": self.commit_index,
                "last_seq": self.log.seq_upto(self.commit_index),
            }
