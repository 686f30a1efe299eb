"""
进程内 Raft 排序集群: 单机运行和故障注入测试用
"""

from __future__ import annotations

import logging
import threading
import time
from pathlib import Path
from typing import TYPE_CHECKING

from app.infrastructure.error_handling_service import (
    ErrorContext,
    NotLeaderError,
    OrderingTimeoutError,
)
from app.ordering.raft import RaftConfig, RaftNode, Role
from app.ordering.transport import LocalTransport

if TYPE_CHECKING:
    from app.infrastructure.monitoring import PerformanceMonitor
    from app.ordering.types import OrderedEntry
    from app.persistence.batcher import BatcherConfig

logger = logging.getLogger(__name__)


class RaftCluster:
    """对外表现为一个排序服务: 提交自动转给当前 leader, 读取走任意存活节点"""

    def __init__(
        self,
        node_ids: list[str],
        data_root: str | Path,
        config: RaftConfig | None = None,
        batcher: BatcherConfig | None = None,
        monitor: PerformanceMonitor | None = None,
    ) -> None:
        if not node_ids:
            raise ValueError("a cluster needs at least one node")
        self.node_ids = list(node_ids)
        self.data_root = Path(data_root)
        self.config = config or RaftConfig()
        self.batcher = batcher
        self.monitor = monitor
        self.transport = LocalTransport()
        self.nodes: dict[str, RaftNode] = {}
        self._stopped = threading.Event()

    def start(self) -> RaftCluster:
        for node_id in self.node_ids:
            self._spawn(node_id)
        return self

    def _spawn(self, node_id: str) -> RaftNode:
        node = RaftNode(
            node_id,
            self.node_ids,
            self.data_root / node_id,
            self.transport,
            config=self.config,
            batcher=self.batcher,
            monitor=self.monitor,
        )
        self.nodes[node_id] = node
        self.transport.register(node)
        return node.start()

    # --- 故障注入 ---

    def kill(self, node_id: str) -> None:
        node = self.nodes.pop(node_id)
        self.transport.unregister(node_id)
        node.stop()
        logger.warning("排序节点 %s 已被停止", node_id)

    def restart(self, node_id: str) -> RaftNode:
        if node_id in self.nodes:
            raise ValueError(f"{node_id} is still running")
        logger.info("从 %s 重启排序节点 %s", self.data_root / node_id, node_id)
        return self._spawn(node_id)

    def alive(self) -> list[RaftNode]:
        return [n for n in self.nodes.values() if not n.stopped]

    def leader(self) -> RaftNode | None:
        leaders = [n for n in self.alive() if n.role is Role.LEADER]
        if not leaders:
            return None
        return max(leaders, key=lambda n: n.current_term)

    def wait_for_leader(self, timeout: float = 10.0) -> RaftNode:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            leader = self.leader()
            if leader is not None:
                return leader
            time.sleep(0.01)
        raise OrderingTimeoutError(f"no leader elected within {timeout}s")

    # --- 排序接口 ---

    @property
    def stopped(self) -> bool:
        return self._stopped.is_set()

    def order(self, payload: bytes) -> int:
        deadline = time.monotonic() + self.config.order_timeout_s
        while True:
            leader = self.leader()
            if leader is not None:
                try:
                    return leader.order(payload)
                except NotLeaderError:
                    pass
            if time.monotonic() >= deadline:
                raise OrderingTimeoutError(
                    f"order not acknowledged within {self.config.order_timeout_s}s",
                    context=ErrorContext(operation="order", component="cluster"),
                )
            time.sleep(0.01)

    def _most_advanced(self) -> RaftNode:
        alive = self.alive()
        if not alive:
            raise OrderingTimeoutError("no ordering node alive")
        return max(alive, key=lambda n: n.last_seq)

    def get(self, seq: int) -> OrderedEntry:
        return self._most_advanced().get(seq)

    def get_last(self) -> tuple[int, OrderedEntry] | None:
        return self._most_advanced().get_last()

    @property
    def last_seq(self) -> int:
        alive = self.alive()
        return max((n.last_seq for n in alive), default=0)

    def wait_for(self, seq: int, timeout: float | None = None) -> bool:
        deadline = None if timeout is None else time.monotonic() + timeout
        while not self.stopped:
            if self.last_seq >= seq:
                return True
            remaining = 0.05 if deadline is None else min(0.05, deadline - time.monotonic())
            if remaining <= 0:
                return False
            leader = self.leader()
            if leader is not None:
                leader.wait_for(seq, timeout=remaining)
            else:
                time.sleep(remaining)
        return False

    def stop(self) -> None:
        self._stopped.set()
        for node_id in list(self.nodes):
            self.kill(node_id)
