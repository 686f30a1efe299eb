"""
验证节点 (peer) 的组装

一个 peer 同时是背书节点和验证节点: 共享同一个状态库, 背书读取状态快照,
流水线按排序结果提交. 启动时从本地账本和检查点恢复状态.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import TYPE_CHECKING

from app.chaincode.base import default_registry
from app.endorser.endorser import Endorser
from app.infrastructure.error_handling_service import (
    FailStopGuard,
    PersistenceError,
    SerializationError,
)
from app.infrastructure.monitoring import PerformanceMonitor
from app.ledger.codec import deserialize_tx
from app.ordering.client import RemoteOrderer
from app.ordering.wire import FetchMode
from app.persistence.batcher import BatcherConfig, FsyncPolicy
from app.persistence.ledger_store import LedgerStore
from app.state.statedb import DEFAULT_STRIPES, StateDb
from app.validator.commit import Committer
from app.validator.pipeline import PipelineConfig, PipelineMode, ValidatingPipeline

if TYPE_CHECKING:
    from app.chaincode.base import ChaincodeRegistry
    from app.core.security import Identity, Membership
    from app.endorser.policy import PolicyBook
    from app.ledger.types import LedgerRecord, Transaction
    from app.ordering.types import OrderingService
    from app.validator.events import CommitEvent
    from app.validator.housekeeping import Housekeeper

logger = logging.getLogger(__name__)


class PeerNode:
    def __init__(
        self,
        identity: Identity,
        data_dir: str | Path,
        membership: Membership,
        policies: PolicyBook,
        config: PipelineConfig | None = None,
        batcher: BatcherConfig | None = None,
        stripes: int = DEFAULT_STRIPES,
        registry: ChaincodeRegistry | None = None,
        monitor: PerformanceMonitor | None = None,
    ) -> None:
        self.identity = identity
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.config = config or PipelineConfig()
        self.batcher = batcher or BatcherConfig()
        self.stripes = stripes
        self.monitor = monitor or PerformanceMonitor(name=identity.id)
        self.guard = FailStopGuard(component=identity.id)

        # 基线模式每个区块显式刷盘一次, 不启动后台刷盘线程
        self.ledger = LedgerStore(
            self.data_dir,
            config=self.batcher,
            monitor=self.monitor,
            guard=self.guard,
            auto_flush=self.config.mode is PipelineMode.STREAM,
        )
        self.state, seen = self._recover_state()
        self.committer = Committer(self.state, self.ledger, guard=self.guard, seen_tx_ids=seen)
        self.pipeline = ValidatingPipeline(
            self.committer,
            policies,
            membership,
            config=self.config,
            monitor=self.monitor,
            name=identity.id,
        )
        self.endorser = Endorser(
            identity, self.state, registry or default_registry(), monitor=self.monitor
        )
        self.checkpoint_seq = 0

    @property
    def peer_id(self) -> str:
        return self.identity.id

    @property
    def housekeeper(self) -> Housekeeper:
        return self.pipeline.housekeeper

    # --- 恢复 ---

    def _load_checkpoint(self) -> tuple[StateDb, int]:
        state = StateDb(stripe_count=self.stripes, monitor=self.monitor)
        try:
            seq = state.load_checkpoint(self.data_dir)
        except (PersistenceError, SerializationError, ValueError) as e:
            logger.warning("%s 检查点不可用 (%s), 从账本全量重放", self.peer_id, e)
            return StateDb(stripe_count=self.stripes, monitor=self.monitor), 0
        if seq > self.ledger.last_seq:
            # 检查点领先于已落盘的账本: 丢弃, 全量重放
            logger.warning(
                "%s 检查点 seq %d 超过账本末尾 %d, 忽略检查点",
                self.peer_id,
                seq,
                self.ledger.last_seq,
            )
            return StateDb(stripe_count=self.stripes, monitor=self.monitor), 0
        return state, seq

    def _recover_state(self) -> tuple[StateDb, set[bytes]]:
        state, from_seq = self._load_checkpoint()
        records = self.ledger.recovered_records()
        seen: set[bytes] = set()
        replayed = 0
        for record in records:
            tx = _decode(record)
            if tx is not None:
                seen.add(tx.tx_id)
            if record.seq <= from_seq:
                continue
            if record.valid and tx is not None and tx.rwset.writes:
                state.apply_writes(tx.rwset.writes, record.seq)
            else:
                state.mark_applied(record.seq)
            replayed += 1
        if records:
            logger.info(
                "%s 状态恢复: 检查点 seq %d, 重放 %d 条, 当前 seq %d",
                self.peer_id,
                from_seq,
                replayed,
                state.last_applied_seq,
            )
        return state, seen

    # --- 生命周期 ---

    def start(self, ordering: OrderingService | RemoteOrderer) -> PeerNode:
        """从本地账本末尾之后订阅排序服务并启动流水线"""
        if isinstance(ordering, RemoteOrderer):
            block = self.config.mode is PipelineMode.BLOCK
            source = ordering.subscribe(
                from_seq=self.pipeline.next_seq,
                mode=FetchMode.BLOCKS if block else FetchMode.STREAM,
                block_size=self.config.block_size if block else 0,
                block_timeout_ms=self.config.block_timeout_ms if block else 0,
                stop=self.pipeline.stop_event,
            )
        else:
            source = self.pipeline.source_for(ordering)
        self.pipeline.start(source)
        return self

    def stop(self) -> None:
        self.pipeline.stop()
        try:
            self.ledger.close()
        except PersistenceError:
            logger.error("%s 关闭账本时刷盘失败", self.peer_id)
        logger.info("%s 已停止, 账本末尾 seq %d", self.peer_id, self.ledger.last_seq)

    # --- 查询与运维 ---

    def checkpoint(self) -> int:
        """先刷账本再写检查点, 返回检查点 seq"""
        self.guard.check()
        self.ledger.flush()
        seq = self.state.write_checkpoint(
            self.data_dir, fsync=self.batcher.fsync_policy is FsyncPolicy.PER_FLUSH
        )
        self.checkpoint_seq = seq
        return seq

    @property
    def last_seq(self) -> int:
        return self.pipeline.last_committed_seq

    def lookup_tx(self, tx_id: bytes) -> CommitEvent | None:
        return self.pipeline.housekeeper.lookup(tx_id)

    def wait_for_tx(self, tx_id: bytes, timeout: float | None = None) -> CommitEvent | None:
        return self.pipeline.housekeeper.wait_for_tx(tx_id, timeout)

    def state_digest(self) -> str:
        return self.state.state_digest()

    def status(self) -> dict[str, object]:
        return {
            "peer_id": self.peer_id,
            "mode": self.config.mode.value,
            "last_seq": self.last_seq,
            "head_hash": self.ledger.head_hash.hex(),
            "state_keys": len(self.state),
            "checkpoint_seq": self.checkpoint_seq,
            "halted": self.guard.halted,
            "blocks": self.pipeline.block_count,
            "stage3_queued": self.pipeline.housekeeper.queued,
            "cache": self.pipeline.cache.get_stats(),
        }


def _decode(record: LedgerRecord) -> Transaction | None:
    try:
        return deserialize_tx(record.tx_bytes)
    except SerializationError:
        return None
