"""
状态检查点定时任务
按 CHECKPOINT_INTERVAL_S 周期把状态库的一致切面写入 state.ckpt
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

from apscheduler.schedulers.background import BackgroundScheduler

from app.infrastructure.error_handling_service import LedgerError

if TYPE_CHECKING:
    from app.peer.node import PeerNode

logger = logging.getLogger(__name__)


def run_checkpoint(peer: PeerNode) -> int | None:
    """写一次检查点; 节点已停机时跳过"""
    if peer.guard.halted:
        logger.warning("%s 已停机, 跳过检查点", peer.peer_id)
        return None
    try:
        return peer.checkpoint()
    except (LedgerError, OSError):
        logger.exception("%s 检查点写入失败", peer.peer_id)
        return None


class CheckpointScheduler:
    def __init__(self, interval_s: int) -> None:
        if interval_s <= 0:
            raise ValueError("checkpoint interval must be > 0")
        self.interval_s = interval_s
        self.scheduler = BackgroundScheduler(daemon=True)

    def add_peer(self, peer: PeerNode) -> None:
        self.scheduler.add_job(
            run_checkpoint,
            "interval",
            seconds=self.interval_s,
            args=[peer],
            id=f"checkpoint-{peer.peer_id}",
            max_instances=1,
            coalesce=True,
            replace_existing=True,
        )

    def start(self) -> CheckpointScheduler:
        self.scheduler.start()
        logger.info("检查点任务已启动, 间隔 %ds", self.interval_s)
        return self

    def shutdown(self) -> None:
        if self.scheduler.running:
            self.scheduler.shutdown(wait=False)
