"""
订阅投递: 从给定序号起按序产出已提交的条目 (流式) 或区块 (基线模式)
"""

from __future__ import annotations

import logging
import time
from typing import TYPE_CHECKING

from app.ordering.block_cutter import BlockCutter

if TYPE_CHECKING:
    import threading
    from collections.abc import Iterator

    from app.ordering.types import Block, OrderedEntry, OrderingService

logger = logging.getLogger(__name__)

POLL_INTERVAL_S = 0.2


def _running(service: OrderingService, stop: threading.Event | None) -> bool:
    return not service.stopped and (stop is None or not stop.is_set())


def deliver_stream(
    service: OrderingService,
    from_seq: int = 1,
    stop: threading.Event | None = None,
) -> Iterator[OrderedEntry]:
    """每个条目提交后立即产出, 不做任何攒批"""
    seq = max(from_seq, 1)
    while _running(service, stop):
        if not service.wait_for(seq, timeout=POLL_INTERVAL_S):
            continue
        yield service.get(seq)
        seq += 1


def deliver_blocks(
    service: OrderingService,
    from_seq: int,
    block_size: int,
    block_timeout_s: float,
    stop: threading.Event | None = None,
    next_block_no: int = 1,
) -> Iterator[Block]:
    """按 block_size / block_timeout 切块后产出"""
    cutter = BlockCutter(block_size, block_timeout_s, next_block_no=next_block_no)
    seq = max(from_seq, 1)
    while _running(service, stop):
        deadline = cutter.deadline()
        wait_s = POLL_INTERVAL_S
        if deadline is not None:
            wait_s = max(0.0, min(wait_s, deadline - time.monotonic()))
        if service.wait_for(seq, timeout=wait_s):
            block = cutter.add(service.get(seq), time.monotonic())
            seq += 1
        else:
            block = cutter.poll(time.monotonic())
        if block is not None:
            logger.debug("出块 #%d: %d 条, 原因 %s", block.block_no, len(block.entries), block.cut_reason.value)
            yield block
