"""
基线模式的区块切分: 累计到 block_size 或最早待切条目等待超过 block_timeout 时出块
"""

from __future__ import annotations

from typing import TYPE_CHECKING

from app.ordering.types import Block, CutReason

if TYPE_CHECKING:
    from collections.abc import Sequence

    from app.ordering.types import OrderedEntry


def cut_block(
    pending: Sequence[OrderedEntry],
    block_size: int,
    block_timeout_s: float,
    oldest_age_s: float,
    block_no: int,
) -> Block | None:
    """满足切块条件时返回区块 (取前 block_size 条), 否则返回 None"""
    if not pending:
        return None
    if len(pending) >= block_size:
        return Block(block_no, tuple(pending[:block_size]), CutReason.SIZE)
    if oldest_age_s >= block_timeout_s:
        return Block(block_no, tuple(pending), CutReason.TIMEOUT)
    return None


class BlockCutter:
    """单个订阅者的切块状态; 时钟由调用方传入"""

    def __init__(self, block_size: int, block_timeout_s: float, next_block_no: int = 1):
        if block_size < 1:
            raise ValueError("block_size must be >= 1")
        if block_timeout_s <= 0:
            raise ValueError("block_timeout must be > 0")
        self.block_size = block_size
        self.block_timeout_s = block_timeout_s
        self.next_block_no = next_block_no
        self._pending: list[OrderedEntry] = []
        self._oldest_ts: float | None = None

    @property
    def pending(self) -> int:
        return len(self._pending)

    def deadline(self) -> float | None:
        """最早待切条目的超时时刻; 无待切条目时为 None"""
        if self._oldest_ts is None:
            return None
        return self._oldest_ts + self.block_timeout_s

    def add(self, entry: OrderedEntry, now: float) -> Block | None:
        if not self._pending:
            self._oldest_ts = now
        self._pending.append(entry)
        return self._cut(now)

    def poll(self, now: float) -> Block | None:
        return self._cut(now)

    def _cut(self, now: float) -> Block | None:
        age = now - self._oldest_ts if self._oldest_ts is not None else 0.0
        block = cut_block(
            self._pending, self.block_size, self.block_timeout_s, age, self.next_block_no
        )
        if block is None:
            return None
        del self._pending[: len(block.entries)]
        self._oldest_ts = now if self._pending else None
        self.next_block_no += 1
        return block
