"""
排序服务的数据类型与对外接口 (order / get / get_last / 订阅)
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol

from app.ledger.types import HASH_SIZE


def payload_hash_of(payload: bytes) -> bytes:
    return hashlib.sha256(payload).digest()


@dataclass(frozen=True)
class OrderedEntry:
    seq: int
    payload: bytes = field(repr=False)
    payload_hash: bytes = field(repr=False)

    def __post_init__(self) -> None:
        if self.seq < 1:
            raise ValueError("ordered seqs start at 1")
        if len(self.payload_hash) != HASH_SIZE:
            raise ValueError("payload_hash must be 32 bytes")

    @classmethod
    def of(cls, seq: int, payload: bytes) -> OrderedEntry:
        return cls(seq=seq, payload=payload, payload_hash=payload_hash_of(payload))


class CutReason(str, Enum):
    SIZE = "size"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class Block:
    """基线模式下的区块"""

    block_no: int
    entries: tuple[OrderedEntry, ...]
    cut_reason: CutReason

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("a block holds at least one entry")

    @property
    def first_seq(self) -> int:
        return self.entries[0].seq

    @property
    def last_seq(self) -> int:
        return self.entries[-1].seq


class OrderingService(Protocol):
    """节点侧看到的排序服务; solo、Raft 和远程客户端都实现这个接口"""

    def order(self, payload: bytes) -> int: ...

    def get(self, seq: int) -> OrderedEntry: ...

    def get_last(self) -> tuple[int, OrderedEntry] | None: ...

    @property
    def last_seq(self) -> int: ...

    def wait_for(self, seq: int, timeout: float | None = None) -> bool:
        """等待 seq 已提交; 超时返回 False"""
        ...

    @property
    def stopped(self) -> bool: ...
