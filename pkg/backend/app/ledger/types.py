"""
账本核心数据类型: 键、读写集、交易、账本记录
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TypeAlias

TX_ID_SIZE = 16
HASH_SIZE = 32

# 提交该键的交易序号; 0 表示键不存在
Version: TypeAlias = int
ABSENT_VERSION: Version = 0


@dataclass(frozen=True, order=True)
class Key:
    """State DB 中的键: 链码命名空间 + 字节串名称, 先按命名空间再按名称排序"""

    namespace: str
    name: bytes

    def __post_init__(self) -> None:
        if not self.namespace:
            raise ValueError("Key namespace must be non-empty")
        if "\x00" in self.namespace:
            raise ValueError("Key namespace must not contain NUL")
        if not isinstance(self.name, bytes):
            raise TypeError("Key name must be bytes")

    @classmethod
    def of(cls, namespace: str, name: str | bytes) -> Key:
        return cls(namespace, name.encode() if isinstance(name, str) else name)

    def encode(self) -> bytes:
        return self.namespace.encode() + b"\x00" + self.name

    @classmethod
    def decode(cls, data: bytes) -> Key:
        namespace, sep, name = data.partition(b"\x00")
        if not sep:
            raise ValueError("encoded key is missing the namespace separator")
        return cls(namespace.decode(), name)

    def __str__(self) -> str:
        return f"{self.namespace}:{self.name.decode(errors='replace')}"


@dataclass(frozen=True)
class ReadWriteSet:
    """读写集; 读和写各自按键排序且无重复. 写入值为 None 表示删除"""

    reads: tuple[tuple[Key, Version], ...] = ()
    writes: tuple[tuple[Key, bytes | None], ...] = ()

    def __post_init__(self) -> None:
        for label, items in (("reads", self.reads), ("writes", self.writes)):
            keys = [k for k, _ in items]
            if any(a >= b for a, b in zip(keys, keys[1:])):
                raise ValueError(f"{label} must be sorted by key without duplicates")
        for _, version in self.reads:
            if version < 0:
                raise ValueError("read version must be non-negative")

    @classmethod
    def build(
        cls,
        reads: dict[Key, Version] | None = None,
        writes: dict[Key, bytes | None] | None = None,
    ) -> ReadWriteSet:
        return cls(
            reads=tuple(sorted((reads or {}).items())),
            writes=tuple(sorted((writes or {}).items(), key=lambda kv: kv[0])),
        )

    @property
    def is_read_only(self) -> bool:
        return not self.writes


@dataclass(frozen=True)
class Endorsement:
    endorser_id: str
    signature: bytes


@dataclass(frozen=True)
class Transaction:
    """已背书的交易; 排序与验证的基本单位.

    args[0] 是链码函数名, 其余为函数参数.
    """

    tx_id: bytes
    chaincode_id: str
    args: tuple[bytes, ...]
    rwset: ReadWriteSet
    endorsements: tuple[Endorsement, ...]
    client_id: str
    client_sig: bytes
    submit_ts: int

    def __post_init__(self) -> None:
        if len(self.tx_id) != TX_ID_SIZE:
            raise ValueError(f"tx_id must be {TX_ID_SIZE} bytes")
        if not self.endorsements:
            raise ValueError("transaction needs at least one endorsement")
        if not 0 <= self.submit_ts < 2**64:
            raise ValueError("submit_ts out of range")

    @property
    def function(self) -> str:
        return self.args[0].decode() if self.args else ""

    @property
    def tx_id_hex(self) -> str:
        return self.tx_id.hex()


@dataclass(frozen=True)
class LedgerRecord:
    seq: int
    valid: bool
    chain_hash: bytes
    tx_bytes: bytes = field(repr=False)

    def __post_init__(self) -> None:
        if len(self.chain_hash) != HASH_SIZE:
            raise ValueError("chain_hash must be 32 bytes")
        if not 0 <= self.seq < 2**64:
            raise ValueError("seq out of range")
