"""
提交事件及其订阅帧: [u32 长度][u64 seq][u8 valid][16 字节 tx_id][3 x u64 时间戳]
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

from app.infrastructure.error_handling_service import SerializationError
from app.ledger.codec import U32
from app.ledger.types import TX_ID_SIZE

EVENT_BODY = struct.Struct(f"<QB{TX_ID_SIZE}sQQQ")
NULL_TX_ID = bytes(TX_ID_SIZE)


class ValidationCode(str, Enum):
    VALID = "valid"
    MALFORMED = "malformed"
    BAD_SIGNATURE = "bad-signature"
    DUPLICATE_TXID = "duplicate-txid"
    MVCC_CONFLICT = "mvcc-conflict"


@dataclass(frozen=True)
class CommitEvent:
    seq: int
    tx_id: bytes
    valid: bool
    received_ns: int
    verified_ns: int
    committed_ns: int
    code: ValidationCode | None = None

    def __post_init__(self) -> None:
        if len(self.tx_id) != TX_ID_SIZE:
            raise ValueError(f"tx_id must be {TX_ID_SIZE} bytes")
        if not self.received_ns <= self.verified_ns <= self.committed_ns:
            raise ValueError("stage timestamps must be monotone")

    @property
    def tx_id_hex(self) -> str:
        return self.tx_id.hex()

    def to_dict(self) -> dict[str, object]:
        return {
            "seq": self.seq,
            "tx_id": self.tx_id_hex,
            "valid": self.valid,
            "code": self.code.value if self.code is not None else None,
            "received_ns": self.received_ns,
            "verified_ns": self.verified_ns,
            "committed_ns": self.committed_ns,
        }


def encode_event(event: CommitEvent) -> bytes:
    body = EVENT_BODY.pack(
        event.seq,
        1 if event.valid else 0,
        event.tx_id,
        event.received_ns,
        event.verified_ns,
        event.committed_ns,
    )
    return U32.pack(len(body)) + body


def decode_event(frame: bytes) -> CommitEvent:
    """解码完整的一帧 (含长度前缀); 帧内不携带失效原因"""
    if len(frame) != U32.size + EVENT_BODY.size:
        raise SerializationError(f"commit event frame must be {U32.size + EVENT_BODY.size} bytes")
    (length,) = U32.unpack_from(frame)
    if length != EVENT_BODY.size:
        raise SerializationError(f"bad commit event length {length}")
    seq, valid, tx_id, received, verified, committed = EVENT_BODY.unpack_from(frame, U32.size)
    if valid not in (0, 1):
        raise SerializationError(f"bad valid flag {valid}")
    try:
        return CommitEvent(seq, tx_id, bool(valid), received, verified, committed)
    except ValueError as e:
        raise SerializationError(str(e)) from e
