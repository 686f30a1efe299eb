"""
逐笔交易哈希链与账本记录帧.

记录帧 (小端): [u32 记录总长度, 含本字段][u64 seq][u8 valid][32 字节链哈希][交易字节]
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import TYPE_CHECKING

from app.infrastructure.error_handling_service import SerializationError
from app.ledger.types import HASH_SIZE, LedgerRecord

if TYPE_CHECKING:
    from collections.abc import Iterable, Iterator

GENESIS_HASH = bytes(HASH_SIZE)
RECORD_HEADER = struct.Struct("<IQB32s")
RECORD_HEADER_SIZE = RECORD_HEADER.size  # 45


def chain_hash_fn(prev_hash: bytes, tx_bytes: bytes) -> bytes:
    return hashlib.sha256(prev_hash + tx_bytes).digest()


def make_record(prev_hash: bytes, seq: int, valid: bool, tx_bytes: bytes) -> LedgerRecord:
    return LedgerRecord(
        seq=seq,
        valid=valid,
        chain_hash=chain_hash_fn(prev_hash, tx_bytes),
        tx_bytes=tx_bytes,
    )


def encode_record(record: LedgerRecord) -> bytes:
    total = RECORD_HEADER_SIZE + len(record.tx_bytes)
    return (
        RECORD_HEADER.pack(total, record.seq, 1 if record.valid else 0, record.chain_hash)
        + record.tx_bytes
    )


@dataclass(frozen=True)
class DecodedFrame:
    record: LedgerRecord
    offset: int
    length: int


def iter_frames(data: bytes, start: int = 0) -> Iterator[DecodedFrame]:
    """依次解析完整记录帧, 遇到残缺或格式非法的帧即停止 (不抛出)"""
    view = memoryview(data)
    pos = start
    size = len(view)
    while pos + RECORD_HEADER_SIZE <= size:
        total, seq, valid, chain_hash = RECORD_HEADER.unpack_from(view, pos)
        if total < RECORD_HEADER_SIZE or pos + total > size or valid not in (0, 1):
            return
        tx_bytes = bytes(view[pos + RECORD_HEADER_SIZE : pos + total])
        yield DecodedFrame(
            record=LedgerRecord(seq, bool(valid), bytes(chain_hash), tx_bytes),
            offset=pos,
            length=total,
        )
        pos += total


def decode_records_strict(data: bytes) -> list[LedgerRecord]:
    """解析整段数据; 存在无法对齐的尾部字节时抛出 SerializationError"""
    records = []
    end = 0
    for frame in iter_frames(data):
        records.append(frame.record)
        end = frame.offset + frame.length
    if end != len(data):
        raise SerializationError(f"unparseable bytes at offset {end} of {len(data)}")
    return records


def first_broken_link(records: Iterable[LedgerRecord]) -> int | None:
    """返回第一个不满足链约束的记录下标; 全部正确时返回 None"""
    prev = GENESIS_HASH
    for index, record in enumerate(records):
        if record.seq != index + 1:
            return index
        if record.chain_hash != chain_hash_fn(prev, record.tx_bytes):
            return index
        prev = record.chain_hash
    return None


def verify_chain(records: Iterable[LedgerRecord]) -> bool:
    return first_broken_link(records) is None
