"""
账本核心: 交易与记录格式、规范序列化、逐笔哈希链
"""

from .chain import (
    GENESIS_HASH,
    chain_hash_fn,
    decode_records_strict,
    encode_record,
    make_record,
    verify_chain,
)
from .codec import deserialize_tx, serialize_rwset, serialize_tx
from .types import (
    ABSENT_VERSION,
    Endorsement,
    Key,
    LedgerRecord,
    ReadWriteSet,
    Transaction,
    Version,
)

__all__ = [
    "ABSENT_VERSION",
    "GENESIS_HASH",
    "Endorsement",
    "Key",
    "LedgerRecord",
    "ReadWriteSet",
    "Transaction",
    "Version",
    "chain_hash_fn",
    "decode_records_strict",
    "deserialize_tx",
    "encode_record",
    "make_record",
    "serialize_rwset",
    "serialize_tx",
    "verify_chain",
]
