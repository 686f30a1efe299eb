"""
测试数据工厂: 已签名交易、排序条目、随机交易序列与提交组件
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from pathlib import Path

from app.ledger.codec import client_signed_bytes, serialize_rwset, serialize_tx
from app.ledger.types import TX_ID_SIZE, Endorsement, Key, ReadWriteSet, Transaction
from app.ordering.types import Block, CutReason, OrderedEntry
from app.persistence.ledger_store import LedgerStore
from app.state.statedb import StateDb
from app.validator.commit import Committer
from app.validator.events import ValidationCode

MALFORMED_PAYLOAD = b"\x07\x00\x00\x00garbage"


def kv_key(name: str) -> Key:
    return Key.of("kv", name)


def make_tx(
    identities,
    reads=None,
    writes=None,
    chaincode_id="kv",
    endorsers=("peer0",),
    client="client",
    tx_id=None,
    args=(b"update",),
    submit_ts=1,
) -> Transaction:
    """直接签名组装交易, 不经过链码执行"""
    rwset = ReadWriteSet.build(reads=reads, writes=writes)
    rwset_bytes = serialize_rwset(rwset)
    tx = Transaction(
        tx_id=tx_id if tx_id is not None else random.randbytes(TX_ID_SIZE),
        chaincode_id=chaincode_id,
        args=tuple(args),
        rwset=rwset,
        endorsements=tuple(Endorsement(e, identities[e].sign(rwset_bytes)) for e in endorsers),
        client_id=client,
        client_sig=b"",
        submit_ts=submit_ts,
    )
    return replace(tx, client_sig=identities[client].sign(client_signed_bytes(tx)))


def with_bad_signature(tx: Transaction) -> Transaction:
    return replace(tx, client_sig=bytes(b ^ 0xFF for b in tx.client_sig))


def entries_of(payloads, start_seq: int = 1) -> list[OrderedEntry]:
    return [OrderedEntry.of(start_seq + i, p) for i, p in enumerate(payloads)]


def blocks_of(entries, size: int) -> list[Block]:
    blocks = []
    for n, start in enumerate(range(0, len(entries), size), start=1):
        chunk = tuple(entries[start : start + size])
        reason = CutReason.SIZE if len(chunk) == size else CutReason.TIMEOUT
        blocks.append(Block(n, chunk, reason))
    return blocks


@dataclass
class Transcript:
    """随机排序序列及其期望的逐笔判定"""

    payloads: list[bytes] = field(default_factory=list)
    expected: list[ValidationCode] = field(default_factory=list)

    @property
    def valid_count(self) -> int:
        return sum(1 for c in self.expected if c is ValidationCode.VALID)


def random_transcript(identities, count: int, seed: int = 0, key_space: int = 16) -> Transcript:
    """混合有效、MVCC 冲突、坏签名、重复 tx_id 与无法解析的条目"""
    rng = random.Random(seed)
    versions: dict[Key, int] = {}
    history: list[tuple[bytes, ValidationCode]] = []
    out = Transcript()

    for seq in range(1, count + 1):
        roll = rng.random()
        if roll < 0.03:
            payload, code = MALFORMED_PAYLOAD + bytes([seq % 251]), ValidationCode.MALFORMED
            history.append((payload, code))
        elif roll < 0.07 and history:
            payload, first = rng.choice(history)
            if first in (ValidationCode.MALFORMED, ValidationCode.BAD_SIGNATURE):
                code = first
            else:
                code = ValidationCode.DUPLICATE_TXID
        else:
            key = kv_key(f"k{rng.randrange(key_space)}")
            current = versions.get(key, 0)
            read_version = current if rng.random() < 0.7 else rng.randrange(0, seq)
            writes: dict[Key, bytes | None] = {
                key: None if rng.random() < 0.1 else f"v{seq}".encode()
            }
            if rng.random() < 0.3:
                blind = kv_key(f"k{rng.randrange(key_space)}")
                if blind != key:
                    writes[blind] = f"b{seq}".encode()
            tx = make_tx(
                identities,
                reads={key: read_version},
                writes=writes,
                tx_id=rng.randbytes(TX_ID_SIZE),
                submit_ts=seq,
            )
            if rng.random() < 0.05:
                tx = with_bad_signature(tx)
                code = ValidationCode.BAD_SIGNATURE
            elif read_version != current:
                code = ValidationCode.MVCC_CONFLICT
            else:
                code = ValidationCode.VALID
                for k, v in writes.items():
                    if v is None:
                        versions.pop(k, None)
                    else:
                        versions[k] = seq
            payload = serialize_tx(tx)
            history.append((payload, code))
        out.payloads.append(payload)
        out.expected.append(code)
    return out


def build_committer(data_dir: Path, batcher=None, stripes: int = 8, auto_flush: bool = True):
    ledger = LedgerStore(data_dir, config=batcher, auto_flush=auto_flush)
    return Committer(StateDb(stripe_count=stripes), ledger)
