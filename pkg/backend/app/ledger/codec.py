"""
规范化序列化: 固定字段顺序、小端定长整数、长度前缀字节串.

两个结构相等的交易总是得到相同的字节, 签名与哈希因此稳定.
"""

from __future__ import annotations

import struct

from app.infrastructure.error_handling_service import SerializationError
from app.ledger.types import (
    TX_ID_SIZE,
    Endorsement,
    Key,
    ReadWriteSet,
    Transaction,
)

U8 = struct.Struct("<B")
U32 = struct.Struct("<I")
U64 = struct.Struct("<Q")

WRITE_VALUE = 0
WRITE_DELETE = 1


class Writer:
    """追加式编码缓冲"""

    __slots__ = ("_buf",)

    def __init__(self) -> None:
        self._buf = bytearray()

    def u8(self, value: int) -> Writer:
        self._buf += U8.pack(value)
        return self

    def u32(self, value: int) -> Writer:
        self._buf += U32.pack(value)
        return self

    def u64(self, value: int) -> Writer:
        self._buf += U64.pack(value)
        return self

    def raw(self, data: bytes) -> Writer:
        self._buf += data
        return self

    def blob(self, data: bytes) -> Writer:
        self._buf += U32.pack(len(data))
        self._buf += data
        return self

    def text(self, value: str) -> Writer:
        return self.blob(value.encode())

    def getvalue(self) -> bytes:
        return bytes(self._buf)


class Reader:
    """带越界检查的解码游标"""

    __slots__ = ("_data", "_pos")

    def __init__(self, data: bytes, pos: int = 0) -> None:
        self._data = memoryview(data)
        self._pos = pos

    @property
    def pos(self) -> int:
        return self._pos

    def remaining(self) -> int:
        return len(self._data) - self._pos

    def _take(self, n: int) -> memoryview:
        if n < 0 or self._pos + n > len(self._data):
            raise SerializationError(
                f"truncated input: need {n} bytes at offset {self._pos}"
            )
        chunk = self._data[self._pos : self._pos + n]
        self._pos += n
        return chunk

    def u8(self) -> int:
        return U8.unpack(self._take(1))[0]

    def u32(self) -> int:
        return U32.unpack(self._take(4))[0]

    def u64(self) -> int:
        return U64.unpack(self._take(8))[0]

    def raw(self, n: int) -> bytes:
        return bytes(self._take(n))

    def blob(self) -> bytes:
        return self.raw(self.u32())

    def text(self) -> str:
        try:
            return self.blob().decode()
        except UnicodeDecodeError as e:
            raise SerializationError(f"invalid utf-8 string: {e}") from e

    def expect_end(self) -> None:
        if self.remaining():
            raise SerializationError(f"{self.remaining()} trailing bytes")


def _write_key(w: Writer, key: Key) -> None:
    w.text(key.namespace).blob(key.name)


def _read_key(r: Reader) -> Key:
    namespace = r.text()
    name = r.blob()
    try:
        return Key(namespace, name)
    except ValueError as e:
        raise SerializationError(str(e)) from e


def serialize_rwset(rwset: ReadWriteSet) -> bytes:
    """读写集的规范字节, 背书签名覆盖的就是这段字节"""
    w = Writer()
    w.u32(len(rwset.reads))
    for key, version in rwset.reads:
        _write_key(w, key)
        w.u64(version)
    w.u32(len(rwset.writes))
    for key, value in rwset.writes:
        _write_key(w, key)
        if value is None:
            w.u8(WRITE_DELETE)
        else:
            w.u8(WRITE_VALUE).blob(value)
    return w.getvalue()


def _read_rwset(r: Reader) -> ReadWriteSet:
    reads = []
    for _ in range(r.u32()):
        key = _read_key(r)
        reads.append((key, r.u64()))
    writes: list[tuple[Key, bytes | None]] = []
    for _ in range(r.u32()):
        key = _read_key(r)
        kind = r.u8()
        if kind == WRITE_DELETE:
            writes.append((key, None))
        elif kind == WRITE_VALUE:
            writes.append((key, r.blob()))
        else:
            raise SerializationError(f"unknown write kind {kind}")
    try:
        return ReadWriteSet(reads=tuple(reads), writes=tuple(writes))
    except ValueError as e:
        raise SerializationError(str(e)) from e


def deserialize_rwset(data: bytes) -> ReadWriteSet:
    r = Reader(data)
    rwset = _read_rwset(r)
    r.expect_end()
    return rwset


def _write_tx_body(w: Writer, tx: Transaction) -> None:
    w.raw(tx.tx_id)
    w.text(tx.chaincode_id)
    w.text(tx.client_id)
    w.u32(len(tx.args))
    for arg in tx.args:
        w.blob(arg)
    w.blob(serialize_rwset(tx.rwset))
    w.u32(len(tx.endorsements))
    for endorsement in tx.endorsements:
        w.text(endorsement.endorser_id).blob(endorsement.signature)


def client_signed_bytes(tx: Transaction) -> bytes:
    """客户端签名覆盖的字节: 除 client_sig 与 submit_ts 之外的全部字段"""
    w = Writer()
    _write_tx_body(w, tx)
    return w.getvalue()


def serialize_tx(tx: Transaction) -> bytes:
    """交易的规范、自定界编码: [u32 正文长度][正文]"""
    body = Writer()
    _write_tx_body(body, tx)
    body.blob(tx.client_sig)
    body.u64(tx.submit_ts)
    payload = body.getvalue()
    return U32.pack(len(payload)) + payload


def deserialize_tx(data: bytes) -> Transaction:
    r = Reader(data)
    length = r.u32()
    if length != r.remaining():
        raise SerializationError(
            f"length prefix {length} does not match body size {r.remaining()}"
        )
    tx_id = r.raw(TX_ID_SIZE)
    chaincode_id = r.text()
    client_id = r.text()
    args = tuple(r.blob() for _ in range(r.u32()))
    rwset_reader = Reader(r.blob())
    rwset = _read_rwset(rwset_reader)
    rwset_reader.expect_end()
    endorsements = []
    for _ in range(r.u32()):
        endorser_id = r.text()
        endorsements.append(Endorsement(endorser_id, r.blob()))
    client_sig = r.blob()
    submit_ts = r.u64()
    r.expect_end()
    try:
        return Transaction(
            tx_id=tx_id,
            chaincode_id=chaincode_id,
            args=args,
            rwset=rwset,
            endorsements=tuple(endorsements),
            client_id=client_id,
            client_sig=client_sig,
            submit_ts=submit_ts,
        )
    except ValueError as e:
        raise SerializationError(str(e)) from e
