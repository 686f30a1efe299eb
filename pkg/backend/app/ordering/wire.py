"""
节点间线协议: 流式套接字上的长度前缀帧 [u32 长度][u8 消息类型][消息体]

长度覆盖类型字节与消息体. 整数小端, 字节串带 u32 长度前缀.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
from dataclasses import dataclass
from enum import IntEnum
from typing import TYPE_CHECKING

from app.infrastructure.error_handling_service import SerializationError
from app.ledger.codec import U32, Reader, Writer
from app.ordering.log import LogEntry
from app.ordering.raft import AppendRequest, AppendResponse, VoteRequest, VoteResponse
from app.ordering.types import Block, CutReason, OrderedEntry

if TYPE_CHECKING:
    from collections.abc import Callable

logger = logging.getLogger(__name__)

MAX_FRAME = 64 * 1024 * 1024


class MsgType(IntEnum):
    SUBMIT = 1
    SUBMIT_ACK = 2
    FETCH = 3
    DELIVER = 4
    APPEND = 5
    APPEND_ACK = 6
    VOTE_REQ = 7
    VOTE_RESP = 8
    GET_LAST = 9
    ENDORSE = 10
    ENDORSE_RESP = 11


class AckStatus(IntEnum):
    OK = 0
    NOT_LEADER = 1
    TIMEOUT = 2
    ERROR = 3


class DeliverKind(IntEnum):
    ENTRY = 0
    BLOCK = 1
    NOT_FOUND = 2
    RESTART_FROM = 3
    EMPTY = 4


class FetchMode(IntEnum):
    SINGLE = 0
    STREAM = 1
    BLOCKS = 2


# --- 帧读写 ---


def recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            raise ConnectionError("connection closed by peer")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def encode_frame(msg_type: MsgType, body: bytes = b"") -> bytes:
    return U32.pack(len(body) + 1) + bytes([msg_type]) + body


def send_frame(sock: socket.socket, msg_type: MsgType, body: bytes = b"") -> None:
    sock.sendall(encode_frame(msg_type, body))


def recv_frame(sock: socket.socket) -> tuple[MsgType, bytes]:
    (length,) = U32.unpack(recv_exact(sock, U32.size))
    if not 1 <= length <= MAX_FRAME:
        raise SerializationError(f"bad frame length {length}")
    data = recv_exact(sock, length)
    try:
        return MsgType(data[0]), data[1:]
    except ValueError:
        raise SerializationError(f"unknown message type {data[0]}") from None


# --- 消息体编解码 ---


@dataclass(frozen=True)
class SubmitAck:
    status: AckStatus
    seq: int = 0
    detail: str = ""


def encode_submit_ack(ack: SubmitAck) -> bytes:
    return Writer().u8(ack.status).u64(ack.seq).text(ack.detail).getvalue()


def decode_submit_ack(body: bytes) -> SubmitAck:
    r = Reader(body)
    ack = SubmitAck(AckStatus(r.u8()), r.u64(), r.text())
    r.expect_end()
    return ack


@dataclass(frozen=True)
class FetchRequest:
    from_seq: int
    mode: FetchMode = FetchMode.SINGLE
    block_size: int = 0
    block_timeout_ms: int = 0


def encode_fetch(req: FetchRequest) -> bytes:
    return (
        Writer()
        .u64(req.from_seq)
        .u8(req.mode)
        .u32(req.block_size)
        .u32(req.block_timeout_ms)
        .getvalue()
    )


def decode_fetch(body: bytes) -> FetchRequest:
    r = Reader(body)
    req = FetchRequest(r.u64(), FetchMode(r.u8()), r.u32(), r.u32())
    r.expect_end()
    return req


def _write_entry(w: Writer, entry: OrderedEntry) -> None:
    w.u64(entry.seq).raw(entry.payload_hash).blob(entry.payload)


def _read_entry(r: Reader) -> OrderedEntry:
    seq = r.u64()
    payload_hash = r.raw(32)
    return OrderedEntry(seq=seq, payload=r.blob(), payload_hash=payload_hash)


def encode_deliver_entry(entry: OrderedEntry) -> bytes:
    w = Writer().u8(DeliverKind.ENTRY)
    _write_entry(w, entry)
    return w.getvalue()


def encode_deliver_block(block: Block) -> bytes:
    w = Writer().u8(DeliverKind.BLOCK).u64(block.block_no)
    w.u8(0 if block.cut_reason is CutReason.SIZE else 1).u32(len(block.entries))
    for entry in block.entries:
        _write_entry(w, entry)
    return w.getvalue()


def encode_deliver_status(kind: DeliverKind, seq: int = 0) -> bytes:
    return Writer().u8(kind).u64(seq).getvalue()


def decode_deliver(body: bytes) -> OrderedEntry | Block | tuple[DeliverKind, int]:
    """返回条目、区块, 或 (NOT_FOUND|RESTART_FROM|EMPTY, seq)"""
    r = Reader(body)
    kind = DeliverKind(r.u8())
    result: OrderedEntry | Block | tuple[DeliverKind, int]
    if kind is DeliverKind.ENTRY:
        result = _read_entry(r)
    elif kind is DeliverKind.BLOCK:
        block_no = r.u64()
        reason = CutReason.SIZE if r.u8() == 0 else CutReason.TIMEOUT
        entries = tuple(_read_entry(r) for _ in range(r.u32()))
        result = Block(block_no, entries, reason)
    else:
        result = (kind, r.u64())
    r.expect_end()
    return result


def encode_append(req: AppendRequest) -> bytes:
    w = Writer().u64(req.term).text(req.leader_id).u64(req.prev_index).u64(req.prev_term)
    w.u64(req.leader_commit).u32(len(req.entries))
    for entry in req.entries:
        w.u64(entry.term).blob(entry.payload)
    return w.getvalue()


def decode_append(body: bytes) -> AppendRequest:
    r = Reader(body)
    term, leader_id, prev_index, prev_term, commit = r.u64(), r.text(), r.u64(), r.u64(), r.u64()
    entries = tuple(LogEntry(r.u64(), r.blob()) for _ in range(r.u32()))
    r.expect_end()
    return AppendRequest(term, leader_id, prev_index, prev_term, entries, commit)


def encode_append_ack(resp: AppendResponse) -> bytes:
    return Writer().u64(resp.term).u8(resp.success).u64(resp.match_index).getvalue()


def decode_append_ack(body: bytes) -> AppendResponse:
    r = Reader(body)
    resp = AppendResponse(r.u64(), bool(r.u8()), r.u64())
    r.expect_end()
    return resp


def encode_vote_req(req: VoteRequest) -> bytes:
    return (
        Writer()
        .u64(req.term)
        .text(req.candidate_id)
        .u64(req.last_index)
        .u64(req.last_term)
        .getvalue()
    )


def decode_vote_req(body: bytes) -> VoteRequest:
    r = Reader(body)
    req = VoteRequest(r.u64(), r.text(), r.u64(), r.u64())
    r.expect_end()
    return req


def encode_vote_resp(resp: VoteResponse) -> bytes:
    return Writer().u64(resp.term).u8(resp.granted).getvalue()


def decode_vote_resp(body: bytes) -> VoteResponse:
    r = Reader(body)
    resp = VoteResponse(r.u64(), bool(r.u8()))
    r.expect_end()
    return resp


# --- TCP 服务端骨架 ---


class _Handler(socketserver.BaseRequestHandler):
    server: _TcpServer

    def handle(self) -> None:
        sock: socket.socket = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        try:
            self.server.on_connection(sock)
        except (ConnectionError, OSError):
            pass
        except SerializationError as e:
            logger.warning("丢弃格式错误的连接: %s", e)


class _TcpServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int], on_connection: Callable[[socket.socket], None]):
        self.on_connection = on_connection
        super().__init__(address, _Handler)


class FrameServer:
    """每个连接一个线程; on_connection 负责循环读请求并写回响应"""

    def __init__(
        self, host: str, port: int, on_connection: Callable[[socket.socket], None], name: str
    ) -> None:
        self._server = _TcpServer((host, port), on_connection)
        self.name = name
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.server_address[:2]
        return str(host), int(port)

    def start(self) -> FrameServer:
        self._thread = threading.Thread(
            target=self._server.serve_forever, name=f"{self.name}-server", daemon=True
        )
        self._thread.start()
        logger.info("%s 监听 %s:%d", self.name, *self.address)
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


class FrameClient:
    """单个持久连接上的同步请求/响应; 出错后下次调用自动重连"""

    def __init__(self, address: tuple[str, int], timeout: float = 5.0) -> None:
        self.address = address
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._lock = threading.Lock()

    def _connect(self) -> socket.socket:
        if self._sock is None:
            sock = socket.create_connection(self.address, timeout=self.timeout)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._sock = sock
        return self._sock

    def request(self, msg_type: MsgType, body: bytes, timeout: float | None = None) -> tuple[MsgType, bytes]:
        with self._lock:
            try:
                sock = self._connect()
                sock.settimeout(timeout if timeout is not None else self.timeout)
                send_frame(sock, msg_type, body)
                return recv_frame(sock)
            except (OSError, ConnectionError, SerializationError):
                self._close_locked()
                raise

    def _close_locked(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def close(self) -> None:
        with self._lock:
            self._close_locked()
