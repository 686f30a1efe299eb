"""
远程排序服务客户端: 自动跟随 leader 重定向, 订阅连接断开后换节点续传
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from typing import TYPE_CHECKING

from app.infrastructure.error_handling_service import (
    ErrorContext,
    LedgerError,
    NotFoundError,
    OrderingTimeoutError,
    RetentionError,
    SerializationError,
)
from app.ordering import wire
from app.ordering.types import Block, OrderedEntry
from app.ordering.wire import (
    AckStatus,
    DeliverKind,
    FetchMode,
    FetchRequest,
    FrameClient,
    MsgType,
    recv_frame,
    send_frame,
)

if TYPE_CHECKING:
    from collections.abc import Iterator

logger = logging.getLogger(__name__)

RETRY_BACKOFF_S = 0.05


class RemoteOrderer:
    def __init__(
        self,
        addresses: dict[str, tuple[str, int]],
        timeout: float = 5.0,
    ) -> None:
        if not addresses:
            raise ValueError("at least one orderer address is required")
        self.addresses = addresses
        self.timeout = timeout
        self._clients = {nid: FrameClient(addr, timeout=timeout) for nid, addr in addresses.items()}
        self._leader = next(iter(addresses))
        self._lock = threading.Lock()
        self._closed = threading.Event()
        self._streams: set[socket.socket] = set()

    @property
    def stopped(self) -> bool:
        return self._closed.is_set()

    def _candidates(self) -> list[str]:
        with self._lock:
            leader = self._leader
        return [leader, *(n for n in self.addresses if n != leader)]

    def order(self, payload: bytes) -> int:
        deadline = time.monotonic() + self.timeout
        last_error = "no orderer reachable"
        while time.monotonic() < deadline:
            for node_id in self._candidates():
                try:
                    _, body = self._clients[node_id].request(
                        MsgType.SUBMIT, payload, timeout=max(deadline - time.monotonic(), 0.1)
                    )
                    ack = wire.decode_submit_ack(body)
                except (OSError, ConnectionError, SerializationError) as e:
                    last_error = f"{node_id}: {e}"
                    continue
                if ack.status is AckStatus.OK:
                    with self._lock:
                        self._leader = node_id
                    return ack.seq
                if ack.status is AckStatus.NOT_LEADER and ack.detail in self.addresses:
                    with self._lock:
                        self._leader = ack.detail
                    last_error = f"{node_id}: redirected to {ack.detail}"
                    break
                if ack.status is AckStatus.ERROR:
                    raise LedgerError(f"{node_id} rejected the submission: {ack.detail}")
                last_error = f"{node_id}: {ack.status.name} {ack.detail}"
            time.sleep(RETRY_BACKOFF_S)
        raise OrderingTimeoutError(
            f"order not acknowledged within {self.timeout}s ({last_error})",
            context=ErrorContext(operation="order", component="client"),
        )

    def _ask_any(self, msg_type: MsgType, body: bytes) -> bytes:
        for node_id in self._candidates():
            try:
                _, reply = self._clients[node_id].request(msg_type, body)
                return reply
            except (OSError, ConnectionError, SerializationError):
                continue
        raise OrderingTimeoutError("no orderer reachable")

    def get(self, seq: int) -> OrderedEntry:
        reply = wire.decode_deliver(self._ask_any(MsgType.FETCH, wire.encode_fetch(FetchRequest(seq))))
        if isinstance(reply, OrderedEntry):
            return reply
        if isinstance(reply, tuple) and reply[0] is DeliverKind.RESTART_FROM:
            raise RetentionError(f"seq {seq} no longer retained", restart_from=reply[1])
        raise NotFoundError(f"seq {seq} not ordered", seq=seq)

    def get_last(self) -> tuple[int, OrderedEntry] | None:
        reply = wire.decode_deliver(self._ask_any(MsgType.GET_LAST, b""))
        if isinstance(reply, OrderedEntry):
            return reply.seq, reply
        return None

    @property
    def last_seq(self) -> int:
        last = self.get_last()
        return 0 if last is None else last[0]

    def wait_for(self, seq: int, timeout: float | None = None) -> bool:
        deadline = None if timeout is None else time.monotonic() + timeout
        while not self._closed.is_set():
            if self.last_seq >= seq:
                return True
            if deadline is not None and time.monotonic() >= deadline:
                return False
            time.sleep(0.01)
        return False

    def subscribe(
        self,
        from_seq: int = 1,
        mode: FetchMode = FetchMode.STREAM,
        block_size: int = 0,
        block_timeout_ms: int = 0,
        stop: threading.Event | None = None,
    ) -> Iterator[OrderedEntry | Block]:
        """专用连接上的推送订阅; 连接断开后从下一个序号换节点续订"""
        next_seq = from_seq
        while not self._closed.is_set() and (stop is None or not stop.is_set()):
            for node_id in self._candidates():
                try:
                    sock = socket.create_connection(self.addresses[node_id], timeout=self.timeout)
                except OSError:
                    continue
                with self._lock:
                    self._streams.add(sock)
                try:
                    sock.settimeout(None)
                    send_frame(
                        sock,
                        MsgType.FETCH,
                        wire.encode_fetch(FetchRequest(next_seq, mode, block_size, block_timeout_ms)),
                    )
                    while stop is None or not stop.is_set():
                        _, body = recv_frame(sock)
                        item = wire.decode_deliver(body)
                        if isinstance(item, tuple):
                            kind, seq = item
                            if kind is DeliverKind.RESTART_FROM:
                                raise RetentionError("subscriber fell behind", restart_from=seq)
                            continue
                        next_seq = (item.last_seq if isinstance(item, Block) else item.seq) + 1
                        yield item
                    return
                except (OSError, ConnectionError, SerializationError) as e:
                    if self._closed.is_set():
                        return
                    logger.warning("订阅连接 %s 中断 (%s), 从 %d 续订", node_id, e, next_seq)
                finally:
                    with self._lock:
                        self._streams.discard(sock)
                    sock.close()
            time.sleep(RETRY_BACKOFF_S)

    def close(self) -> None:
        self._closed.set()
        with self._lock:
            streams = list(self._streams)
        for sock in streams:
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        for client in self._clients.values():
            client.close()
