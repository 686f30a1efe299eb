"""
提交事件订阅套接字

服务端在连接建立后推送之后提交的每个事件; 客户端把收到的事件交给本地的
Housekeeper, 从而复用按 tx_id 等待的逻辑.
"""

from __future__ import annotations

import logging
import socket
import threading
from typing import TYPE_CHECKING

from app.infrastructure.error_handling_service import SerializationError
from app.ledger.codec import U32
from app.ordering.wire import FrameServer, recv_exact
from app.validator.events import decode_event, encode_event
from app.validator.housekeeping import Housekeeper

if TYPE_CHECKING:
    from app.validator.events import CommitEvent

logger = logging.getLogger(__name__)

# 服务端订阅完成后发送, 客户端收到后才返回
READY = b"\x01"


class EventStreamServer:
    def __init__(self, housekeeper: Housekeeper, host: str, port: int, name: str = "peer") -> None:
        self.housekeeper = housekeeper
        self._stop = threading.Event()
        self._server = FrameServer(host, port, self._serve, name=f"{name}-events")

    @property
    def address(self) -> tuple[str, int]:
        return self._server.address

    def start(self) -> EventStreamServer:
        self._server.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        self._server.stop()

    def _serve(self, sock: socket.socket) -> None:
        sub = self.housekeeper.subscribe()
        try:
            sock.sendall(READY)
            while not self._stop.is_set():
                event = sub.get(timeout=0.2)
                if event is not None:
                    sock.sendall(encode_event(event))
        finally:
            self.housekeeper.unsubscribe(sub)


class EventStreamClient:
    def __init__(
        self, address: tuple[str, int], timeout: float = 5.0, index_capacity: int = 0
    ) -> None:
        self.address = address
        self.events = Housekeeper(index_capacity=index_capacity)
        self._sock = socket.create_connection(address, timeout=timeout)
        if recv_exact(self._sock, len(READY)) != READY:
            self._sock.close()
            raise SerializationError(f"unexpected handshake from event stream {address}")
        self._sock.settimeout(None)
        self._closed = threading.Event()
        self._thread = threading.Thread(target=self._read_loop, name="event-client", daemon=True)
        self._thread.start()

    def _read_loop(self) -> None:
        try:
            while not self._closed.is_set():
                header = recv_exact(self._sock, U32.size)
                (length,) = U32.unpack(header)
                self.events.handle(decode_event(header + recv_exact(self._sock, length)))
        except (OSError, ConnectionError, SerializationError) as e:
            if not self._closed.is_set():
                logger.warning("提交事件流 %s:%d 中断: %s", *self.address, e)

    def wait_for_tx(self, tx_id: bytes, timeout: float | None = None) -> CommitEvent | None:
        return self.events.wait_for_tx(tx_id, timeout)

    def close(self) -> None:
        self._closed.set()
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()
        self._thread.join(timeout=2)
