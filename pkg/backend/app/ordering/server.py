"""
排序节点的 TCP 服务端: 处理客户端提交、订阅拉取与 Raft 节点间 RPC
"""

from __future__ import annotations

import logging
import threading
from typing import TYPE_CHECKING

from app.infrastructure.error_handling_service import (
    LedgerError,
    NotFoundError,
    NotLeaderError,
    OrderingTimeoutError,
    RetentionError,
    SerializationError,
)
from app.ordering import wire
from app.ordering.deliver import deliver_blocks, deliver_stream
from app.ordering.raft import RaftNode
from app.ordering.wire import (
    AckStatus,
    DeliverKind,
    FetchMode,
    FetchRequest,
    FrameServer,
    MsgType,
    SubmitAck,
    recv_frame,
    send_frame,
)

if TYPE_CHECKING:
    import socket

    from app.ordering.solo import SoloOrderer

logger = logging.getLogger(__name__)


class OrdererServer:
    def __init__(self, service: RaftNode | SoloOrderer, host: str, port: int) -> None:
        self.service = service
        self._stop = threading.Event()
        self._server = FrameServer(host, port, self._serve, name=service.node_id)

    @property
    def address(self) -> tuple[str, int]:
        return self._server.address

    def start(self) -> OrdererServer:
        self._server.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        self._server.stop()

    def _serve(self, sock: socket.socket) -> None:
        while not self._stop.is_set() and not self.service.stopped:
            msg_type, body = recv_frame(sock)
            if msg_type is MsgType.SUBMIT:
                send_frame(sock, MsgType.SUBMIT_ACK, wire.encode_submit_ack(self._submit(body)))
            elif msg_type is MsgType.GET_LAST:
                last = self.service.get_last()
                reply = (
                    wire.encode_deliver_status(DeliverKind.EMPTY)
                    if last is None
                    else wire.encode_deliver_entry(last[1])
                )
                send_frame(sock, MsgType.DELIVER, reply)
            elif msg_type is MsgType.FETCH:
                request = wire.decode_fetch(body)
                if request.mode is FetchMode.SINGLE:
                    send_frame(sock, MsgType.DELIVER, self._fetch_one(request.from_seq))
                else:
                    # 订阅独占这个连接直到断开
                    self._stream(sock, request)
                    return
            elif msg_type is MsgType.APPEND and isinstance(self.service, RaftNode):
                response = self.service.handle_append(wire.decode_append(body))
                send_frame(sock, MsgType.APPEND_ACK, wire.encode_append_ack(response))
            elif msg_type is MsgType.VOTE_REQ and isinstance(self.service, RaftNode):
                response = self.service.handle_vote(wire.decode_vote_req(body))
                send_frame(sock, MsgType.VOTE_RESP, wire.encode_vote_resp(response))
            else:
                raise SerializationError(f"{self.service.node_id} cannot handle {msg_type.name}")

    def _submit(self, payload: bytes) -> SubmitAck:
        try:
            return SubmitAck(AckStatus.OK, self.service.order(payload))
        except NotLeaderError as e:
            return SubmitAck(AckStatus.NOT_LEADER, detail=e.leader_hint or "")
        except OrderingTimeoutError as e:
            return SubmitAck(AckStatus.TIMEOUT, detail=e.message)
        except (LedgerError, ValueError) as e:
            logger.error("提交失败: %s", e)
            return SubmitAck(AckStatus.ERROR, detail=str(e))

    def _fetch_one(self, seq: int) -> bytes:
        try:
            return wire.encode_deliver_entry(self.service.get(seq))
        except NotFoundError:
            return wire.encode_deliver_status(DeliverKind.NOT_FOUND, seq)
        except RetentionError as e:
            return wire.encode_deliver_status(DeliverKind.RESTART_FROM, e.restart_from)

    def _stream(self, sock: socket.socket, request: FetchRequest) -> None:
        logger.info(
            "%s 开始投递: from_seq=%d mode=%s", self.service.node_id, request.from_seq, request.mode.name
        )
        try:
            if request.mode is FetchMode.BLOCKS:
                for block in deliver_blocks(
                    self.service,
                    request.from_seq,
                    request.block_size,
                    request.block_timeout_ms / 1000,
                    stop=self._stop,
                ):
                    send_frame(sock, MsgType.DELIVER, wire.encode_deliver_block(block))
            else:
                for entry in deliver_stream(self.service, request.from_seq, stop=self._stop):
                    send_frame(sock, MsgType.DELIVER, wire.encode_deliver_entry(entry))
        except RetentionError as e:
            send_frame(
                sock, MsgType.DELIVER, wire.encode_deliver_status(DeliverKind.RESTART_FROM, e.restart_from)
            )
