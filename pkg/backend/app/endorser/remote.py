"""
背书的套接字通道: ENDORSE 请求 / ENDORSE_RESP 响应
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

from app.chaincode.base import Proposal
from app.endorser.endorser import EndorsementResponse
from app.infrastructure.error_handling_service import (
    EndorsementError,
    LedgerError,
    SerializationError,
)
from app.ledger.codec import Reader, Writer, deserialize_rwset
from app.ordering.wire import FrameClient, FrameServer, MsgType, recv_frame, send_frame

if TYPE_CHECKING:
    import socket

    from app.endorser.endorser import Endorser

logger = logging.getLogger(__name__)

STATUS_OK = 0
STATUS_REFUSED = 1


def encode_proposal(proposal: Proposal) -> bytes:
    w = Writer().text(proposal.chaincode_id).text(proposal.function).text(proposal.client_id)
    w.u32(len(proposal.args))
    for arg in proposal.args:
        w.blob(arg)
    return w.getvalue()


def decode_proposal(body: bytes) -> Proposal:
    r = Reader(body)
    chaincode_id, function, client_id = r.text(), r.text(), r.text()
    args = tuple(r.blob() for _ in range(r.u32()))
    r.expect_end()
    return Proposal(chaincode_id, function, args, client_id)


def encode_response(response: EndorsementResponse) -> bytes:
    return (
        Writer()
        .u8(STATUS_OK)
        .text(response.endorser_id)
        .blob(response.rwset_bytes)
        .blob(response.signature)
        .blob(response.response)
        .getvalue()
    )


def encode_refusal(reason: str) -> bytes:
    return Writer().u8(STATUS_REFUSED).text(reason).getvalue()


def decode_response(body: bytes) -> EndorsementResponse:
    r = Reader(body)
    if r.u8() != STATUS_OK:
        raise EndorsementError(r.text())
    endorser_id = r.text()
    rwset_bytes = r.blob()
    signature = r.blob()
    response = r.blob()
    r.expect_end()
    return EndorsementResponse(
        endorser_id=endorser_id,
        rwset=deserialize_rwset(rwset_bytes),
        signature=signature,
        response=response,
        rwset_bytes=rwset_bytes,
    )


class EndorserServer:
    def __init__(self, endorser: Endorser, host: str, port: int) -> None:
        self.endorser = endorser
        self._server = FrameServer(host, port, self._serve, name=f"{endorser.endorser_id}-endorser")

    @property
    def address(self) -> tuple[str, int]:
        return self._server.address

    def start(self) -> EndorserServer:
        self._server.start()
        return self

    def stop(self) -> None:
        self._server.stop()

    def _serve(self, sock: socket.socket) -> None:
        while True:
            msg_type, body = recv_frame(sock)
            if msg_type is not MsgType.ENDORSE:
                raise SerializationError(f"endorser cannot handle {msg_type.name}")
            try:
                reply = encode_response(self.endorser.endorse(decode_proposal(body)))
            except LedgerError as e:
                reply = encode_refusal(e.message)
            send_frame(sock, MsgType.ENDORSE_RESP, reply)


class RemoteEndorser:
    """远程背书节点; 与进程内 Endorser 实现同一接口"""

    def __init__(self, endorser_id: str, address: tuple[str, int], timeout: float = 5.0) -> None:
        self._endorser_id = endorser_id
        self._client = FrameClient(address, timeout=timeout)

    @property
    def endorser_id(self) -> str:
        return self._endorser_id

    def endorse(self, proposal: Proposal) -> EndorsementResponse:
        try:
            reply_type, body = self._client.request(MsgType.ENDORSE, encode_proposal(proposal))
        except (OSError, ConnectionError) as e:
            raise EndorsementError(f"{self._endorser_id} unreachable: {e}", retryable=True) from e
        if reply_type is not MsgType.ENDORSE_RESP:
            raise SerializationError(f"unexpected reply {reply_type.name}")
        return decode_response(body)

    def close(self) -> None:
        self._client.close()
