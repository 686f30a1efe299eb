"""
Raft 节点间 RPC 传输: 进程内 (测试与单机运行, 支持隔离故障注入) 与 TCP
"""

from __future__ import annotations

import logging
import threading
from typing import TYPE_CHECKING

from app.infrastructure.error_handling_service import SerializationError
from app.ordering import wire
from app.ordering.wire import FrameClient, MsgType

if TYPE_CHECKING:
    from app.ordering.raft import (
        AppendRequest,
        AppendResponse,
        RaftNode,
        VoteRequest,
        VoteResponse,
    )

logger = logging.getLogger(__name__)


class LocalTransport:
    """同一进程内的节点直接互调; 被隔离或未注册的节点视为不可达"""

    def __init__(self) -> None:
        self._nodes: dict[str, RaftNode] = {}
        self._isolated: set[str] = set()
        self._lock = threading.Lock()

    def register(self, node: RaftNode) -> None:
        with self._lock:
            self._nodes[node.node_id] = node

    def unregister(self, node_id: str) -> None:
        with self._lock:
            self._nodes.pop(node_id, None)

    def isolate(self, node_id: str) -> None:
        with self._lock:
            self._isolated.add(node_id)

    def heal(self, node_id: str) -> None:
        with self._lock:
            self._isolated.discard(node_id)

    def _reachable(self, source: str, target: str) -> RaftNode | None:
        with self._lock:
            if source in self._isolated or target in self._isolated:
                return None
            node = self._nodes.get(target)
        if node is None or node.stopped:
            return None
        return node

    def append_entries(self, target: str, request: AppendRequest) -> AppendResponse | None:
        node = self._reachable(request.leader_id, target)
        return None if node is None else node.handle_append(request)

    def request_vote(self, target: str, request: VoteRequest) -> VoteResponse | None:
        node = self._reachable(request.candidate_id, target)
        return None if node is None else node.handle_vote(request)


class TcpTransport:
    """每个目标节点一条持久连接"""

    def __init__(self, addresses: dict[str, tuple[str, int]], timeout: float = 1.0) -> None:
        self.addresses = addresses
        self.timeout = timeout
        self._clients = {
            node_id: FrameClient(addr, timeout=timeout) for node_id, addr in addresses.items()
        }

    def _call(self, target: str, msg_type: MsgType, body: bytes, expect: MsgType) -> bytes | None:
        client = self._clients.get(target)
        if client is None:
            return None
        try:
            reply_type, reply = client.request(msg_type, body)
        except (OSError, ConnectionError, SerializationError) as e:
            logger.debug("RPC %s -> %s 失败: %s", msg_type.name, target, e)
            return None
        if reply_type is not expect:
            logger.warning("%s 返回了意外的消息类型 %s", target, reply_type.name)
            return None
        return reply

    def append_entries(self, target: str, request: AppendRequest) -> AppendResponse | None:
        reply = self._call(target, MsgType.APPEND, wire.encode_append(request), MsgType.APPEND_ACK)
        return None if reply is None else wire.decode_append_ack(reply)

    def request_vote(self, target: str, request: VoteRequest) -> VoteResponse | None:
        reply = self._call(target, MsgType.VOTE_REQ, wire.encode_vote_req(request), MsgType.VOTE_RESP)
        return None if reply is None else wire.decode_vote_resp(reply)

    def close(self) -> None:
        for client in self._clients.values():
            client.close()
