"""
单机网络组装: 身份与成员表、排序服务、peer 节点、可选的套接字服务

sockets=False 时所有组件在进程内直接调用; sockets=True 时额外在回环地址上
启动排序、背书和提交事件服务, 客户端网关全部走套接字.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import TYPE_CHECKING

from app.bench.gateway import Gateway
from app.core.security import (
    BOOTSTRAP_FILE,
    load_or_create_identities,
    membership_of,
)
from app.endorser.policy import PolicyBook
from app.endorser.remote import EndorserServer, RemoteEndorser
from app.infrastructure.monitoring import PerformanceMonitor
from app.jobs.checkpoint import CheckpointScheduler
from app.ordering.client import RemoteOrderer
from app.ordering.cluster import RaftCluster
from app.ordering.raft import RaftConfig
from app.ordering.server import OrdererServer
from app.ordering.solo import SoloOrderer
from app.peer.event_stream import EventStreamClient, EventStreamServer
from app.peer.node import PeerNode
from app.persistence.batcher import BatcherConfig
from app.validator.pipeline import PipelineConfig

if TYPE_CHECKING:
    from app.core.config import Settings

logger = logging.getLogger(__name__)

CLIENT_ID = "client"
KEY_DIR = "keys"
EVENT_PORT_OFFSET = 100


def _port(base: int, index: int) -> int:
    """base 为 0 时每个服务都用临时端口"""
    return 0 if base == 0 else base + index


class Network:
    def __init__(
        self,
        settings: Settings,
        data_dir: str | Path | None = None,
        sockets: bool = False,
    ) -> None:
        self.settings = settings
        self.data_dir = Path(data_dir or settings.DATA_DIR)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.sockets = sockets

        identities = load_or_create_identities(
            self.data_dir / KEY_DIR, [*settings.peer_ids, CLIENT_ID], crypto=settings.CRYPTO
        )
        self.identities = {i.id: i for i in identities}
        self.membership = membership_of(identities, crypto=settings.CRYPTO)
        self.membership.write_bootstrap(self.data_dir / BOOTSTRAP_FILE)
        self.policies = PolicyBook.from_settings(settings)
        self.batcher = BatcherConfig.from_settings(settings)
        self.pipeline_config = PipelineConfig.from_settings(settings)

        self.ordering: SoloOrderer | RaftCluster
        if settings.NET_ORDERERS == 1:
            self.ordering = SoloOrderer(
                self.data_dir / "orderers" / settings.orderer_ids[0],
                batcher=self.batcher,
                node_id=settings.orderer_ids[0],
            )
        else:
            self.ordering = RaftCluster(
                settings.orderer_ids,
                self.data_dir / "orderers",
                config=RaftConfig.from_settings(settings),
                batcher=self.batcher,
            )

        self.peers: dict[str, PeerNode] = {}
        for peer_id in settings.peer_ids:
            self.peers[peer_id] = PeerNode(
                self.identities[peer_id],
                self.data_dir / "peers" / peer_id,
                self.membership,
                self.policies,
                config=self.pipeline_config,
                batcher=self.batcher,
                stripes=settings.STRIPES,
                monitor=PerformanceMonitor(name=peer_id),
            )

        self.orderer_servers: dict[str, OrdererServer] = {}
        self.endorser_servers: dict[str, EndorserServer] = {}
        self.event_server: EventStreamServer | None = None
        self._remote_orderers: list[RemoteOrderer] = []
        self._gateways: list[Gateway] = []
        self.scheduler = CheckpointScheduler(settings.CHECKPOINT_INTERVAL_S)

    @property
    def validating_peer(self) -> PeerNode:
        """客户端等待其提交事件的 peer"""
        return self.peers[self.settings.peer_ids[0]]

    # --- 生命周期 ---

    def start(self) -> Network:
        self.ordering.start()
        if isinstance(self.ordering, RaftCluster):
            leader = self.ordering.wait_for_leader()
            logger.info("排序集群已选出 leader %s", leader.node_id)
        if self.sockets:
            self._start_servers()
        for peer in self.peers.values():
            peer.start(self._peer_ordering())
            self.scheduler.add_peer(peer)
        self.scheduler.start()
        if self.settings.MONITORING_ENABLED:
            self.validating_peer.monitor.start_monitoring()
        logger.info(
            "网络启动: %d peers, %d orderers, mode=%s, %s",
            len(self.peers),
            self.settings.NET_ORDERERS,
            self.settings.MODE,
            "socket" if self.sockets else "in-process",
        )
        return self

    def _start_servers(self) -> None:
        host = self.settings.HOST
        if isinstance(self.ordering, SoloOrderer):
            services = {self.ordering.node_id: self.ordering}
        else:
            services = dict(self.ordering.nodes)
        for i, node_id in enumerate(self.settings.orderer_ids):
            server = OrdererServer(services[node_id], host, _port(self.settings.ORDERER_BASE_PORT, i))
            self.orderer_servers[node_id] = server.start()
        for i, (peer_id, peer) in enumerate(self.peers.items()):
            server = EndorserServer(peer.endorser, host, _port(self.settings.PEER_BASE_PORT, i))
            self.endorser_servers[peer_id] = server.start()
        self.event_server = EventStreamServer(
            self.validating_peer.housekeeper,
            host,
            _port(self.settings.PEER_BASE_PORT, EVENT_PORT_OFFSET),
            name=self.validating_peer.peer_id,
        ).start()

    def orderer_addresses(self) -> dict[str, tuple[str, int]]:
        return {nid: s.address for nid, s in self.orderer_servers.items()}

    def _remote_orderer(self) -> RemoteOrderer:
        client = RemoteOrderer(self.orderer_addresses(), timeout=self.settings.ORDER_TIMEOUT_S)
        self._remote_orderers.append(client)
        return client

    def _peer_ordering(self) -> SoloOrderer | RaftCluster | RemoteOrderer:
        return self._remote_orderer() if self.sockets else self.ordering

    def gateway(self) -> Gateway:
        """客户端网关; 每个客户端线程各用一个"""
        client = self.identities[CLIENT_ID]
        if not self.sockets:
            gw = Gateway(
                client,
                [p.endorser for p in self.peers.values()],
                self.ordering,
                self.validating_peer,
                self.policies,
                transport="in-process",
                endorse_retries=self.settings.ENDORSE_RETRIES,
            )
        else:
            assert self.event_server is not None
            endorsers = [
                RemoteEndorser(pid, s.address, timeout=self.settings.OP_TIMEOUT_S)
                for pid, s in self.endorser_servers.items()
            ]
            events = EventStreamClient(
                self.event_server.address, index_capacity=self.settings.TX_INDEX_CAPACITY
            )
            gw = Gateway(
                client,
                endorsers,
                self._remote_orderer(),
                events,
                self.policies,
                transport="socket",
                endorse_retries=self.settings.ENDORSE_RETRIES,
                on_close=[*(e.close for e in endorsers), events.close],
            )
        self._gateways.append(gw)
        return gw

    def wait_idle(self, timeout: float = 30.0) -> bool:
        """等所有 peer 提交到排序服务当前末尾"""
        target = self.ordering.last_seq
        return all(p.pipeline.wait_committed(target, timeout) for p in self.peers.values())

    def stop(self) -> None:
        self.scheduler.shutdown()
        for gw in self._gateways:
            gw.close()
        for client in self._remote_orderers:
            client.close()
        for peer in self.peers.values():
            peer.stop()
        if self.event_server is not None:
            self.event_server.stop()
        for server in [*self.endorser_servers.values(), *self.orderer_servers.values()]:
            server.stop()
        self.ordering.stop()
        self.validating_peer.monitor.stop_monitoring()
        logger.info("网络已停止")
