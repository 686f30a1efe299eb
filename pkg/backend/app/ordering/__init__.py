"""
排序服务: solo 与 Raft 两种后端, 流式投递与基线模式的区块切分
"""

from .block_cutter import BlockCutter, cut_block
from .client import RemoteOrderer
from .cluster import RaftCluster
from .deliver import deliver_blocks, deliver_stream
from .log import LogEntry, OrdererLog
from .raft import RaftConfig, RaftNode, Role
from .server import OrdererServer
from .solo import SoloOrderer
from .transport import LocalTransport, TcpTransport
from .types import Block, CutReason, OrderedEntry, OrderingService, payload_hash_of

__all__ = [
    "Block",
    "BlockCutter",
    "CutReason",
    "LocalTransport",
    "LogEntry",
    "OrderedEntry",
    "OrdererLog",
    "OrdererServer",
    "OrderingService",
    "RaftCluster",
    "RaftConfig",
    "RaftNode",
    "RemoteOrderer",
    "Role",
    "SoloOrderer",
    "TcpTransport",
    "cut_block",
    "deliver_blocks",
    "deliver_stream",
    "payload_hash_of",
]
