"""
peer 节点与单机网络组装
"""

from .event_stream import EventStreamClient, EventStreamServer
from .network import Network
from .node import PeerNode

__all__ = [
    "EventStreamClient",
    "EventStreamServer",
    "Network",
    "PeerNode",
]
