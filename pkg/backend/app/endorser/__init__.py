"""
背书: 提案执行与签名、交易组装、背书策略校验
"""

from .endorser import (
    EndorsementResponse,
    Endorser,
    EndorsingPeer,
    assemble_tx,
    collect_endorsements,
    verify_endorsement,
)
from .policy import EndorsementPolicy, PolicyBook
from .remote import EndorserServer, RemoteEndorser

__all__ = [
    "EndorsementPolicy",
    "EndorsementResponse",
    "Endorser",
    "EndorserServer",
    "EndorsingPeer",
    "PolicyBook",
    "RemoteEndorser",
    "assemble_tx",
    "collect_endorsements",
    "verify_endorsement",
]
