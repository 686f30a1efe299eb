"""
背书: 在本地状态快照上执行提案并对读写集签名; 客户端据此组装交易;
验证节点检查客户端签名和满足策略的背书签名.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Protocol

from app.infrastructure.error_handling_service import (
    EndorsementDivergenceError,
    EndorsementError,
    ErrorContext,
    PolicyError,
)
from app.ledger.codec import client_signed_bytes, serialize_rwset
from app.ledger.types import TX_ID_SIZE, Endorsement, ReadWriteSet, Transaction

if TYPE_CHECKING:
    from collections.abc import Sequence

    from app.chaincode.base import ChaincodeRegistry, Proposal
    from app.core.security import Identity, Membership
    from app.endorser.policy import EndorsementPolicy
    from app.infrastructure.monitoring import PerformanceMonitor
    from app.state.statedb import StateDb

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EndorsementResponse:
    endorser_id: str
    rwset: ReadWriteSet
    signature: bytes
    response: bytes = b""
    rwset_bytes: bytes = field(default=b"", repr=False)

    def __post_init__(self) -> None:
        if not self.rwset_bytes:
            object.__setattr__(self, "rwset_bytes", serialize_rwset(self.rwset))


class EndorsingPeer(Protocol):
    """进程内背书节点与远程背书客户端的共同接口"""

    @property
    def endorser_id(self) -> str: ...

    def endorse(self, proposal: Proposal) -> EndorsementResponse: ...


class Endorser:
    def __init__(
        self,
        identity: Identity,
        state: StateDb,
        registry: ChaincodeRegistry,
        monitor: PerformanceMonitor | None = None,
    ) -> None:
        self.identity = identity
        self.state = state
        self.registry = registry
        self.monitor = monitor

    @property
    def endorser_id(self) -> str:
        return self.identity.id

    def endorse(self, proposal: Proposal) -> EndorsementResponse:
        """执行提案并签名读写集; 链码失败以 EndorsementError 拒绝背书"""
        began = time.perf_counter()
        if proposal.chaincode_id not in self.registry:
            raise EndorsementError(
                f"{self.endorser_id} does not host chaincode {proposal.chaincode_id}",
                context=ErrorContext(operation="endorse", component=self.endorser_id),
            )
        result = self.registry.execute(proposal, self.state)
        if not result.ok:
            if self.monitor is not None:
                self.monitor.increment("endorse.refused")
            raise EndorsementError(
                f"{proposal.chaincode_id}.{proposal.function}: {result.error}",
                context=ErrorContext(operation="endorse", component=self.endorser_id),
            )
        rwset_bytes = serialize_rwset(result.rwset)
        response = EndorsementResponse(
            endorser_id=self.endorser_id,
            rwset=result.rwset,
            signature=self.identity.sign(rwset_bytes),
            response=result.response,
            rwset_bytes=rwset_bytes,
        )
        if self.monitor is not None:
            self.monitor.record_timing("endorse", (time.perf_counter() - began) * 1000)
        return response


def assemble_tx(
    proposal: Proposal,
    responses: Sequence[EndorsementResponse],
    policy: EndorsementPolicy,
    client: Identity,
    tx_id: bytes | None = None,
    submit_ts: int | None = None,
) -> Transaction:
    """由背书结果组装交易并附上客户端签名"""
    if not responses:
        raise PolicyError("no endorsements collected")
    rwset_bytes = responses[0].rwset_bytes
    if any(r.rwset_bytes != rwset_bytes for r in responses[1:]):
        raise EndorsementDivergenceError(
            f"endorsers returned differing read/write sets for "
            f"{proposal.chaincode_id}.{proposal.function}"
        )
    ids = [r.endorser_id for r in responses]
    if not policy.is_satisfied(ids):
        raise PolicyError(
            f"policy {policy} not satisfied by {policy.counts(ids)} endorsement(s)"
        )
    tx = Transaction(
        tx_id=tx_id if tx_id is not None else os.urandom(TX_ID_SIZE),
        chaincode_id=proposal.chaincode_id,
        args=proposal.tx_args,
        rwset=responses[0].rwset,
        endorsements=tuple(Endorsement(r.endorser_id, r.signature) for r in responses),
        client_id=client.id,
        client_sig=b"",
        submit_ts=submit_ts if submit_ts is not None else time.time_ns(),
    )
    return replace(tx, client_sig=client.sign(client_signed_bytes(tx)))


def verify_endorsement(
    tx: Transaction, policy: EndorsementPolicy | None, membership: Membership
) -> bool:
    """客户端签名有效且至少 k 个策略内成员的背书签名有效"""
    if policy is None:
        return False
    if not membership.verify(tx.client_id, tx.client_sig, client_signed_bytes(tx)):
        return False
    rwset_bytes = serialize_rwset(tx.rwset)
    verified = {
        e.endorser_id
        for e in tx.endorsements
        if e.endorser_id in policy.endorsers
        and membership.verify(e.endorser_id, e.signature, rwset_bytes)
    }
    return len(verified) >= policy.required


def collect_endorsements(
    proposal: Proposal,
    peers: Sequence[EndorsingPeer],
    policy: EndorsementPolicy,
) -> list[EndorsementResponse]:
    """按策略列表顺序向前 k 个可用背书节点请求背书"""
    by_id = {p.endorser_id: p for p in peers}
    chosen = [by_id[i] for i in policy.endorsers if i in by_id][: policy.required]
    if len(chosen) < policy.required:
        raise PolicyError(
            f"only {len(chosen)} of the {policy.required} required endorsers are reachable"
        )
    return [peer.endorse(proposal) for peer in chosen]
