"""
客户端网关: 背书 -> 组装 -> 排序 -> 等待提交事件

进程内和套接字两种通道实现同一组接口, 网关只记录自己走的是哪一种.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Protocol

from app.endorser.endorser import assemble_tx, collect_endorsements
from app.infrastructure.error_handling_service import (
    EndorsementError,
    ErrorContext,
    OrderingTimeoutError,
    PolicyError,
)
from app.ledger.codec import serialize_tx

if TYPE_CHECKING:
    from app.chaincode.base import Proposal
    from app.core.security import Identity
    from app.endorser.endorser import EndorsingPeer
    from app.endorser.policy import PolicyBook
    from app.ledger.types import Transaction
    from app.validator.events import CommitEvent

logger = logging.getLogger(__name__)


class Submitter(Protocol):
    def order(self, payload: bytes) -> int: ...


class CommitSource(Protocol):
    def wait_for_tx(self, tx_id: bytes, timeout: float | None = None) -> CommitEvent | None: ...


@dataclass(frozen=True)
class SubmitResult:
    tx_id: bytes
    seq: int
    submit_ns: int
    endorsed_ns: int
    ordered_ns: int
    committed_ns: int
    event: CommitEvent

    @property
    def valid(self) -> bool:
        return self.event.valid


@dataclass
class Gateway:
    client: Identity
    endorsers: Sequence[EndorsingPeer]
    orderer: Submitter
    commits: CommitSource
    policies: PolicyBook
    transport: str = "in-process"
    endorse_retries: int = 3
    on_close: list[Callable[[], None]] = field(default_factory=list)

    def endorse(self, proposal: Proposal) -> Transaction:
        """读写集不一致或背书节点暂不可达时重新背书, 最多 endorse_retries 次"""
        proposal = replace(proposal, client_id=self.client.id)
        policy = self.policies.get(proposal.chaincode_id)
        if policy is None:
            raise PolicyError(f"no endorsement policy for chaincode {proposal.chaincode_id}")
        attempt = 0
        while True:
            try:
                responses = collect_endorsements(proposal, self.endorsers, policy)
                return assemble_tx(proposal, responses, policy, self.client)
            except EndorsementError as e:
                attempt += 1
                if not e.retryable or attempt > self.endorse_retries:
                    raise
                logger.debug("重新背书 %s.%s (第 %d 次): %s", proposal.chaincode_id, proposal.function, attempt, e)

    def submit(self, proposal: Proposal, timeout: float) -> SubmitResult:
        submit_ns = time.time_ns()
        deadline = time.monotonic() + timeout
        tx = self.endorse(proposal)
        endorsed_ns = time.time_ns()
        seq = self.orderer.order(serialize_tx(tx))
        ordered_ns = time.time_ns()
        event = self.commits.wait_for_tx(tx.tx_id, max(deadline - time.monotonic(), 0.0))
        if event is None:
            raise OrderingTimeoutError(
                f"tx {tx.tx_id_hex} (seq {seq}) not committed within {timeout}s",
                context=ErrorContext(operation="await_commit", seq=seq, tx_id=tx.tx_id_hex),
            )
        return SubmitResult(
            tx_id=tx.tx_id,
            seq=seq,
            submit_ns=submit_ns,
            endorsed_ns=endorsed_ns,
            ordered_ns=ordered_ns,
            committed_ns=time.time_ns(),
            event=event,
        )

    def close(self) -> None:
        for close in self.on_close:
            close()
        self.on_close.clear()
