from __future__ import annotations

from pydantic import BaseModel

from app.validator.events import CommitEvent


class LastSeqResponse(BaseModel):
    peer_id: str
    last_seq: int
    head_hash: str


class CheckpointResponse(BaseModel):
    peer_id: str
    checkpoint_seq: int


class TxStatusResponse(BaseModel):
    tx_id: str
    seq: int
    valid: bool
    code: str | None = None
    received_ns: int
    verified_ns: int
    committed_ns: int

    @classmethod
    def from_event(cls, event: CommitEvent) -> TxStatusResponse:
        return cls(
            tx_id=event.tx_id_hex,
            seq=event.seq,
            valid=event.valid,
            code=event.code.value if event.code is not None else None,
            received_ns=event.received_ns,
            verified_ns=event.verified_ns,
            committed_ns=event.committed_ns,
        )
