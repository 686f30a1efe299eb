"""peer 管理接口: 提交进度、检查点、指标与交易查询"""

from __future__ import annotations

import logging
from typing import Any

from fastapi import APIRouter, Depends, HTTPException, status

from app.api.deps import get_peer
from app.infrastructure.error_handling_service import LedgerError
from app.ledger.types import TX_ID_SIZE
from app.peer.node import PeerNode
from app.schemas.admin import CheckpointResponse, LastSeqResponse, TxStatusResponse

logger = logging.getLogger(__name__)
router = APIRouter(prefix="/admin")


@router.get("/last-seq", response_model=LastSeqResponse)
def last_seq(peer: PeerNode = Depends(get_peer)) -> LastSeqResponse:
    return LastSeqResponse(
        peer_id=peer.peer_id,
        last_seq=peer.last_seq,
        head_hash=peer.ledger.head_hash.hex(),
    )


@router.post("/checkpoint", response_model=CheckpointResponse)
def trigger_checkpoint(peer: PeerNode = Depends(get_peer)) -> CheckpointResponse:
    """立即写一次状态检查点"""
    try:
        seq = peer.checkpoint()
    except LedgerError as e:
        logger.exception("手动检查点失败")
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=e.to_dict()
        ) from e
    return CheckpointResponse(peer_id=peer.peer_id, checkpoint_seq=seq)


@router.get("/metrics")
def metrics(peer: PeerNode = Depends(get_peer)) -> dict[str, Any]:
    return {
        "status": peer.status(),
        "metrics": peer.monitor.get_summary(),
    }


@router.get("/tx/{tx_id}", response_model=TxStatusResponse)
def tx_status(tx_id: str, peer: PeerNode = Depends(get_peer)) -> TxStatusResponse:
    """按 tx_id (32 位十六进制) 查询提交结果"""
    try:
        raw = bytes.fromhex(tx_id)
    except ValueError:
        raw = b""
    if len(raw) != TX_ID_SIZE:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=f"tx_id must be {TX_ID_SIZE * 2} hex characters",
        )
    event = peer.lookup_tx(raw)
    if event is None:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="transaction not committed")
    return TxStatusResponse.from_event(event)


@router.get("/state-digest")
def state_digest(peer: PeerNode = Depends(get_peer)) -> dict[str, Any]:
    return {
        "peer_id": peer.peer_id,
        "last_applied_seq": peer.state.last_applied_seq,
        "digest": peer.state_digest(),
    }
