from __future__ import annotations

from fastapi import HTTPException, Request, status

from app.peer.node import PeerNode


def get_peer(request: Request) -> PeerNode:
    peer = getattr(request.app.state, "peer", None)
    if peer is None:
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail="peer is not attached to this admin endpoint",
        )
    return peer
