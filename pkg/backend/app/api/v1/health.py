"""节点健康检查接口

peer 一旦停机 (持久化或提交失败) 即报告 unhealthy
"""

from __future__ import annotations

import logging
from datetime import datetime
from typing import Any

from fastapi import APIRouter, Depends
from fastapi.responses import JSONResponse

from app.api.deps import get_peer
from app.peer.node import PeerNode

logger = logging.getLogger(__name__)
router = APIRouter()


class HealthChecker:
    """汇总流水线各阶段的状态"""

    HTTP_OK = 200
    HTTP_UNAVAILABLE = 503

    def check(self, peer: PeerNode) -> dict[str, Any]:
        guard = peer.guard
        housekeeper = peer.housekeeper
        pipeline = {
            "status": "unhealthy" if guard.halted else "healthy",
            "last_seq": peer.last_seq,
            "mode": peer.config.mode.value,
        }
        if guard.halted:
            pipeline["error"] = str(guard.cause)
        stage3 = {
            "status": "healthy",
            "queued": housekeeper.queued,
            "backpressure_events": housekeeper.backpressure_events,
        }
        services = {"pipeline": pipeline, "housekeeping": stage3}
        return {
            "status": pipeline["status"],
            "peer_id": peer.peer_id,
            "timestamp": datetime.now().isoformat(),
            "services": services,
        }


health_checker = HealthChecker()


@router.get("/health")
def health_check(peer: PeerNode = Depends(get_peer)) -> JSONResponse:
    """
    节点健康检查

    Returns:
        JSONResponse: 健康时 200, 已停机时 503
    """
    try:
        result = health_checker.check(peer)
    except Exception:
        logger.exception("健康检查失败")
        return JSONResponse(
            status_code=HealthChecker.HTTP_UNAVAILABLE,
            content={
                "status": "unhealthy",
                "error": "health check failed",
                "timestamp": datetime.now().isoformat(),
            },
        )
    status_code = (
        HealthChecker.HTTP_OK if result["status"] == "healthy" else HealthChecker.HTTP_UNAVAILABLE
    )
    return JSONResponse(status_code=status_code, content=result)
