"""
peer 管理端点的 FastAPI 应用

net start 为验证 peer 创建应用并由 uvicorn 提供服务; 应用关闭时一并停止网络.
"""

from __future__ import annotations

import logging
from contextlib import asynccontextmanager
from typing import TYPE_CHECKING

from fastapi import FastAPI

from app.api.v1 import admin as admin_v1
from app.api.v1 import health as health_v1

if TYPE_CHECKING:
    from collections.abc import AsyncIterator

    from app.peer.network import Network
    from app.peer.node import PeerNode

logger = logging.getLogger(__name__)
logging.getLogger("uvicorn.access").setLevel(logging.WARNING)


def create_app(peer: PeerNode | None = None, network: Network | None = None) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI) -> AsyncIterator[None]:
        logger.info("管理端点启动: peer=%s", peer.peer_id if peer is not None else "-")
        yield
        logger.info("管理端点关闭")
        if network is not None:
            network.stop()

    app = FastAPI(title="flowledger peer admin", version="1.0.0", lifespan=lifespan)
    app.state.peer = peer
    app.state.network = network
    app.include_router(health_v1.router, tags=["Health"])
    app.include_router(admin_v1.router, tags=["Admin"])
    return app
