#!/usr/bin/env python3
"""
pytest 配置文件
包含通用的测试工具和 fixture
"""

import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import pytest

from app.core.config import load_settings
from app.core.security import generate_identities, membership_of
from app.endorser.policy import EndorsementPolicy, PolicyBook
from app.persistence.batcher import BatcherConfig, FsyncPolicy
from app.state.statedb import StateDb

TEST_IDS = ["peer0", "peer1", "peer2", "client"]


@pytest.fixture(scope="session")
def identities():
    """真实 Ed25519 身份: 三个 peer 和一个客户端"""
    return {i.id: i for i in generate_identities(TEST_IDS, crypto="real")}


@pytest.fixture(scope="session")
def null_identities():
    """空签名身份, 用于不关心密码学开销的测试"""
    return {i.id: i for i in generate_identities(TEST_IDS, crypto="null")}


@pytest.fixture(scope="session")
def membership(identities):
    return membership_of(list(identities.values()), crypto="real")


@pytest.fixture(scope="session")
def null_membership(null_identities):
    return membership_of(list(null_identities.values()), crypto="null")


@pytest.fixture(scope="session")
def policies():
    """kv 只要 peer0 背书; scm 要三选二"""
    return PolicyBook(
        {
            "kv": EndorsementPolicy.parse("1:peer0"),
            "scm": EndorsementPolicy.parse("2:peer0,peer1,peer2"),
        }
    )


@pytest.fixture
def state():
    return StateDb(stripe_count=8)


@pytest.fixture
def fast_batcher():
    """小阈值、不 fsync 的写入批处理配置"""
    return BatcherConfig(flush_bytes=4096, flush_timeout_ms=5, fsync_policy=FsyncPolicy.NEVER)


@pytest.fixture
def make_settings(tmp_path):
    """构造指向临时目录、适合测试的单机网络配置"""

    def factory(**overrides):
        values = {
            "DATA_DIR": str(tmp_path / "net"),
            "NET_PEERS": 3,
            "NET_ORDERERS": 1,
            "CRYPTO": "null",
            "FSYNC": False,
            "FLUSH_TIMEOUT_MS": 5,
            "BLOCK_TIMEOUT_MS": 50,
            "SIG_WORKERS": 4,
            "QUEUE_CAPACITY": 64,
            "STRIPES": 8,
            "YCSB_POLICY": "1:peer0",
            "SCM_POLICY": "2:peer0,peer1,peer2",
            "ORDERER_BASE_PORT": 0,
            "PEER_BASE_PORT": 0,
            "CHECKPOINT_INTERVAL_S": 3600,
            "ELECTION_TIMEOUT_MIN_MS": 100,
            "ELECTION_TIMEOUT_MAX_MS": 200,
            "HEARTBEAT_INTERVAL_MS": 20,
            "OP_TIMEOUT_S": 10.0,
        }
        values.update(overrides)
        return load_settings(None, **values)

    return factory


@pytest.fixture
def restore_logging():
    """setup_logging 会替换根日志器的处理器, 测试结束后恢复"""
    root = logging.getLogger()
    handlers = list(root.handlers)
    level = root.level
    yield
    for handler in list(root.handlers):
        root.removeHandler(handler)
    for handler in handlers:
        root.addHandler(handler)
    root.setLevel(level)
