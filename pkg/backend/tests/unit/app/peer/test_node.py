#!/usr/bin/env python3
"""
peer 节点组装、恢复与检查点单元测试
"""

import pytest

from app.chaincode.base import Proposal
from app.infrastructure.error_handling_service import PersistenceError
from app.ledger.codec import serialize_tx
from app.ordering.solo import SoloOrderer
from app.peer.node import PeerNode
from app.state.statedb import CHECKPOINT_FILE, StateDb
from app.validator.events import ValidationCode
from app.validator.pipeline import PipelineConfig, PipelineMode
from tests.fixtures.factories import kv_key, make_tx

CONFIG = PipelineConfig(sig_workers=2, queue_capacity=8)


@pytest.fixture
def make_peer(tmp_path, identities, membership, policies, fast_batcher):
    created = []

    def factory(config=CONFIG):
        peer = PeerNode(
            identities["peer0"],
            tmp_path / "peer0",
            membership,
            policies,
            config=config,
            batcher=fast_batcher,
            stripes=8,
        )
        created.append(peer)
        return peer

    yield factory
    for peer in created:
        peer.stop()


@pytest.fixture
def solo():
    orderer = SoloOrderer()
    yield orderer
    orderer.stop()


def submit(orderer, peer, tx):
    orderer.order(serialize_tx(tx))
    return peer.wait_for_tx(tx.tx_id, timeout=10)


class TestPeerLifecycle:
    """peer 启动与提交测试"""

    def test_commits_from_ordering(self, make_peer, solo, identities):
        """测试订阅排序服务并提交交易"""
        peer = make_peer().start(solo)
        tx = make_tx(identities, reads={kv_key("a"): 0}, writes={kv_key("a"): b"1"})
        event = submit(solo, peer, tx)
        assert event.valid and event.seq == 1
        assert peer.lookup_tx(tx.tx_id) == event
        assert peer.state.get(kv_key("a")).value == b"1"
        assert peer.last_seq == 1

    def test_endorser_sees_committed_state(self, make_peer, solo, identities):
        """测试背书读取的是已提交状态"""
        peer = make_peer().start(solo)
        submit(solo, peer, make_tx(identities, writes={kv_key("a"): b"1"}))
        response = peer.endorser.endorse(Proposal("kv", "read", (b"a",)))
        assert response.response == b"1"
        assert response.rwset.reads == ((kv_key("a"), 1),)

    def test_block_mode(self, make_peer, solo, identities):
        """测试基线模式按区块提交"""
        config = PipelineConfig(sig_workers=2, queue_capacity=8, mode=PipelineMode.BLOCK, block_size=2, block_timeout_ms=20)
        for i in range(3):
            solo.order(serialize_tx(make_tx(identities, writes={kv_key(f"k{i}"): b"v"})))
        peer = make_peer(config).start(solo)
        assert peer.pipeline.wait_committed(3, timeout=10)
        assert peer.status()["blocks"] == 2
        assert peer.ledger.log._flusher is None

    def test_status(self, make_peer):
        """测试状态信息"""
        status = make_peer().status()
        assert status["peer_id"] == "peer0"
        assert status["mode"] == "stream"
        assert status["last_seq"] == 0
        assert status["halted"] is False
        assert "hit_rate" in status["cache"]


class TestPeerRecovery:
    """重启恢复测试"""

    def test_replays_ledger(self, make_peer, solo, identities):
        """测试重启后由账本重放出相同状态, 旧 tx_id 仍判为重复"""
        peer = make_peer().start(solo)
        txs = [make_tx(identities, writes={kv_key(f"k{i}"): b"v"}) for i in range(5)]
        for tx in txs:
            submit(solo, peer, tx)
        digest = peer.state_digest()
        peer.stop()

        again = make_peer()
        assert again.state_digest() == digest
        assert again.state.last_applied_seq == 5
        assert again.pipeline.next_seq == 6
        assert txs[0].tx_id in again.committer.seen_tx_ids

    def test_resumes_and_rejects_replayed_tx(self, make_peer, solo, identities):
        """测试重启后继续订阅, 重复提交的旧交易无效"""
        peer = make_peer().start(solo)
        tx = make_tx(identities, writes={kv_key("a"): b"1"})
        submit(solo, peer, tx)
        peer.stop()

        again = make_peer().start(solo)
        solo.order(serialize_tx(tx))
        assert again.pipeline.wait_committed(2, timeout=10)
        assert not again.ledger.read(2).valid

    def test_checkpoint_then_replay_suffix(self, make_peer, solo, identities):
        """测试从检查点恢复并重放其后的记录"""
        peer = make_peer().start(solo)
        for i in range(3):
            submit(solo, peer, make_tx(identities, writes={kv_key(f"k{i}"): b"v"}))
        assert peer.checkpoint() == 3
        assert peer.checkpoint_seq == 3
        submit(solo, peer, make_tx(identities, writes={kv_key("k9"): b"w"}))
        digest = peer.state_digest()
        peer.stop()

        again = make_peer()
        assert again.state_digest() == digest
        assert again.state.last_applied_seq == 4

    def test_checkpoint_ahead_of_ledger_ignored(self, make_peer, tmp_path):
        """测试检查点领先于账本时被忽略"""
        state = StateDb(stripe_count=8)
        state.apply_writes(((kv_key("ghost"), b"x"),), 10)
        (tmp_path / "peer0").mkdir()
        state.write_checkpoint(tmp_path / "peer0", fsync=False)
        peer = make_peer()
        assert len(peer.state) == 0
        assert peer.state.last_applied_seq == 0

    def test_corrupt_checkpoint_falls_back(self, make_peer, solo, identities, tmp_path):
        """测试检查点损坏时从账本全量重放"""
        peer = make_peer().start(solo)
        submit(solo, peer, make_tx(identities, writes={kv_key("a"): b"1"}))
        digest = peer.state_digest()
        peer.stop()
        (tmp_path / "peer0" / CHECKPOINT_FILE).write_bytes(b"\x01")
        assert make_peer().state_digest() == digest

    def test_checkpoint_on_halted_peer(self, make_peer):
        """测试停机后不能写检查点"""
        peer = make_peer()
        peer.guard.halt(PersistenceError("disk"))
        with pytest.raises(PersistenceError):
            peer.checkpoint()

    def test_invalid_records_replay_as_no_ops(self, make_peer, solo, identities):
        """测试无效记录在重放时不修改状态"""
        peer = make_peer().start(solo)
        stale = make_tx(identities, reads={kv_key("a"): 7}, writes={kv_key("a"): b"1"})
        assert submit(solo, peer, stale).code is ValidationCode.MVCC_CONFLICT
        peer.stop()
        again = make_peer()
        assert again.state.get(kv_key("a")) is None
        assert again.state.last_applied_seq == 1
