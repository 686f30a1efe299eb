#!/usr/bin/env python3
"""
Raft 排序节点单元测试

TestRaftHandlers 直接调用 RPC 处理函数, 不启动任何线程;
TestRaftCluster 在进程内集群上验证选举、复制与故障切换。
"""

import time

import pytest

from app.infrastructure.error_handling_service import (
    NotFoundError,
    NotLeaderError,
    OrderingTimeoutError,
)
from app.ordering.cluster import RaftCluster
from app.ordering.log import LogEntry, RaftMetaStore
from app.ordering.raft import (
    AppendRequest,
    RaftConfig,
    RaftNode,
    Role,
    VoteRequest,
)

FAST_RAFT = RaftConfig(
    election_timeout_min_ms=100,
    election_timeout_max_ms=200,
    heartbeat_interval_ms=20,
    order_timeout_s=5.0,
)


def wait_until(predicate, timeout=10.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(0.01)
    return predicate()


@pytest.fixture
def follower(tmp_path, fast_batcher):
    node = RaftNode("b", ["a", "b", "c"], tmp_path, transport=None, config=FAST_RAFT, batcher=fast_batcher)
    yield node
    node.stop()


class TestRaftConfig:
    """Raft 配置测试"""

    def test_from_settings(self, make_settings):
        """测试从配置读取选举与心跳参数"""
        config = RaftConfig.from_settings(make_settings())
        assert config.election_timeout_min_ms == 100
        assert config.heartbeat_interval_ms == 20


class TestRaftHandlers:
    """投票与追加 RPC 处理测试"""

    def test_majority(self, follower):
        """测试三节点多数派为 2"""
        assert follower.majority == 2
        assert follower.peers == ["a", "c"]

    def test_vote_once_per_term(self, follower, tmp_path):
        """测试同一 term 只投一票且持久化"""
        assert follower.handle_vote(VoteRequest(1, "a", 0, 0)).granted
        assert not follower.handle_vote(VoteRequest(1, "c", 0, 0)).granted
        assert follower.handle_vote(VoteRequest(1, "a", 0, 0)).granted
        assert RaftMetaStore(tmp_path).load() == (1, "a")

    def test_vote_requires_up_to_date_log(self, follower):
        """测试拒绝日志落后的候选者"""
        follower.handle_append(AppendRequest(1, "a", 0, 0, (LogEntry(1, b""), LogEntry(1, b"x")), 0))
        response = follower.handle_vote(VoteRequest(2, "c", 1, 1))
        assert not response.granted
        assert response.term == 2
        assert follower.handle_vote(VoteRequest(3, "c", 2, 1)).granted

    def test_append_and_commit(self, follower):
        """测试追加条目并按 leader_commit 推进提交"""
        response = follower.handle_append(
            AppendRequest(1, "a", 0, 0, (LogEntry(1, b""), LogEntry(1, b"x")), leader_commit=2)
        )
        assert response.success and response.match_index == 2
        assert follower.leader_id == "a"
        assert follower.commit_index == 2
        assert follower.last_seq == 1
        assert follower.get(1).payload == b"x"
        assert follower.get_last()[0] == 1

    def test_commit_capped_by_match(self, follower):
        """测试提交下标不超过本地已匹配的条目"""
        follower.handle_append(AppendRequest(1, "a", 0, 0, (LogEntry(1, b"x"),), leader_commit=9))
        assert follower.commit_index == 1

    def test_rejects_stale_term(self, follower):
        """测试拒绝过期 term 的追加"""
        follower.handle_vote(VoteRequest(3, "a", 0, 0))
        response = follower.handle_append(AppendRequest(2, "c", 0, 0, (), 0))
        assert not response.success
        assert response.term == 3

    def test_rejects_missing_prefix(self, follower):
        """测试前缀缺失时拒绝并给出回退提示"""
        follower.handle_append(AppendRequest(1, "a", 0, 0, (LogEntry(1, b"x"),), 0))
        response = follower.handle_append(AppendRequest(1, "a", 5, 1, (LogEntry(1, b"z"),), 0))
        assert not response.success
        assert response.match_index == 1

    def test_conflicting_suffix_is_replaced(self, follower):
        """测试未提交的冲突尾部被新 leader 的条目覆盖"""
        follower.handle_append(
            AppendRequest(1, "a", 0, 0, (LogEntry(1, b""), LogEntry(1, b"old")), leader_commit=1)
        )
        response = follower.handle_append(
            AppendRequest(2, "c", 1, 1, (LogEntry(2, b""), LogEntry(2, b"new")), leader_commit=3)
        )
        assert response.success
        assert follower.log.last_index == 3
        assert follower.last_seq == 1
        assert follower.get(1).payload == b"new"

    def test_order_on_follower(self, follower):
        """测试 follower 拒绝提交并提示 leader"""
        follower.handle_append(AppendRequest(1, "a", 0, 0, (), 0))
        with pytest.raises(NotLeaderError) as exc:
            follower.order(b"payload")
        assert exc.value.leader_hint == "a"

    def test_get_uncommitted(self, follower):
        """测试读取未提交的序号"""
        follower.handle_append(AppendRequest(1, "a", 0, 0, (LogEntry(1, b"x"),), 0))
        with pytest.raises(NotFoundError):
            follower.get(1)
        assert follower.wait_for(1, timeout=0.05) is False


class TestSingleNode:
    """单节点 Raft 测试"""

    def test_elects_itself_and_orders(self, tmp_path, fast_batcher):
        """测试单节点自行当选并直接提交"""
        cluster = RaftCluster(["o0"], tmp_path, config=FAST_RAFT, batcher=fast_batcher).start()
        try:
            leader = cluster.wait_for_leader(timeout=5)
            assert leader.node_id == "o0"
            assert cluster.order(b"a") == 1
            assert cluster.order(b"b") == 2
            assert cluster.get(2).payload == b"b"
            assert cluster.get_last()[0] == 2
        finally:
            cluster.stop()

    def test_restart_preserves_term_and_entries(self, tmp_path, fast_batcher):
        """测试重启后 term 单调且已提交条目仍在"""
        cluster = RaftCluster(["o0"], tmp_path, config=FAST_RAFT, batcher=fast_batcher).start()
        cluster.wait_for_leader(timeout=5)
        cluster.order(b"a")
        term = cluster.nodes["o0"].current_term
        cluster.kill("o0")
        cluster.restart("o0")
        try:
            leader = cluster.wait_for_leader(timeout=5)
            assert leader.current_term > term
            assert cluster.order(b"b") == 2
            assert cluster.get(1).payload == b"a"
        finally:
            cluster.stop()


@pytest.fixture
def cluster(tmp_path, fast_batcher):
    c = RaftCluster(["o0", "o1", "o2"], tmp_path, config=FAST_RAFT, batcher=fast_batcher).start()
    c.wait_for_leader(timeout=10)
    yield c
    c.stop()


class TestRaftCluster:
    """三节点集群测试"""

    def test_single_leader(self, cluster):
        """测试同一 term 只有一个 leader"""
        leader = cluster.wait_for_leader()
        leaders = [n for n in cluster.alive() if n.role is Role.LEADER and n.current_term == leader.current_term]
        assert len(leaders) == 1

    def test_replicates_to_all(self, cluster):
        """测试条目复制到全部节点且内容一致"""
        seqs = [cluster.order(f"p{i}".encode()) for i in range(10)]
        assert seqs == list(range(1, 11))
        assert wait_until(lambda: all(n.last_seq == 10 for n in cluster.alive()))
        for node in cluster.alive():
            assert [node.get(s).payload for s in seqs] == [f"p{i}".encode() for i in range(10)]

    def test_leader_crash(self, cluster):
        """测试 leader 崩溃后选出新 leader, 已确认条目不丢失"""
        for i in range(5):
            cluster.order(f"a{i}".encode())
        old = cluster.wait_for_leader()
        cluster.kill(old.node_id)
        new = cluster.wait_for_leader(timeout=10)
        assert new.node_id != old.node_id
        assert cluster.order(b"after") == 6
        assert [cluster.get(s).payload for s in range(1, 7)] == [
            b"a0", b"a1", b"a2", b"a3", b"a4", b"after"
        ]

    def test_follower_crash_and_catch_up(self, cluster):
        """测试 follower 崩溃不影响排序, 重启后追上"""
        leader = cluster.wait_for_leader()
        victim = next(n for n in cluster.node_ids if n != leader.node_id)
        cluster.kill(victim)
        for i in range(5):
            cluster.order(f"x{i}".encode())
        node = cluster.restart(victim)
        assert wait_until(lambda: node.last_seq == 5)
        assert node.get(5).payload == b"x4"

    def test_no_quorum(self, tmp_path, fast_batcher):
        """测试失去多数派后提交超时"""
        config = RaftConfig(
            election_timeout_min_ms=100,
            election_timeout_max_ms=200,
            heartbeat_interval_ms=20,
            order_timeout_s=0.5,
        )
        c = RaftCluster(["o0", "o1", "o2"], tmp_path, config=config, batcher=fast_batcher).start()
        try:
            leader = c.wait_for_leader(timeout=10)
            for node_id in [n for n in c.node_ids if n != leader.node_id]:
                c.kill(node_id)
            with pytest.raises(OrderingTimeoutError):
                c.order(b"lonely")
        finally:
            c.stop()

    def test_isolated_leader_is_replaced(self, cluster):
        """测试隔离 leader 后多数派选出更高 term 的 leader, 恢复后旧 leader 退位"""
        cluster.order(b"before")
        old = cluster.wait_for_leader()
        cluster.transport.isolate(old.node_id)
        assert wait_until(
            lambda: (current := cluster.leader()) is not None and current.node_id != old.node_id
        )
        assert cluster.order(b"during") == 2
        cluster.transport.heal(old.node_id)
        assert wait_until(lambda: old.role is Role.FOLLOWER and old.last_seq == 2)
        assert old.get(2).payload == b"during"

    def test_restart_running_node(self, cluster):
        """测试不能重启仍在运行的节点"""
        with pytest.raises(ValueError):
            cluster.restart("o0")

    def test_wait_for(self, cluster):
        """测试等待提交"""
        assert cluster.wait_for(1, timeout=0.1) is False
        cluster.order(b"a")
        assert cluster.wait_for(1, timeout=5) is True
