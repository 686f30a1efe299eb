#!/usr/bin/env python3
"""
验证流水线单元测试: 流式与区块两种模式
"""

import time

import pytest

from app.infrastructure.error_handling_service import ChainIntegrityError
from app.infrastructure.monitoring import PerformanceMonitor
from app.ledger.codec import serialize_tx
from app.ordering.solo import SoloOrderer
from app.ordering.types import Block
from app.persistence.batcher import BatcherConfig, FsyncPolicy
from app.validator.events import NULL_TX_ID, ValidationCode
from app.validator.pipeline import PipelineConfig, PipelineMode, ValidatingPipeline
from app.validator.replay import verify_ledger_file
from tests.fixtures.factories import (
    MALFORMED_PAYLOAD,
    blocks_of,
    build_committer,
    entries_of,
    kv_key,
    make_tx,
    random_transcript,
)


def wait_until(predicate, timeout=10.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(0.01)
    return predicate()


def blind_payloads(identities, count):
    return [serialize_tx(make_tx(identities, writes={kv_key(f"k{i}"): b"v"})) for i in range(count)]


@pytest.fixture
def make_pipeline(tmp_path, fast_batcher, policies, membership):
    created = []

    def factory(data_dir=None, **config):
        committer = build_committer(data_dir or tmp_path, fast_batcher)
        pipeline = ValidatingPipeline(
            committer,
            policies,
            membership,
            PipelineConfig(**{"sig_workers": 4, "queue_capacity": 16, **config}),
            monitor=PerformanceMonitor("test"),
        )
        created.append(pipeline)
        return pipeline

    yield factory
    for pipeline in created:
        pipeline.stop()
        pipeline.committer.ledger.close()


class TestPipelineConfig:
    """流水线配置测试"""

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"sig_workers": 0},
            {"sig_workers": 33},
            {"sig_workers": 8, "queue_capacity": 4},
            {"block_size": 0},
            {"block_timeout_ms": 0},
        ],
    )
    def test_invalid(self, kwargs):
        """测试非法配置"""
        with pytest.raises(ValueError):
            PipelineConfig(**kwargs)

    def test_from_settings(self, make_settings):
        """测试从配置读取"""
        config = PipelineConfig.from_settings(make_settings(MODE="block", BLOCK_SIZE=5))
        assert config.sig_workers == 4
        assert config.queue_capacity == 64
        assert config.mode is PipelineMode.BLOCK
        assert config.block_size == 5


class TestStreamMode:
    """流式模式测试"""

    def test_transcript_codes(self, make_pipeline, identities, tmp_path):
        """测试逐笔判定与串行期望一致, 账本哈希链完整"""
        transcript = random_transcript(identities, 150, seed=11)
        pipeline = make_pipeline()
        sub = pipeline.housekeeper.subscribe(capacity=1000)
        pipeline.start(entries_of(transcript.payloads))
        assert pipeline.drain(timeout=30)
        events = [sub.get(timeout=5) for _ in transcript.payloads]
        assert [e.seq for e in events] == list(range(1, 151))
        assert [e.code for e in events] == transcript.expected
        assert [e.valid for e in events] == [c is ValidationCode.VALID for c in transcript.expected]
        assert pipeline.last_committed_seq == 150
        pipeline.committer.ledger.flush()
        assert verify_ledger_file(pipeline.committer.ledger.path).ok

    def test_records_match_events(self, make_pipeline, identities):
        """测试账本中的有效标志与事件一致"""
        transcript = random_transcript(identities, 60, seed=5)
        pipeline = make_pipeline()
        pipeline.start(entries_of(transcript.payloads))
        assert pipeline.drain(timeout=30)
        ledger = pipeline.committer.ledger
        assert [r.valid for r in ledger.iter_records()] == [
            c is ValidationCode.VALID for c in transcript.expected
        ]
        assert wait_until(lambda: pipeline.housekeeper.processed == 60)
        assert pipeline.monitor.get_counter("commit.valid") == transcript.valid_count

    def test_malformed_event(self, make_pipeline):
        """测试无法解析的负载产生全零 tx_id 的无效事件"""
        pipeline = make_pipeline()
        sub = pipeline.housekeeper.subscribe()
        pipeline.start(entries_of([MALFORMED_PAYLOAD]))
        assert pipeline.drain(timeout=10)
        event = sub.get(timeout=5)
        assert event.tx_id == NULL_TX_ID
        assert event.code is ValidationCode.MALFORMED
        assert not pipeline.halted

    def test_redelivered_entries_skipped(self, make_pipeline, identities):
        """测试重复投递的旧条目被跳过"""
        entries = entries_of(blind_payloads(identities, 3))
        pipeline = make_pipeline()
        pipeline.start([entries[0], entries[1], entries[0], entries[2]])
        assert pipeline.drain(timeout=10)
        assert pipeline.committer.ledger.last_seq == 3
        assert not pipeline.halted

    def test_gap_halts(self, make_pipeline, identities):
        """测试排序流出现空洞时停机"""
        entries = entries_of(blind_payloads(identities, 3))
        pipeline = make_pipeline()
        pipeline.start([entries[0], entries[2]])
        assert wait_until(lambda: pipeline.halted)
        assert isinstance(pipeline.committer.guard.cause, ChainIntegrityError)
        assert pipeline.stop_event.is_set()
        assert pipeline.committer.ledger.last_seq <= 1

    def test_resumes_after_local_ledger(self, tmp_path, make_pipeline, identities):
        """测试重启后从本地账本末尾之后继续"""
        entries = entries_of(blind_payloads(identities, 8))
        first = make_pipeline(tmp_path / "n")
        first.start(entries[:5])
        assert first.drain(timeout=10)
        first.stop()
        first.committer.ledger.close()

        second = make_pipeline(tmp_path / "n")
        assert second.next_seq == 6
        second.start(entries)
        assert second.drain(timeout=10)
        assert second.committer.ledger.last_seq == 8
        assert second.last_committed_seq == 8

    def test_cache_enabled(self, make_pipeline, identities):
        """测试反序列化缓存按负载哈希保存交易"""
        payloads = blind_payloads(identities, 5)
        on = make_pipeline(cache_enabled=True)
        on.start(entries_of(payloads))
        assert on.drain(timeout=10)
        assert len(on.cache) == 5

    def test_cache_disabled(self, tmp_path, make_pipeline, identities):
        """测试关闭缓存时结果不变且缓存为空"""
        transcript = random_transcript(identities, 40, seed=2)
        off = make_pipeline(tmp_path / "off", cache_enabled=False)
        off.start(entries_of(transcript.payloads))
        assert off.drain(timeout=20)
        assert len(off.cache) == 0
        assert [r.valid for r in off.committer.ledger.iter_records()] == [
            c is ValidationCode.VALID for c in transcript.expected
        ]

    def test_follows_ordering_service(self, make_pipeline, identities):
        """测试订阅排序服务并在停止后退出"""
        solo = SoloOrderer()
        try:
            pipeline = make_pipeline()
            pipeline.start(pipeline.source_for(solo))
            for payload in blind_payloads(identities, 4):
                solo.order(payload)
            assert pipeline.wait_committed(4, timeout=10)
            pipeline.stop()
            assert all(not t.is_alive() for t in pipeline._threads)
        finally:
            solo.stop()

    def test_wait_committed_timeout(self, make_pipeline):
        """测试等待超时"""
        pipeline = make_pipeline()
        assert pipeline.wait_committed(1, timeout=0.05) is False


class TestBlockMode:
    """基线区块模式测试"""

    def test_transcript_codes(self, make_pipeline, identities):
        """测试区块模式与流式模式判定一致"""
        transcript = random_transcript(identities, 100, seed=11)
        pipeline = make_pipeline(mode=PipelineMode.BLOCK, block_size=7)
        sub = pipeline.housekeeper.subscribe(capacity=1000)
        pipeline.start(blocks_of(entries_of(transcript.payloads), 7))
        assert pipeline.drain(timeout=30)
        assert pipeline.block_count == 15
        events = [sub.get(timeout=5) for _ in transcript.payloads]
        assert [e.code for e in events] == transcript.expected

    def test_run_block_events_share_commit_time(self, make_pipeline, identities):
        """测试一个区块的事件在刷盘后一起发出"""
        pipeline = make_pipeline(mode=PipelineMode.BLOCK)
        block = blocks_of(entries_of(blind_payloads(identities, 4)), 4)[0]
        events = pipeline.run_block_mode(block)
        assert [e.seq for e in events] == [1, 2, 3, 4]
        assert len({e.committed_ns for e in events}) == 1
        assert all(e.valid for e in events)
        assert pipeline.last_committed_seq == 4
        assert pipeline.run_block_mode(block) == []

    def test_one_flush_per_block(self, tmp_path, identities, policies, membership, mocker):
        """测试 10 笔交易的区块只刷盘一次, 且刷盘后全部记录已落盘"""
        batcher = BatcherConfig(
            flush_bytes=1 << 20, flush_timeout_ms=60_000, fsync_policy=FsyncPolicy.NEVER
        )
        committer = build_committer(tmp_path, batcher, auto_flush=False)
        pipeline = ValidatingPipeline(
            committer,
            policies,
            membership,
            PipelineConfig(sig_workers=4, queue_capacity=16, mode=PipelineMode.BLOCK),
        )
        try:
            ledger_flush = mocker.spy(committer.ledger, "flush")
            log_flush = mocker.spy(committer.ledger.log, "flush")
            blocks = blocks_of(entries_of(blind_payloads(identities, 20)), 10)

            events = pipeline.run_block_mode(blocks[0])
            assert len(events) == 10
            assert ledger_flush.call_count == 1
            assert log_flush.call_count == 1
            assert committer.ledger.log.flush_count == 1
            assert committer.ledger.log.durable_length == committer.ledger.log.logical_length

            pipeline.run_block_mode(blocks[1])
            assert ledger_flush.call_count == 2
            assert committer.ledger.log.flush_count == 2
        finally:
            pipeline.stop()
            committer.ledger.close()

    def test_block_gap_halts(self, make_pipeline, identities):
        """测试区块之间出现空洞时停机"""
        blocks = blocks_of(entries_of(blind_payloads(identities, 4)), 2)
        pipeline = make_pipeline(mode=PipelineMode.BLOCK)
        pipeline.run_block_mode(blocks[0])
        pipeline.committer.ledger.flush()
        skipped = Block(3, blocks[1].entries[1:], blocks[1].cut_reason)
        with pytest.raises(ChainIntegrityError):
            pipeline.run_block_mode(skipped)
        assert pipeline.halted
