#!/usr/bin/env python3
"""
验证流水线集成测试: 并行流水线与单线程串行重放结果一致

覆盖签名工作线程数、状态分片数、反序列化缓存与流式/区块两种模式的组合.
"""

import random
import threading
import time

import pytest

from app.infrastructure.monitoring import PerformanceMonitor
from app.ledger.codec import serialize_tx
from app.validator.pipeline import PipelineConfig, PipelineMode, ValidatingPipeline
from app.validator.replay import replay_records, verify_ledger_file
from tests.fixtures.factories import (
    blocks_of,
    build_committer,
    entries_of,
    kv_key,
    make_tx,
    random_transcript,
)

pytestmark = pytest.mark.integration

FIFO_STRESS_COUNT = 10_000


def build_pipeline(data_dir, batcher, policies, membership, stripes=8, **config):
    committer = build_committer(data_dir, batcher, stripes=stripes)
    return ValidatingPipeline(
        committer,
        policies,
        membership,
        PipelineConfig(**config),
        monitor=PerformanceMonitor("integration"),
    )


@pytest.fixture
def pipelines():
    created = []
    yield created
    for pipeline in created:
        pipeline.stop()
        pipeline.committer.ledger.close()


class TestSerialEquivalence:
    """并行提交结果与串行重放对照测试"""

    @pytest.mark.slow
    @pytest.mark.parametrize(
        "sig_workers,stripes,cache,mode",
        [
            (1, 1, True, PipelineMode.STREAM),
            (6, 64, True, PipelineMode.STREAM),
            (16, 64, False, PipelineMode.STREAM),
            (16, 1, True, PipelineMode.STREAM),
            (6, 64, True, PipelineMode.BLOCK),
            (1, 8, False, PipelineMode.BLOCK),
        ],
    )
    def test_matches_serial_replay(
        self, tmp_path, fast_batcher, identities, policies, membership, pipelines,
        sig_workers, stripes, cache, mode,
    ):
        """测试账本有效标志、逐笔判定与状态摘要均与串行重放一致"""
        transcript = random_transcript(identities, 300, seed=sig_workers * 100 + stripes)
        pipeline = build_pipeline(
            tmp_path,
            fast_batcher,
            policies,
            membership,
            stripes=stripes,
            sig_workers=sig_workers,
            queue_capacity=max(32, sig_workers),
            mode=mode,
            block_size=9,
            cache_enabled=cache,
        )
        pipelines.append(pipeline)
        entries = entries_of(transcript.payloads)
        sub = pipeline.housekeeper.subscribe(capacity=1000)
        pipeline.start(blocks_of(entries, 9) if mode is PipelineMode.BLOCK else entries)
        assert pipeline.drain(timeout=60)

        events = [sub.get(timeout=5) for _ in entries]
        assert [e.code for e in events] == transcript.expected

        ledger = pipeline.committer.ledger
        ledger.flush()
        assert verify_ledger_file(ledger.path).ok
        report, _ = replay_records(ledger.iter_records(), policies, membership, stripes=1)
        assert report.ok
        assert report.codes == transcript.expected
        assert report.state_digest == pipeline.committer.state.state_digest()


class TestCommitOrder:
    """提交顺序测试"""

    @pytest.mark.slow
    def test_fifo_under_jittered_verification(
        self, tmp_path, fast_batcher, identities, policies, membership, pipelines, mocker
    ):
        """测试一万笔交易在签名校验耗时随机抖动时仍严格按 seq 提交"""
        jitter = random.Random(4)
        lock = threading.Lock()

        def slow_check(tx, policy_book, members):
            with lock:
                delay = jitter.random() * 0.003
            time.sleep(delay)
            return True

        mocker.patch("app.validator.pipeline.check_signatures", side_effect=slow_check)
        payloads = [
            serialize_tx(make_tx(identities, writes={kv_key(f"k{i % 40}"): f"v{i}".encode()}))
            for i in range(FIFO_STRESS_COUNT)
        ]
        pipeline = build_pipeline(
            tmp_path, fast_batcher, policies, membership, sig_workers=16, queue_capacity=32
        )
        pipelines.append(pipeline)
        sub = pipeline.housekeeper.subscribe(capacity=FIFO_STRESS_COUNT)
        pipeline.start(entries_of(payloads))
        assert pipeline.drain(timeout=180)

        events = [sub.get(timeout=5) for _ in payloads]
        assert [e.seq for e in events] == list(range(1, FIFO_STRESS_COUNT + 1))
        assert not sub.lagging
        assert all(e.valid for e in events)
        assert all(e.received_ns <= e.verified_ns <= e.committed_ns for e in events)
        records = pipeline.committer.ledger.iter_records()
        assert [r.seq for r in records] == list(range(1, FIFO_STRESS_COUNT + 1))

    def test_stalled_housekeeping_applies_backpressure(
        self, tmp_path, fast_batcher, identities, policies, membership, pipelines
    ):
        """测试通知阶段暂停时提交阶段被反压, 恢复后全部提交"""
        payloads = [
            serialize_tx(make_tx(identities, writes={kv_key(f"k{i}"): b"v"})) for i in range(50)
        ]
        pipeline = build_pipeline(
            tmp_path,
            fast_batcher,
            policies,
            membership,
            sig_workers=4,
            queue_capacity=8,
            housekeeping_capacity=4,
        )
        pipelines.append(pipeline)
        pipeline.housekeeper.pause()
        pipeline.start(entries_of(payloads))

        time.sleep(0.5)
        stalled_at = pipeline.last_committed_seq
        assert stalled_at < 50
        time.sleep(0.2)
        assert pipeline.last_committed_seq == stalled_at
        assert pipeline.housekeeper.backpressure_events >= 1

        pipeline.housekeeper.resume()
        assert pipeline.drain(timeout=30)
        assert pipeline.wait_committed(50, timeout=10)
        assert pipeline.committer.ledger.last_seq == 50
