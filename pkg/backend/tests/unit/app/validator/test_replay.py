#!/usr/bin/env python3
"""
账本校验与串行重放单元测试
"""

import pytest

from app.infrastructure.error_handling_service import PersistenceError, SerializationError
from app.ledger.chain import GENESIS_HASH, make_record
from app.ledger.codec import deserialize_tx, serialize_tx
from app.validator.commit import check_signatures
from app.validator.events import ValidationCode
from app.validator.replay import (
    read_ledger_file,
    replay_ledger_file,
    replay_records,
    verify_ledger_file,
)
from tests.fixtures.factories import build_committer, kv_key, make_tx, random_transcript

VALID_FLAG_OFFSET = 12


def commit_transcript(data_dir, batcher, identities, policies, membership, count, seed=0):
    """用提交器串行写出一份账本, 返回提交器与期望判定"""
    transcript = random_transcript(identities, count, seed=seed)
    committer = build_committer(data_dir, batcher)
    for seq, payload in enumerate(transcript.payloads, start=1):
        try:
            tx = deserialize_tx(payload)
        except SerializationError:
            tx = None
        committer.commit(seq, payload, tx, check_signatures(tx, policies, membership))
    committer.ledger.close()
    return committer, transcript


def chain_of(payloads):
    records, prev = [], GENESIS_HASH
    for seq, payload in enumerate(payloads, start=1):
        record = make_record(prev, seq, True, payload)
        records.append(record)
        prev = record.chain_hash
    return records


class TestVerifyLedgerFile:
    """账本文件校验测试"""

    def test_intact(self, tmp_path, fast_batcher, identities, policies, membership):
        """测试完整账本通过校验"""
        committer, _ = commit_transcript(tmp_path, fast_batcher, identities, policies, membership, 30)
        report = verify_ledger_file(committer.ledger.path)
        assert report.ok
        assert report.records == 30
        assert report.broken_at is None

    def test_flipped_byte(self, tmp_path, fast_batcher, identities, policies, membership):
        """测试负载中任一字节被篡改都会被发现"""
        committer, _ = commit_transcript(tmp_path, fast_batcher, identities, policies, membership, 5)
        path = committer.ledger.path
        data = bytearray(path.read_bytes())
        data[-1] ^= 0x01
        path.write_bytes(bytes(data))
        report = verify_ledger_file(path)
        assert not report.ok
        assert report.broken_at == 5

    def test_truncated(self, tmp_path, fast_batcher, identities, policies, membership):
        """测试严格读取拒绝残缺尾部"""
        committer, _ = commit_transcript(tmp_path, fast_batcher, identities, policies, membership, 3)
        path = committer.ledger.path
        path.write_bytes(path.read_bytes()[:-2])
        report = verify_ledger_file(path)
        assert not report.ok
        assert report.error

    def test_flags_checked_with_membership(
        self, tmp_path, fast_batcher, identities, policies, membership
    ):
        """测试给出策略与成员时核对有效标志"""
        committer, _ = commit_transcript(tmp_path, fast_batcher, identities, policies, membership, 20)
        report = verify_ledger_file(committer.ledger.path, policies, membership)
        assert report.ok
        assert report.flags_checked

    @pytest.mark.parametrize("index", [0, 3, 9])
    def test_flipped_validity_bit(
        self, tmp_path, fast_batcher, identities, policies, membership, index
    ):
        """测试有效标志的单个比特被翻转时校验失败"""
        committer, _ = commit_transcript(tmp_path, fast_batcher, identities, policies, membership, 10)
        path = committer.ledger.path
        data = bytearray(path.read_bytes())
        offset = 0
        for _ in range(index):
            offset += int.from_bytes(data[offset : offset + 4], "little")
        data[offset + VALID_FLAG_OFFSET] ^= 0x01
        path.write_bytes(bytes(data))
        report = verify_ledger_file(path, policies, membership)
        assert not report.ok
        assert report.broken_at == index + 1
        assert "validity flag" in report.error

    def test_missing_file(self, tmp_path):
        """测试文件不存在"""
        with pytest.raises(PersistenceError):
            read_ledger_file(tmp_path / "nope.dat")


class TestReplay:
    """串行重放测试"""

    def test_matches_committed_flags(self, tmp_path, fast_batcher, identities, policies, membership):
        """测试重放结论与账本记录一致, 状态摘要与提交器一致"""
        committer, transcript = commit_transcript(
            tmp_path, fast_batcher, identities, policies, membership, 120, seed=4
        )
        report = replay_ledger_file(committer.ledger.path, policies, membership)
        assert report.ok
        assert report.codes == transcript.expected
        assert report.valid_count == transcript.valid_count
        assert report.state_digest == committer.state.state_digest()

    def test_stripes_do_not_change_digest(self, tmp_path, fast_batcher, identities, policies, membership):
        """测试分段数量不影响重放结果"""
        committer, _ = commit_transcript(tmp_path, fast_batcher, identities, policies, membership, 50)
        records = read_ledger_file(committer.ledger.path)
        one, _ = replay_records(records, policies, membership, stripes=1)
        many, state = replay_records(records, policies, membership, stripes=64)
        assert one.state_digest == many.state_digest
        assert state.last_applied_seq == 50

    def test_detects_mismatch(self, identities, policies, membership):
        """测试账本记录的有效标志与重放结论不一致"""
        a = kv_key("a")
        first = make_tx(identities, writes={a: b"1"})
        stale = make_tx(identities, reads={a: 0}, writes={a: b"2"})
        records = chain_of([serialize_tx(first), serialize_tx(stale)])
        report, _ = replay_records(records, policies, membership)
        assert report.codes == [ValidationCode.VALID, ValidationCode.MVCC_CONFLICT]
        assert report.recorded == [True, True]
        assert report.mismatches == [2]
        assert not report.ok

    def test_empty(self, policies, membership):
        """测试空账本"""
        report, state = replay_records([], policies, membership)
        assert report.ok
        assert report.valid_count == 0
        assert len(state) == 0
