"""
账本审计: 哈希链校验与单线程串行重放

串行重放按序号逐笔重新判定有效性并在一个全新的状态库上执行写入,
结果 (逐笔有效性与最终状态摘要) 必须与实时流水线完全一致.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

from app.infrastructure.error_handling_service import (
    PersistenceError,
    SerializationError,
)
from app.ledger.chain import decode_records_strict, first_broken_link
from app.ledger.codec import deserialize_tx
from app.state.statedb import StateDb
from app.validator.commit import check_signatures, validate_tx
from app.validator.events import ValidationCode

if TYPE_CHECKING:
    from collections.abc import Iterable

    from app.core.security import Membership
    from app.endorser.policy import PolicyBook
    from app.ledger.types import LedgerRecord, Transaction

logger = logging.getLogger(__name__)


def read_ledger_file(path: str | Path) -> list[LedgerRecord]:
    """严格读取: 任何无法解析的字节都视为损坏"""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise PersistenceError(f"cannot read {path}: {e}", os_error=e) from e
    return decode_records_strict(data)


@dataclass
class ReplayReport:
    codes: list[ValidationCode] = field(default_factory=list)
    recorded: list[bool] = field(default_factory=list)
    state_digest: str = ""

    @property
    def flags(self) -> list[bool]:
        return [c is ValidationCode.VALID for c in self.codes]

    @property
    def mismatches(self) -> list[int]:
        """重放结论与账本记录不一致的序号"""
        return [i + 1 for i, (a, b) in enumerate(zip(self.flags, self.recorded)) if a != b]

    @property
    def ok(self) -> bool:
        return not self.mismatches

    @property
    def valid_count(self) -> int:
        return sum(self.flags)


def _decode(payload: bytes) -> Transaction | None:
    try:
        return deserialize_tx(payload)
    except SerializationError:
        return None


def replay_records(
    records: Iterable[LedgerRecord],
    policies: PolicyBook,
    membership: Membership,
    stripes: int = 1,
) -> tuple[ReplayReport, StateDb]:
    state = StateDb(stripe_count=stripes)
    seen: set[bytes] = set()
    report = ReplayReport()
    for record in records:
        tx = _decode(record.tx_bytes)
        sig_ok = check_signatures(tx, policies, membership)
        code = validate_tx(tx, sig_ok, state, seen)
        if tx is not None:
            seen.add(tx.tx_id)
        if code is ValidationCode.VALID and tx is not None and tx.rwset.writes:
            state.apply_writes(tx.rwset.writes, record.seq)
        else:
            state.mark_applied(record.seq)
        report.codes.append(code)
        report.recorded.append(record.valid)
    report.state_digest = state.state_digest()
    logger.info(
        "串行重放完成: %d 条, %d 有效, %d 处与账本不一致",
        len(report.codes),
        report.valid_count,
        len(report.mismatches),
    )
    return report, state


def replay_ledger_file(
    path: str | Path, policies: PolicyBook, membership: Membership
) -> ReplayReport:
    report, _ = replay_records(read_ledger_file(path), policies, membership)
    return report


@dataclass(frozen=True)
class VerifyReport:
    ok: bool
    records: int
    broken_at: int | None = None
    error: str | None = None
    flags_checked: bool = False


def verify_ledger_file(
    path: str | Path,
    policies: PolicyBook | None = None,
    membership: Membership | None = None,
) -> VerifyReport:
    """校验记录帧与哈希链; 给出背书策略与成员时再用串行重放核对每条记录的有效标志

    有效标志不参与链哈希, 只有重放能发现对它的篡改.
    """
    try:
        records = read_ledger_file(path)
    except SerializationError as e:
        return VerifyReport(ok=False, records=0, error=str(e))
    broken = first_broken_link(records)
    if broken is not None:
        return VerifyReport(
            ok=False,
            records=len(records),
            broken_at=broken + 1,
            error=f"chain broken at record {broken + 1}",
        )
    if policies is None or membership is None:
        return VerifyReport(ok=True, records=len(records))
    report, _ = replay_records(records, policies, membership)
    if report.mismatches:
        first = report.mismatches[0]
        return VerifyReport(
            ok=False,
            records=len(records),
            broken_at=first,
            error=f"validity flag of record {first} disagrees with serial replay",
            flags_checked=True,
        )
    return VerifyReport(ok=True, records=len(records), flags_checked=True)
