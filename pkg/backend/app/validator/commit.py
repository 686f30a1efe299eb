"""
第二阶段: 重复交易检查、MVCC 检查与账本提交

validate_tx 是有效性判定的唯一实现, 实时流水线、基线模式和串行重放都用它,
因此判定只取决于排序后的交易序列.
"""

from __future__ import annotations

import logging
import threading
from typing import TYPE_CHECKING

from app.endorser.endorser import verify_endorsement
from app.infrastructure.error_handling_service import (
    ErrorContext,
    FailStopGuard,
    LedgerError,
    PersistenceError,
)
from app.validator.events import ValidationCode

if TYPE_CHECKING:
    from app.core.security import Membership
    from app.endorser.policy import PolicyBook
    from app.ledger.types import LedgerRecord, Transaction
    from app.persistence.ledger_store import LedgerStore
    from app.state.statedb import StateDb

logger = logging.getLogger(__name__)


def check_signatures(tx: Transaction | None, policies: PolicyBook, membership: Membership) -> bool:
    """第一阶段的判定: 客户端签名与背书策略"""
    if tx is None:
        return False
    return verify_endorsement(tx, policies.get(tx.chaincode_id), membership)


def validate_tx(
    tx: Transaction | None, sig_ok: bool, state: StateDb, seen: set[bytes]
) -> ValidationCode:
    if tx is None:
        return ValidationCode.MALFORMED
    if not sig_ok:
        return ValidationCode.BAD_SIGNATURE
    if tx.tx_id in seen:
        return ValidationCode.DUPLICATE_TXID
    if not state.mvcc_check(tx.rwset.reads):
        return ValidationCode.MVCC_CONFLICT
    return ValidationCode.VALID


class Committer:
    """只允许一个线程调用 commit; 任何写失败都会让节点停机"""

    def __init__(
        self,
        state: StateDb,
        ledger: LedgerStore,
        guard: FailStopGuard | None = None,
        seen_tx_ids: set[bytes] | None = None,
    ) -> None:
        self.state = state
        self.ledger = ledger
        self.guard = guard or FailStopGuard(component="committer")
        self.seen_tx_ids = seen_tx_ids if seen_tx_ids is not None else set()
        self._busy = threading.Lock()

    def commit(
        self, seq: int, payload: bytes, tx: Transaction | None, sig_ok: bool
    ) -> tuple[ValidationCode, LedgerRecord]:
        self.guard.check()
        if not self._busy.acquire(blocking=False):
            raise AssertionError("stage 2 entered concurrently")
        try:
            code = validate_tx(tx, sig_ok, self.state, self.seen_tx_ids)
            valid = code is ValidationCode.VALID
            if tx is not None:
                self.seen_tx_ids.add(tx.tx_id)
            try:
                record = self.ledger.append(seq, valid, payload)
                if valid and tx is not None and tx.rwset.writes:
                    self.state.apply_writes(tx.rwset.writes, seq)
                else:
                    self.state.mark_applied(seq)
            except PersistenceError as e:
                self.guard.halt(e)
                raise
            except (LedgerError, OSError, AssertionError) as e:
                err = PersistenceError(
                    f"commit of seq {seq} failed: {e}",
                    context=ErrorContext(operation="commit", seq=seq),
                )
                self.guard.halt(err)
                raise err from e
            if not valid:
                logger.debug("seq %d 无效: %s", seq, code.value)
            return code, record
        finally:
            self._busy.release()
