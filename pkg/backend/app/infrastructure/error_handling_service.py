from __future__ import annotations

import logging
import threading
import traceback
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from collections.abc import Callable

logger = logging.getLogger(__name__)


class ErrorSeverity(Enum):
    """错误严重程度枚举"""

    CRITICAL = "critical"  # 节点必须停机 (fail-stop)
    HIGH = "high"  # 单个操作失败，影响客户端
    MEDIUM = "medium"  # 可重试的错误
    LOW = "low"  # 仅作记录


class ErrorCategory(Enum):
    """错误分类枚举"""

    SERIALIZATION = "serialization"
    INTEGRITY = "integrity"
    PERSISTENCE = "persistence"
    ORDERING = "ordering"
    ENDORSEMENT = "endorsement"
    CHAINCODE = "chaincode"
    CONFIGURATION = "configuration"
    NETWORK = "network"


@dataclass
class ErrorContext:
    """错误上下文信息"""

    operation: str
    component: str | None = None
    seq: int | None = None
    tx_id: str | None = None
    additional_data: dict[str, Any] | None = None


class LedgerError(Exception):
    """账本相关异常基类"""

    def __init__(
        self,
        message: str,
        error_code: str = "LEDGER_ERROR",
        severity: ErrorSeverity = ErrorSeverity.HIGH,
        category: ErrorCategory = ErrorCategory.INTEGRITY,
        context: ErrorContext | None = None,
        retryable: bool = False,
    ):
        super().__init__(message)
        self.message = message
        self.error_code = error_code
        self.severity = severity
        self.category = category
        self.context = context or ErrorContext(operation="unknown")
        self.retryable = retryable
        self.timestamp = datetime.now(timezone.utc)

    def to_dict(self) -> dict[str, Any]:
        return {
            "error_code": self.error_code,
            "message": self.message,
            "severity": self.severity.value,
            "category": self.category.value,
            "retryable": self.retryable,
            "operation": self.context.operation,
            "timestamp": self.timestamp.isoformat(),
        }


class SerializationError(LedgerError):
    """交易或帧无法解码"""

    def __init__(self, message: str, **kwargs):
        super().__init__(
            message,
            error_code="SERIALIZATION_ERROR",
            category=ErrorCategory.SERIALIZATION,
            **kwargs,
        )


class ChainIntegrityError(LedgerError):
    """哈希链校验失败"""

    def __init__(self, message: str, seq: int | None = None, **kwargs):
        super().__init__(
            message,
            error_code="CHAIN_INTEGRITY_ERROR",
            category=ErrorCategory.INTEGRITY,
            severity=ErrorSeverity.CRITICAL,
            **kwargs,
        )
        self.seq = seq


class PersistenceError(LedgerError):
    """磁盘写入失败，持有者必须停机"""

    def __init__(self, message: str, os_error: OSError | None = None, **kwargs):
        super().__init__(
            message,
            error_code="PERSISTENCE_ERROR",
            category=ErrorCategory.PERSISTENCE,
            severity=ErrorSeverity.CRITICAL,
            **kwargs,
        )
        self.os_error = os_error


class OutOfRangeError(LedgerError):
    """读取范围超出日志逻辑长度"""

    def __init__(self, message: str, **kwargs):
        super().__init__(
            message,
            error_code="OUT_OF_RANGE",
            category=ErrorCategory.PERSISTENCE,
            **kwargs,
        )


class NotFoundError(LedgerError):
    """序号尚未分配"""

    def __init__(self, message: str, seq: int | None = None, **kwargs):
        super().__init__(
            message,
            error_code="NOT_FOUND",
            category=ErrorCategory.ORDERING,
            severity=ErrorSeverity.LOW,
            **kwargs,
        )
        self.seq = seq


class OrderingTimeoutError(LedgerError):
    """无法在超时内获得多数派确认"""

    def __init__(self, message: str, **kwargs):
        super().__init__(
            message,
            error_code="ORDERING_TIMEOUT",
            category=ErrorCategory.ORDERING,
            severity=ErrorSeverity.MEDIUM,
            retryable=True,
            **kwargs,
        )


class NotLeaderError(LedgerError):
    """请求发给了非 leader 节点"""

    def __init__(self, message: str, leader_hint: str | None = None, **kwargs):
        super().__init__(
            message,
            error_code="NOT_LEADER",
            category=ErrorCategory.ORDERING,
            severity=ErrorSeverity.LOW,
            retryable=True,
            **kwargs,
        )
        self.leader_hint = leader_hint


class RetentionError(LedgerError):
    """订阅者落后于保留窗口，需要从 restart_from 重新开始"""

    def __init__(self, message: str, restart_from: int, **kwargs):
        super().__init__(
            message,
            error_code="RESTART_FROM",
            category=ErrorCategory.ORDERING,
            severity=ErrorSeverity.MEDIUM,
            **kwargs,
        )
        self.restart_from = restart_from


class ChaincodeError(LedgerError):
    """链码注册或调用错误"""

    def __init__(self, message: str, **kwargs):
        super().__init__(
            message,
            error_code="CHAINCODE_ERROR",
            category=ErrorCategory.CHAINCODE,
            **kwargs,
        )


class EndorsementError(LedgerError):
    """背书被拒绝"""

    def __init__(self, message: str, error_code: str = "ENDORSEMENT_REFUSED", **kwargs):
        kwargs.setdefault("category", ErrorCategory.ENDORSEMENT)
        super().__init__(message, error_code=error_code, **kwargs)


class EndorsementDivergenceError(EndorsementError):
    """不同背书节点返回的读写集不一致，客户端可重试"""

    def __init__(self, message: str, **kwargs):
        super().__init__(
            message,
            error_code="ENDORSEMENT_DIVERGENCE",
            severity=ErrorSeverity.MEDIUM,
            retryable=True,
            **kwargs,
        )


class PolicyError(EndorsementError):
    """背书数量不满足策略"""

    def __init__(self, message: str, **kwargs):
        super().__init__(message, error_code="POLICY_NOT_SATISFIED", **kwargs)


class ConfigError(LedgerError):
    """配置非法"""

    def __init__(self, message: str, **kwargs):
        super().__init__(
            message,
            error_code="CONFIG_ERROR",
            category=ErrorCategory.CONFIGURATION,
            **kwargs,
        )


@dataclass
class FailStopGuard:
    """记录组件的第一个致命错误并触发停机回调。

    分歧比不可用更糟糕: 一旦持久化或提交失败，组件进入 halted 状态，
    之后的任何写入都应立即失败。
    """

    component: str
    halted: bool = False
    cause: BaseException | None = None
    _callbacks: list[Callable[[BaseException], None]] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def on_halt(self, callback: Callable[[BaseException], None]) -> None:
        with self._lock:
            self._callbacks.append(callback)

    def halt(self, cause: BaseException) -> None:
        with self._lock:
            if self.halted:
                return
            self.halted = True
            self.cause = cause
            callbacks = list(self._callbacks)

        logger.critical(
            "组件 %s 停机: %s\n%s",
            self.component,
            cause,
            "".join(traceback.format_exception(cause)),
        )
        for callback in callbacks:
            try:
                callback(cause)
            except Exception:
                logger.exception("停机回调执行失败")

    def check(self) -> None:
        """若已停机则抛出 PersistenceError"""
        if self.halted:
            raise PersistenceError(
                f"{self.component} is halted",
                context=ErrorContext(operation="check", component=self.component),
            )
