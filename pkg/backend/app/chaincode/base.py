"""
链码执行框架

链码函数在状态快照之上模拟执行, 记录读到的 (键, 版本) 和待写入的值,
产出读写集. 执行本身不修改状态.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, ClassVar

from app.infrastructure.error_handling_service import ChaincodeError
from app.ledger.types import Key, ReadWriteSet

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable

    from app.ledger.types import Version
    from app.state.statedb import StateDb

    ChaincodeFn = Callable[["SimulationContext", tuple[bytes, ...]], bytes | None]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Proposal:
    chaincode_id: str
    function: str
    args: tuple[bytes, ...] = ()
    client_id: str = "client"

    @property
    def tx_args(self) -> tuple[bytes, ...]:
        """写入交易的参数: 函数名在前"""
        return (self.function.encode(), *self.args)


@dataclass(frozen=True)
class ExecutionResult:
    ok: bool
    rwset: ReadWriteSet = field(default_factory=ReadWriteSet)
    response: bytes = b""
    error: str | None = None

    @classmethod
    def success(cls, rwset: ReadWriteSet, response: bytes = b"") -> ExecutionResult:
        return cls(ok=True, rwset=rwset, response=response)

    @classmethod
    def failure(cls, error: str) -> ExecutionResult:
        return cls(ok=False, error=error)


class SimulationContext:
    """一次模拟执行的状态视图.

    首次读取某键时记录其版本; 已在本次执行中写过的键直接返回待写值.
    """

    def __init__(self, state: StateDb, namespace: str) -> None:
        self._state = state
        self.namespace = namespace
        self._reads: dict[Key, Version] = {}
        self._values: dict[Key, bytes | None] = {}
        self._writes: dict[Key, bytes | None] = {}

    def key(self, name: str | bytes) -> Key:
        return Key.of(self.namespace, name)

    def get_states(self, names: Iterable[str | bytes]) -> list[bytes | None]:
        """批量读取; 同一分段内的键来自同一个提交边界"""
        keys = [self.key(n) for n in names]
        missing = [k for k in keys if k not in self._writes and k not in self._reads]
        if missing:
            for read in self._state.snapshot_read(missing):
                self._reads[read.key] = read.version
                self._values[read.key] = read.value
        return [self._writes[k] if k in self._writes else self._values[k] for k in keys]

    def get_state(self, name: str | bytes) -> bytes | None:
        return self.get_states([name])[0]

    def put_state(self, name: str | bytes, value: bytes) -> None:
        self._writes[self.key(name)] = value

    def del_state(self, name: str | bytes) -> None:
        self._writes[self.key(name)] = None

    def rwset(self) -> ReadWriteSet:
        return ReadWriteSet.build(reads=self._reads, writes=self._writes)


class Chaincode:
    """链码基类; 子类通过 functions 注册可调用的函数名"""

    chaincode_id: ClassVar[str]

    def functions(self) -> dict[str, ChaincodeFn]:
        raise NotImplementedError

    def execute(self, proposal: Proposal, state: StateDb) -> ExecutionResult:
        fn = self.functions().get(proposal.function)
        if fn is None:
            return ExecutionResult.failure(
                f"{self.chaincode_id}: unknown function {proposal.function!r}"
            )
        ctx = SimulationContext(state, self.chaincode_id)
        try:
            response = fn(ctx, proposal.args)
        except ChaincodeError as e:
            logger.debug("链码 %s.%s 执行失败: %s", self.chaincode_id, proposal.function, e)
            return ExecutionResult.failure(e.message)
        except ValueError as e:
            # 参数或存储值无法解析
            return ExecutionResult.failure(f"{proposal.function}: {e}")
        return ExecutionResult.success(ctx.rwset(), response or b"")


class ChaincodeRegistry:
    def __init__(self) -> None:
        self._chaincodes: dict[str, Chaincode] = {}

    def register(self, chaincode: Chaincode) -> None:
        if chaincode.chaincode_id in self._chaincodes:
            raise ChaincodeError(f"chaincode {chaincode.chaincode_id} already registered")
        self._chaincodes[chaincode.chaincode_id] = chaincode

    def get(self, chaincode_id: str) -> Chaincode:
        try:
            return self._chaincodes[chaincode_id]
        except KeyError:
            raise ChaincodeError(f"chaincode {chaincode_id} is not installed") from None

    def __contains__(self, chaincode_id: object) -> bool:
        return chaincode_id in self._chaincodes

    def execute(self, proposal: Proposal, state: StateDb) -> ExecutionResult:
        if proposal.chaincode_id not in self._chaincodes:
            return ExecutionResult.failure(f"chaincode {proposal.chaincode_id} is not installed")
        return self._chaincodes[proposal.chaincode_id].execute(proposal, state)


def default_registry() -> ChaincodeRegistry:
    from app.chaincode.kv import KvChaincode
    from app.chaincode.scm import ScmChaincode

    registry = ChaincodeRegistry()
    registry.register(KvChaincode())
    registry.register(ScmChaincode())
    return registry
