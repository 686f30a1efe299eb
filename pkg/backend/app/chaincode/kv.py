"""YCSB 风格的键值链码"""

from __future__ import annotations

from typing import TYPE_CHECKING

from app.chaincode.base import Chaincode
from app.infrastructure.error_handling_service import ChaincodeError

if TYPE_CHECKING:
    from app.chaincode.base import ChaincodeFn, SimulationContext

KV_NAMESPACE = "kv"


def _one(args: tuple[bytes, ...], n: int, fn: str) -> None:
    if len(args) != n:
        raise ChaincodeError(f"{fn} expects {n} argument(s), got {len(args)}")


class KvChaincode(Chaincode):
    chaincode_id = KV_NAMESPACE

    def functions(self) -> dict[str, ChaincodeFn]:
        return {
            "read": self.read,
            "insert": self.insert,
            "update": self.update,
            "delete": self.delete,
            "load": self.load,
        }

    @staticmethod
    def read(ctx: SimulationContext, args: tuple[bytes, ...]) -> bytes | None:
        _one(args, 1, "read")
        return ctx.get_state(args[0])

    @staticmethod
    def insert(ctx: SimulationContext, args: tuple[bytes, ...]) -> None:
        """写入 (键已存在时覆盖); 读集包含该键, 与并发写入冲突时会在验证阶段失败"""
        _one(args, 2, "insert")
        ctx.get_state(args[0])
        ctx.put_state(args[0], args[1])

    @staticmethod
    def update(ctx: SimulationContext, args: tuple[bytes, ...]) -> None:
        _one(args, 2, "update")
        if ctx.get_state(args[0]) is None:
            raise ChaincodeError(f"update of missing key {args[0]!r}")
        ctx.put_state(args[0], args[1])

    @staticmethod
    def delete(ctx: SimulationContext, args: tuple[bytes, ...]) -> None:
        _one(args, 1, "delete")
        ctx.get_state(args[0])
        ctx.del_state(args[0])

    @staticmethod
    def load(ctx: SimulationContext, args: tuple[bytes, ...]) -> None:
        """批量盲写 (初始数据装载): args = k1, v1, k2, v2, ..."""
        if not args or len(args) % 2:
            raise ChaincodeError("load expects key/value pairs")
        for key, value in zip(args[::2], args[1::2]):
            ctx.put_state(key, value)
