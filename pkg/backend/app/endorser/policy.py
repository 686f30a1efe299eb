"""背书策略: k-of-n 指名背书节点"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

from app.infrastructure.error_handling_service import ConfigError

if TYPE_CHECKING:
    from collections.abc import Iterable

    from app.core.config import Settings


@dataclass(frozen=True)
class EndorsementPolicy:
    required: int
    endorsers: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.endorsers)) != len(self.endorsers):
            raise ConfigError("endorsement policy lists an endorser twice")
        if not 1 <= self.required <= len(self.endorsers):
            raise ConfigError(
                f"policy requires 1 <= k <= n, got k={self.required} n={len(self.endorsers)}"
            )

    @classmethod
    def parse(cls, text: str) -> EndorsementPolicy:
        """解析 "k:id1,id2,..." 形式"""
        k, sep, ids = text.partition(":")
        if not sep:
            raise ConfigError(f"malformed endorsement policy {text!r}")
        try:
            required = int(k)
        except ValueError:
            raise ConfigError(f"malformed endorsement policy {text!r}") from None
        return cls(required, tuple(i.strip() for i in ids.split(",") if i.strip()))

    def counts(self, endorser_ids: Iterable[str]) -> int:
        """计入策略的不同背书节点数"""
        return len(set(endorser_ids) & set(self.endorsers))

    def is_satisfied(self, endorser_ids: Iterable[str]) -> bool:
        return self.counts(endorser_ids) >= self.required

    def __str__(self) -> str:
        return f"{self.required}:{','.join(self.endorsers)}"


class PolicyBook:
    """链码 id -> 背书策略"""

    def __init__(self, policies: dict[str, EndorsementPolicy]) -> None:
        self._policies = dict(policies)

    @classmethod
    def from_settings(cls, settings: Settings) -> PolicyBook:
        return cls(
            {
                "kv": EndorsementPolicy.parse(settings.YCSB_POLICY),
                "scm": EndorsementPolicy.parse(settings.SCM_POLICY),
            }
        )

    def get(self, chaincode_id: str) -> EndorsementPolicy | None:
        return self._policies.get(chaincode_id)

    def __getitem__(self, chaincode_id: str) -> EndorsementPolicy:
        return self._policies[chaincode_id]
