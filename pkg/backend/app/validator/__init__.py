"""
验证节点: 三阶段流式流水线、基线区块模式与串行重放
"""

from .commit import Committer, check_signatures, validate_tx
from .events import CommitEvent, ValidationCode, decode_event, encode_event
from .housekeeping import Housekeeper, Subscription
from .pipeline import PipelineConfig, PipelineMode, ValidatingPipeline
from .reorder import ReorderBuffer
from .replay import (
    ReplayReport,
    VerifyReport,
    read_ledger_file,
    replay_ledger_file,
    replay_records,
    verify_ledger_file,
)

__all__ = [
    "CommitEvent",
    "Committer",
    "Housekeeper",
    "PipelineConfig",
    "PipelineMode",
    "ReorderBuffer",
    "ReplayReport",
    "Subscription",
    "ValidatingPipeline",
    "ValidationCode",
    "VerifyReport",
    "check_signatures",
    "decode_event",
    "encode_event",
    "read_ledger_file",
    "replay_ledger_file",
    "replay_records",
    "validate_tx",
    "verify_ledger_file",
]
