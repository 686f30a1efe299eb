"""
链码: 执行框架、YCSB 键值链码与供应链 (SCM) 链码
"""

from .base import (
    Chaincode,
    ChaincodeRegistry,
    ExecutionResult,
    Proposal,
    SimulationContext,
    default_registry,
)
from .kv import KV_NAMESPACE, KvChaincode
from .scm import SCM_NAMESPACE, ScmChaincode

__all__ = [
    "KV_NAMESPACE",
    "SCM_NAMESPACE",
    "Chaincode",
    "ChaincodeRegistry",
    "ExecutionResult",
    "KvChaincode",
    "Proposal",
    "ScmChaincode",
    "SimulationContext",
    "default_registry",
]
