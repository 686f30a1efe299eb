"""
基准测试: 负载生成、闭环驱动、报告与 fsync 探测
"""

from .gateway import Gateway, SubmitResult
from .probe import FsyncStats, fsync_probe
from .report import OpRecord, Outcome, RunReport, aggregate, summarize, write_csv
from .workload import (
    Operation,
    Workload,
    WorkloadKind,
    WorkloadSpec,
    gen_scm,
    gen_ycsb,
    generate,
)

__all__ = [
    "FsyncStats",
    "Gateway",
    "OpRecord",
    "Operation",
    "Outcome",
    "RunReport",
    "SubmitResult",
    "Workload",
    "WorkloadKind",
    "WorkloadSpec",
    "aggregate",
    "fsync_probe",
    "gen_scm",
    "gen_ycsb",
    "generate",
    "summarize",
    "write_csv",
]
