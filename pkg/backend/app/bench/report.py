"""
基准测试报告: 逐操作记录、聚合指标与 CSV 输出

聚合只统计按发起时间排序后中间 80% 的操作 (去掉预热和收尾各 10%).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "op_index",
    "op_type",
    "client",
    "submit_ns",
    "endorsed_ns",
    "ordered_ns",
    "committed_ns",
    "valid",
]
WARMUP_FRACTION = 0.1


class Outcome(str, Enum):
    VALID = "valid"
    INVALID = "invalid"
    REFUSED = "refused"  # 背书被拒绝, 未进入排序
    TIMEOUT = "timeout"
    ERROR = "error"


@dataclass
class OpRecord:
    op_index: int
    op_type: str
    client: int
    submit_ns: int
    outcome: Outcome
    endorsed_ns: int = 0
    ordered_ns: int = 0
    committed_ns: int = 0
    seq: int = 0
    error: str | None = None

    @property
    def committed(self) -> bool:
        return self.outcome in (Outcome.VALID, Outcome.INVALID)

    @property
    def valid(self) -> bool | None:
        return self.outcome is Outcome.VALID if self.committed else None


@dataclass
class RunReport:
    workload: str
    mode: str
    clients: int
    transport: str
    records: list[OpRecord] = field(default_factory=list)
    clock: str = "single-host"

    @property
    def issued(self) -> int:
        return len(self.records)

    def count(self, outcome: Outcome) -> int:
        return sum(1 for r in self.records if r.outcome is outcome)

    def frame(self) -> pd.DataFrame:
        """与 CSV 同列的 DataFrame; 未提交的操作 valid 为空"""
        rows = [
            {
                "op_index": r.op_index,
                "op_type": r.op_type,
                "client": r.client,
                "submit_ns": r.submit_ns,
                "endorsed_ns": r.endorsed_ns,
                "ordered_ns": r.ordered_ns,
                "committed_ns": r.committed_ns,
                "valid": r.valid,
            }
            for r in sorted(self.records, key=lambda r: r.op_index)
        ]
        return pd.DataFrame(rows, columns=CSV_COLUMNS)

    def aggregates(self) -> dict[str, float]:
        return aggregate(self.frame())


def middle_window(df: pd.DataFrame) -> pd.DataFrame:
    """按 submit_ns 排序后去掉首尾各 10%"""
    ordered = df.sort_values("submit_ns", kind="stable")
    cut = int(len(ordered) * WARMUP_FRACTION)
    return ordered.iloc[cut : len(ordered) - cut]


def aggregate(df: pd.DataFrame) -> dict[str, float]:
    """从逐操作表计算聚合指标; 输入可以是 read_csv 读回的表"""
    window = middle_window(df)
    committed = window[window["valid"].notna()]
    valid_mask = committed["valid"].astype(str).str.lower() == "true"
    n_valid = int(valid_mask.sum())
    n_committed = len(committed)

    result: dict[str, float] = {
        "window_ops": float(len(window)),
        "committed": float(n_committed),
        "valid": float(n_valid),
        "invalid": float(n_committed - n_valid),
        "not_committed": float(len(window) - n_committed),
    }
    if n_committed == 0:
        result.update(throughput=0.0, goodput=0.0, failing_pct=0.0)
        return result

    span_s = (committed["committed_ns"].max() - window["submit_ns"].min()) / 1e9
    span_s = max(float(span_s), 1e-9)
    e2e = (committed["committed_ns"] - committed["submit_ns"]) / 1e6
    result.update(
        throughput=n_committed / span_s,
        goodput=n_valid / span_s,
        failing_pct=100.0 * (n_committed - n_valid) / n_committed,
        latency_mean_ms=float(e2e.mean()),
        latency_p50_ms=float(np.percentile(e2e, 50)),
        latency_p99_ms=float(np.percentile(e2e, 99)),
        endorse_mean_ms=float(((committed["endorsed_ns"] - committed["submit_ns"]) / 1e6).mean()),
        order_mean_ms=float(((committed["ordered_ns"] - committed["endorsed_ns"]) / 1e6).mean()),
        validate_mean_ms=float(((committed["committed_ns"] - committed["ordered_ns"]) / 1e6).mean()),
    )
    return result


def write_csv(report: RunReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    report.frame().to_csv(path, index=False)
    logger.info("逐操作记录写入 %s (%d 行)", path, report.issued)
    return path


def summarize(report: RunReport, csv_path: str | Path | None = None) -> str:
    """返回汇总文本; 给出 csv_path 时同时写出逐操作 CSV"""
    stats = report.aggregates()
    lines = [
        f"workload={report.workload} mode={report.mode} clients={report.clients} "
        f"transport={report.transport} clock={report.clock}",
        f"issued={report.issued} valid={report.count(Outcome.VALID)} "
        f"invalid={report.count(Outcome.INVALID)} refused={report.count(Outcome.REFUSED)} "
        f"timeout={report.count(Outcome.TIMEOUT)} error={report.count(Outcome.ERROR)}",
    ]
    lines += [f"  {name:<18} {value:>12.3f}" for name, value in stats.items()]
    if csv_path is not None:
        write_csv(report, csv_path)
    return "\n".join(lines)


def summary_row(report: RunReport) -> dict[str, object]:
    """扫描负载时每个负载档位一行"""
    return {
        "workload": report.workload,
        "mode": report.mode,
        "clients": report.clients,
        "transport": report.transport,
        "issued": report.issued,
        "timeouts": report.count(Outcome.TIMEOUT),
        **report.aggregates(),
    }

