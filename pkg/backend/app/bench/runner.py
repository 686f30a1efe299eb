"""
闭环基准驱动

每个模拟客户端一个线程, 依次执行分配给它的操作: 背书 -> 排序 -> 等待提交事件,
完成后才发下一个. 逐操作记录经队列汇总到调用线程.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
from pathlib import Path
from typing import TYPE_CHECKING

import pandas as pd

from app.bench.report import OpRecord, Outcome, RunReport, summary_row
from app.bench.workload import WorkloadSpec, generate
from app.infrastructure.error_handling_service import (
    EndorsementError,
    LedgerError,
    OrderingTimeoutError,
)
from app.ledger.codec import serialize_tx
from app.peer.network import Network

if TYPE_CHECKING:
    from collections.abc import Sequence

    from app.bench.gateway import Gateway
    from app.bench.workload import Operation, Workload
    from app.chaincode.base import Proposal
    from app.core.config import Settings

logger = logging.getLogger(__name__)


def bootstrap(gateway: Gateway, proposals: Sequence[Proposal], timeout: float) -> int:
    """装载初始数据: 全部提交后再统一等待提交, 任一装载交易无效即失败"""
    tx_ids = []
    for proposal in proposals:
        tx = gateway.endorse(proposal)
        gateway.orderer.order(serialize_tx(tx))
        tx_ids.append(tx.tx_id)
    for tx_id in tx_ids:
        event = gateway.commits.wait_for_tx(tx_id, timeout)
        if event is None:
            raise OrderingTimeoutError(f"bootstrap tx {tx_id.hex()} not committed within {timeout}s")
        if not event.valid:
            raise LedgerError(f"bootstrap tx {tx_id.hex()} committed invalid at seq {event.seq}")
    logger.info("初始数据装载完成: %d 个交易", len(tx_ids))
    return len(tx_ids)


def _execute(gateway: Gateway, op: Operation, timeout: float) -> OpRecord:
    started = time.time_ns()
    try:
        result = gateway.submit(op.proposal, timeout)
    except OrderingTimeoutError as e:
        return OpRecord(op.index, op.op_type, op.client, started, Outcome.TIMEOUT, error=e.message)
    except EndorsementError as e:
        return OpRecord(op.index, op.op_type, op.client, started, Outcome.REFUSED, error=e.message)
    except LedgerError as e:
        logger.warning("操作 %d 失败: %s", op.index, e)
        return OpRecord(op.index, op.op_type, op.client, started, Outcome.ERROR, error=e.message)
    return OpRecord(
        op.index,
        op.op_type,
        op.client,
        result.submit_ns,
        Outcome.VALID if result.valid else Outcome.INVALID,
        endorsed_ns=result.endorsed_ns,
        ordered_ns=result.ordered_ns,
        committed_ns=result.committed_ns,
        seq=result.seq,
    )


def _client_loop(
    gateway: Gateway, ops: list[Operation], timeout: float, records: queue.Queue[OpRecord]
) -> None:
    for op in ops:
        records.put(_execute(gateway, op, timeout))


def run_closed_loop(
    workload: Workload,
    gateways: Sequence[Gateway],
    op_timeout_s: float,
    mode: str,
    name: str = "",
) -> RunReport:
    clients = workload.spec.clients
    if len(gateways) < clients:
        raise ValueError(f"need {clients} gateways, got {len(gateways)}")
    records: queue.Queue[OpRecord] = queue.Queue()
    threads = [
        threading.Thread(
            target=_client_loop,
            args=(gateways[c], workload.for_client(c), op_timeout_s, records),
            name=f"client-{c}",
            daemon=True,
        )
        for c in range(clients)
    ]
    report = RunReport(
        workload=name or workload.spec.kind.value,
        mode=mode,
        clients=clients,
        transport=gateways[0].transport,
    )
    began = time.perf_counter()
    for t in threads:
        t.start()
    while any(t.is_alive() for t in threads) or not records.empty():
        try:
            report.records.append(records.get(timeout=0.1))
        except queue.Empty:
            continue
    logger.info(
        "闭环运行完成: %d 个操作, %d 客户端, 用时 %.1fs",
        report.issued,
        clients,
        time.perf_counter() - began,
    )
    return report


def run_benchmark(
    settings: Settings,
    workload_name: str,
    total_ops: int,
    clients: int,
    seed: int = 0,
    sockets: bool = False,
    data_dir: str | Path | None = None,
    **spec_overrides: object,
) -> RunReport:
    """启动网络, 装载数据, 运行闭环负载, 等所有 peer 追平后关闭网络"""
    spec = WorkloadSpec.preset(
        workload_name, total_ops=total_ops, clients=clients, seed=seed, **spec_overrides
    )
    workload = generate(spec)
    network = Network(settings, data_dir=data_dir, sockets=sockets).start()
    try:
        gateways = [network.gateway() for _ in range(clients)]
        bootstrap(gateways[0], workload.bootstrap, settings.OP_TIMEOUT_S * 10)
        report = run_closed_loop(
            workload, gateways, settings.OP_TIMEOUT_S, settings.MODE, name=workload_name
        )
        if not network.wait_idle(timeout=settings.OP_TIMEOUT_S * 3):
            logger.warning("部分 peer 未在超时内追平排序服务")
        return report
    finally:
        network.stop()


def sweep(
    settings: Settings,
    workload_name: str,
    client_counts: Sequence[int],
    total_ops: int,
    seed: int = 0,
    sockets: bool = False,
    data_root: str | Path | None = None,
) -> pd.DataFrame:
    """在多个客户端数下各跑一次, 每档一行汇总; 每档使用全新的数据目录"""
    root = Path(data_root or settings.DATA_DIR)
    rows = []
    for clients in client_counts:
        report = run_benchmark(
            settings,
            workload_name,
            total_ops,
            clients,
            seed=seed,
            sockets=sockets,
            data_dir=root / f"sweep-{workload_name}-{settings.MODE}-c{clients}",
        )
        rows.append(summary_row(report))
        logger.info("负载档位 %d 客户端完成", clients)
    return pd.DataFrame(rows)
