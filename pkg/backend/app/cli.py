"""
flowledger 命令行入口

    flowledger net start ...
    flowledger bench run | sweep | fsync-probe ...
    flowledger ledger verify | replay ...

配置优先级: 命令行参数 > --config 文件 (key=value) > 环境变量 > 默认值.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Any

from app.core.config import Settings, load_settings
from app.infrastructure.error_handling_service import LedgerError
from app.infrastructure.logging_service import setup_logging

logger = logging.getLogger(__name__)

# 命令行参数名 -> Settings 字段
NETWORK_FLAGS = {
    "peers": "NET_PEERS",
    "orderers": "NET_ORDERERS",
    "mode": "MODE",
    "block_size": "BLOCK_SIZE",
    "block_timeout_ms": "BLOCK_TIMEOUT_MS",
    "sig_workers": "SIG_WORKERS",
    "queue_capacity": "QUEUE_CAPACITY",
    "stripes": "STRIPES",
    "flush_bytes": "FLUSH_BYTES",
    "flush_timeout_ms": "FLUSH_TIMEOUT_MS",
    "fsync": "FSYNC",
    "crypto": "CRYPTO",
    "cache": "CACHE_ENABLED",
    "data_dir": "DATA_DIR",
    "host": "HOST",
    "admin_port": "ADMIN_PORT",
    "log_level": "LOG_LEVEL",
}


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return value == "on"


def _int_list(value: str) -> list[int]:
    try:
        items = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from None
    if not items or any(i <= 0 for i in items):
        raise argparse.ArgumentTypeError("client counts must be positive")
    return items


def _network_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("network")
    group.add_argument("--config", help="plain-text key=value settings file")
    group.add_argument("--peers", type=int)
    group.add_argument("--orderers", type=int)
    group.add_argument("--mode", choices=["stream", "block"])
    group.add_argument("--block-size", type=int)
    group.add_argument("--block-timeout-ms", type=int)
    group.add_argument("--sig-workers", type=int)
    group.add_argument("--queue-capacity", type=int)
    group.add_argument("--stripes", type=int)
    group.add_argument("--flush-bytes", type=int)
    group.add_argument("--flush-timeout-ms", type=int)
    group.add_argument("--fsync", type=_on_off, metavar="on|off")
    group.add_argument("--crypto", choices=["real", "null"])
    group.add_argument("--cache", type=_on_off, metavar="on|off")
    group.add_argument("--data-dir")
    group.add_argument("--host")
    group.add_argument("--admin-port", type=int)
    group.add_argument("--log-level")
    group.add_argument("--sockets", action="store_true", help="route clients over loopback sockets")
    return parent


def settings_from_args(args: argparse.Namespace) -> Settings:
    overrides: dict[str, Any] = {
        field: getattr(args, flag) for flag, field in NETWORK_FLAGS.items() if hasattr(args, flag)
    }
    return load_settings(getattr(args, "config", None), **overrides)


def _run_dir(settings: Settings, label: str) -> Path:
    """每次压测一个全新的数据目录"""
    return Path(settings.DATA_DIR) / f"{label}-{time.strftime('%Y%m%d-%H%M%S')}"


def _setup_logging(settings: Settings) -> None:
    setup_logging(
        level=settings.LOG_LEVEL,
        log_format=settings.LOG_FORMAT,
        log_file_path=settings.LOG_FILE_PATH or None,
        max_size_mb=settings.LOG_MAX_SIZE_MB,
        backup_count=settings.LOG_BACKUP_COUNT,
    )


# --- net ---


def cmd_net_start(args: argparse.Namespace) -> int:
    import uvicorn

    from app.main import create_app
    from app.peer.network import Network

    settings = settings_from_args(args)
    _setup_logging(settings)
    network = Network(settings, sockets=True).start()
    peer = network.validating_peer
    for node_id, addr in network.orderer_addresses().items():
        print(f"orderer {node_id} {addr[0]}:{addr[1]}")
    for peer_id, server in network.endorser_servers.items():
        print(f"endorser {peer_id} {server.address[0]}:{server.address[1]}")
    if network.event_server is not None:
        host, port = network.event_server.address
        print(f"events {peer.peer_id} {host}:{port}")
    print(f"admin {peer.peer_id} http://{settings.HOST}:{settings.ADMIN_PORT}")
    uvicorn.run(
        create_app(peer, network),
        host=settings.HOST,
        port=settings.ADMIN_PORT,
        log_level=settings.LOG_LEVEL.lower(),
    )
    return 0


# --- bench ---


def cmd_bench_run(args: argparse.Namespace) -> int:
    from app.bench.report import summarize
    from app.bench.runner import run_benchmark

    settings = settings_from_args(args)
    _setup_logging(settings)
    report = run_benchmark(
        settings,
        args.workload,
        args.ops,
        args.clients,
        seed=args.seed,
        sockets=args.sockets,
        working_set_fraction=args.working_set,
        data_dir=_run_dir(settings, f"run-{args.workload}-{settings.MODE}-c{args.clients}"),
    )
    print(summarize(report, args.out))
    return 0


def cmd_bench_sweep(args: argparse.Namespace) -> int:
    from app.bench.runner import sweep

    settings = settings_from_args(args)
    _setup_logging(settings)
    table = sweep(
        settings,
        args.workload,
        args.clients,
        args.ops,
        seed=args.seed,
        sockets=args.sockets,
        data_root=_run_dir(settings, "sweep"),
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out, index=False)
    print(table.to_string(index=False))
    return 0


def cmd_bench_fsync_probe(args: argparse.Namespace) -> int:
    from app.bench.probe import fsync_probe

    setup_logging(level=args.log_level)
    print(fsync_probe(args.path, samples=args.samples, size=args.size))
    return 0


# --- ledger ---


def _find_bootstrap(ledger_path: Path, levels: int = 3) -> Path | None:
    """ledger.dat 位于 <data_dir>/peers/<peer_id>/, 向上查找 network.keys"""
    from app.core.security import BOOTSTRAP_FILE

    for parent in list(ledger_path.resolve().parents)[:levels]:
        candidate = parent / BOOTSTRAP_FILE
        if candidate.is_file():
            return candidate
    return None


def cmd_ledger_verify(args: argparse.Namespace) -> int:
    from app.core.security import Membership
    from app.endorser.policy import PolicyBook
    from app.validator.replay import verify_ledger_file

    settings = settings_from_args(args)
    _setup_logging(settings)
    keys = Path(args.keys) if args.keys else _find_bootstrap(Path(args.path))
    if keys is None:
        logger.warning("未找到 network.keys, 只校验哈希链, 不核对有效标志")
        report = verify_ledger_file(args.path)
    else:
        report = verify_ledger_file(
            args.path,
            PolicyBook.from_settings(settings),
            Membership.load_bootstrap(keys, crypto=settings.CRYPTO),
        )
    if report.ok:
        suffix = ", validity flags match replay" if report.flags_checked else ""
        print(f"OK {report.records} records{suffix}")
        return 0
    print(f"FAIL {report.error}")
    return 1


def cmd_ledger_replay(args: argparse.Namespace) -> int:
    from app.core.security import Membership
    from app.endorser.policy import PolicyBook
    from app.validator.replay import read_ledger_file, replay_records

    settings = settings_from_args(args)
    _setup_logging(settings)
    membership = Membership.load_bootstrap(args.keys, crypto=settings.CRYPTO)
    report, _ = replay_records(
        read_ledger_file(args.path),
        PolicyBook.from_settings(settings),
        membership,
        stripes=settings.STRIPES,
    )
    print(f"records={len(report.codes)} valid={report.valid_count} digest={report.state_digest}")
    ok = report.ok
    if report.mismatches:
        shown = ", ".join(str(s) for s in report.mismatches[:20])
        print(f"MISMATCH at seq {shown}")
    if args.expect_digest and args.expect_digest != report.state_digest:
        print(f"DIGEST MISMATCH expected {args.expect_digest}")
        ok = False
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    network = _network_options()
    parser = argparse.ArgumentParser(prog="flowledger", description="streaming permissioned ledger")
    commands = parser.add_subparsers(dest="command", required=True)

    net = commands.add_parser("net").add_subparsers(dest="action", required=True)
    start = net.add_parser("start", parents=[network], help="start a single-host network")
    start.set_defaults(func=cmd_net_start)

    bench = commands.add_parser("bench").add_subparsers(dest="action", required=True)
    run = bench.add_parser("run", parents=[network], help="closed-loop benchmark")
    run.add_argument("--workload", choices=["ycsb90", "ycsb50", "scm95", "scm99"], default="ycsb90")
    run.add_argument("--ops", type=int, default=10_000)
    run.add_argument("--clients", type=int, default=1)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--working-set", type=float, default=1.0)
    run.add_argument("--out", default="report.csv")
    run.set_defaults(func=cmd_bench_run)

    sw = bench.add_parser("sweep", parents=[network], help="closed loop at several client counts")
    sw.add_argument("--workload", choices=["ycsb90", "ycsb50", "scm95", "scm99"], default="ycsb90")
    sw.add_argument("--clients", type=_int_list, default=[1, 2, 4, 8, 16])
    sw.add_argument("--ops", type=int, default=10_000)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--out", default="sweep.csv")
    sw.set_defaults(func=cmd_bench_sweep)

    probe = bench.add_parser("fsync-probe", help="raw fsync latency microbenchmark")
    probe.add_argument("--path", default=".")
    probe.add_argument("--samples", type=int, default=200)
    probe.add_argument("--size", type=int, default=4096)
    probe.add_argument("--log-level", default="INFO")
    probe.set_defaults(func=cmd_bench_fsync_probe)

    ledger = commands.add_parser("ledger").add_subparsers(dest="action", required=True)
    verify = ledger.add_parser(
        "verify", parents=[network], help="check the hash chain and validity flags of a ledger file"
    )
    verify.add_argument("--path", required=True)
    verify.add_argument(
        "--keys", help="network.keys membership file, searched next to the ledger by default"
    )
    verify.set_defaults(func=cmd_ledger_verify, log_level="WARNING")

    replay = ledger.add_parser("replay", parents=[network], help="single-threaded serial replay")
    replay.add_argument("--path", required=True)
    replay.add_argument("--keys", required=True, help="network.keys membership file")
    replay.add_argument("--expect-digest", help="state digest of the live peer")
    replay.set_defaults(func=cmd_ledger_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LedgerError as e:
        logger.error("%s: %s", e.error_code, e.message)
        print(f"error: {e.message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
