"""
性能监控模块

为 peer、排序节点与批量写入器提供计数器、瞬时值与耗时历史的统一收集点。
admin 接口通过 get_summary() 导出全部指标。
"""

from __future__ import annotations

import logging
import os
import threading
import time
from collections import defaultdict, deque
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from threading import Lock
from typing import TYPE_CHECKING, Any

import numpy as np
import psutil

if TYPE_CHECKING:
    from collections.abc import Iterator

logger = logging.getLogger(__name__)


@dataclass
class PerformanceMetric:
    """
    性能指标数据类
    """

    name: str
    value: float
    timestamp: datetime
    tags: dict[str, str] = field(default_factory=dict)
    unit: str = ""


@dataclass
class TimingStats:
    """
    耗时统计, 保留最近 max_samples 个样本
    """

    name: str
    count: int = 0
    total_ms: float = 0.0
    max_ms: float = 0.0
    samples: deque = field(default_factory=lambda: deque(maxlen=10000))

    def add(self, elapsed_ms: float) -> None:
        self.count += 1
        self.total_ms += elapsed_ms
        self.max_ms = max(self.max_ms, elapsed_ms)
        self.samples.append(elapsed_ms)

    def snapshot(self) -> dict[str, float]:
        if not self.samples:
            return {"count": 0, "mean_ms": 0.0, "p50_ms": 0.0, "p99_ms": 0.0, "max_ms": 0.0}
        arr = np.fromiter(self.samples, dtype=float)
        return {
            "count": self.count,
            "mean_ms": self.total_ms / self.count,
            "p50_ms": float(np.percentile(arr, 50)),
            "p99_ms": float(np.percentile(arr, 99)),
            "max_ms": self.max_ms,
        }


class PerformanceMonitor:
    """
    性能监控器

    线程安全; 每个组件持有一个实例, 或共享同一个实例并用名称前缀区分。
    """

    def __init__(self, name: str = "node", max_metrics_history: int = 10000):
        self.name = name
        self.metrics_history: deque[PerformanceMetric] = deque(maxlen=max_metrics_history)
        self.counters: dict[str, int] = defaultdict(int)
        self.gauges: dict[str, float] = {}
        self.timings: dict[str, TimingStats] = {}
        self.system_metrics: dict[str, Any] = {}

        self._lock = Lock()

        env_val = os.getenv("ENABLE_SYSTEM_MONITORING", "false").strip().lower()
        self.monitoring_enabled = env_val in {"1", "true", "yes", "on"}
        self.collection_interval = 5
        self._monitoring_thread: threading.Thread | None = None
        self._stop_monitoring = threading.Event()
        self._process = psutil.Process()

    def start_monitoring(self) -> None:
        """
        启动后台进程指标采集
        """
        if self._monitoring_thread is None or not self._monitoring_thread.is_alive():
            self._stop_monitoring.clear()
            self._monitoring_thread = threading.Thread(
                target=self._background_monitoring,
                name=f"{self.name}-monitor",
                daemon=True,
            )
            self._monitoring_thread.start()
            logger.info("性能监控已启动: %s", self.name)

    def stop_monitoring(self) -> None:
        self._stop_monitoring.set()
        if self._monitoring_thread:
            self._monitoring_thread.join(timeout=5)

    def _background_monitoring(self) -> None:
        while not self._stop_monitoring.is_set():
            try:
                self.collect_process_metrics()
            except Exception:
                logger.exception("后台监控出错")
            self._stop_monitoring.wait(self.collection_interval)

    def collect_process_metrics(self) -> dict[str, Any]:
        """采集本进程的 CPU 与内存占用"""
        with self._process.oneshot():
            rss_mb = self._process.memory_info().rss / 1024 / 1024
            cpu = self._process.cpu_percent(interval=None)
            threads = self._process.num_threads()
        metrics = {
            "rss_mb": rss_mb,
            "cpu_percent": cpu,
            "threads": threads,
            "last_updated": datetime.now(timezone.utc).isoformat(),
        }
        with self._lock:
            self.system_metrics.update(metrics)
        return metrics

    def record_metric(
        self,
        name: str,
        value: float,
        tags: dict[str, str] | None = None,
        unit: str = "",
    ) -> None:
        """
        记录一个瞬时指标 (同时更新 gauge)
        """
        metric = PerformanceMetric(
            name=name,
            value=value,
            timestamp=datetime.now(timezone.utc),
            tags=tags or {},
            unit=unit,
        )
        with self._lock:
            self.metrics_history.append(metric)
            self.gauges[name] = value

    def increment(self, name: str, amount: int = 1) -> None:
        with self._lock:
            self.counters[name] += amount

    def record_timing(self, name: str, elapsed_ms: float) -> None:
        with self._lock:
            stats = self.timings.get(name)
            if stats is None:
                stats = self.timings[name] = TimingStats(name=name)
            stats.add(elapsed_ms)

    @contextmanager
    def timer(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.record_timing(name, (time.perf_counter() - start) * 1000)

    def get_counter(self, name: str) -> int:
        with self._lock:
            return self.counters.get(name, 0)

    def get_summary(self) -> dict[str, Any]:
        """
        导出全部指标
        """
        with self._lock:
            return {
                "name": self.name,
                "counters": dict(self.counters),
                "gauges": dict(self.gauges),
                "timings": {k: v.snapshot() for k, v in self.timings.items()},
                "system": dict(self.system_metrics),
            }

    def reset(self) -> None:
        with self._lock:
            self.metrics_history.clear()
            self.counters.clear()
            self.gauges.clear()
            self.timings.clear()
