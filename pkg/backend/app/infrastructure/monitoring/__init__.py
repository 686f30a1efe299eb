"""
监控模块: 计数器、耗时统计与进程指标
"""

from .performance_monitor import PerformanceMetric, PerformanceMonitor, TimingStats

__all__ = [
    "PerformanceMetric",
    "PerformanceMonitor",
    "TimingStats",
]
