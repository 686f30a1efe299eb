"""裸 fsync 延迟探测: 每次写一小段数据后立即 fsync"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

PROBE_FILE = "fsync.probe"


@dataclass(frozen=True)
class FsyncStats:
    samples: int
    mean_ms: float
    median_ms: float
    p99_ms: float

    def __str__(self) -> str:
        return (
            f"fsync samples={self.samples} mean={self.mean_ms:.3f}ms "
            f"median={self.median_ms:.3f}ms p99={self.p99_ms:.3f}ms"
        )


def fsync_probe(directory: str | Path, samples: int = 200, size: int = 4096) -> FsyncStats:
    if samples < 1 or size < 1:
        raise ValueError("samples and size must be positive")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / PROBE_FILE
    block = os.urandom(size)
    timings = np.empty(samples)
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o644)
    try:
        for i in range(samples):
            os.write(fd, block)
            began = time.perf_counter()
            os.fsync(fd)
            timings[i] = (time.perf_counter() - began) * 1000
    finally:
        os.close(fd)
        path.unlink(missing_ok=True)
    stats = FsyncStats(
        samples=samples,
        mean_ms=float(timings.mean()),
        median_ms=float(np.median(timings)),
        p99_ms=float(np.percentile(timings, 99)),
    )
    logger.info("%s (%s)", stats, directory)
    return stats
