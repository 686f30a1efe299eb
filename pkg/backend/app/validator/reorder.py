"""
按序号重排的有界缓冲: 签名工作线程乱序完成, 提交线程严格按序取出
"""

from __future__ import annotations

import threading
import time
from typing import Generic, TypeVar

T = TypeVar("T")


class ReorderBuffer(Generic[T]):
    """容量限制的是已分配但尚未被取走的槽位数 (在途条目)"""

    def __init__(self, capacity: int, next_seq: int = 1) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._next_seq = next_seq
        self._items: dict[int, T] = {}
        self._inflight = 0
        self._cond = threading.Condition()

    @property
    def next_seq(self) -> int:
        with self._cond:
            return self._next_seq

    def __len__(self) -> int:
        with self._cond:
            return self._inflight

    def reserve(self, timeout: float | None = None) -> bool:
        """为一个新条目占一个槽位; 缓冲满时阻塞"""
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while self._inflight >= self.capacity:
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return False
                self._cond.wait(remaining)
            self._inflight += 1
            return True

    def put(self, seq: int, item: T) -> None:
        with self._cond:
            if seq < self._next_seq or seq in self._items:
                raise ValueError(f"seq {seq} already released or buffered")
            self._items[seq] = item
            if seq == self._next_seq:
                self._cond.notify_all()

    def take(self, timeout: float | None = None) -> T | None:
        """取出下一个序号的条目; 超时返回 None"""
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while self._next_seq not in self._items:
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return None
                self._cond.wait(remaining)
            item = self._items.pop(self._next_seq)
            self._next_seq += 1
            self._inflight -= 1
            self._cond.notify_all()
            return item
