#!/usr/bin/env python3
"""
读写锁单元测试
"""

import threading
import time

from app.state.rwlock import ReadWriteLock


class TestReadWriteLock:
    """多读单写锁测试"""

    def test_readers_share(self):
        """测试多个读者可以同时持有锁"""
        lock = ReadWriteLock()
        inside = threading.Barrier(3, timeout=2)
        errors = []

        def reader():
            with lock.read():
                try:
                    inside.wait()
                except threading.BrokenBarrierError as e:
                    errors.append(e)

        threads = [threading.Thread(target=reader) for _ in range(3)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert errors == []

    def test_writer_excludes_readers(self):
        """测试写者持锁期间读者等待"""
        lock = ReadWriteLock()
        order = []
        lock.acquire_write()

        def reader():
            with lock.read():
                order.append("read")

        t = threading.Thread(target=reader)
        t.start()
        time.sleep(0.05)
        order.append("write-done")
        lock.release_write()
        t.join(timeout=2)
        assert order == ["write-done", "read"]

    def test_waiting_writer_blocks_new_readers(self):
        """测试有写者等待时新读者排在写者之后"""
        lock = ReadWriteLock()
        order = []
        lock.acquire_read()

        def writer():
            with lock.write():
                order.append("write")

        def late_reader():
            with lock.read():
                order.append("read")

        w = threading.Thread(target=writer)
        w.start()
        time.sleep(0.05)
        r = threading.Thread(target=late_reader)
        r.start()
        time.sleep(0.05)
        lock.release_read()
        w.join(timeout=2)
        r.join(timeout=2)
        assert order == ["write", "read"]

    def test_release_on_exception(self):
        """测试上下文管理器在异常时释放锁"""
        lock = ReadWriteLock()
        try:
            with lock.write():
                raise RuntimeError("boom")
        except RuntimeError:
            pass
        with lock.read():
            pass
