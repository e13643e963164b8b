"""Phase engine: concurrent workers, barrier-bounded per-worker clocks."""

from __future__ import annotations

import threading
import time
from contextlib import contextmanager

from .model import BenchSpec, PhaseSample


def run_phase(phase: str, iteration: int, workers: list, fn) -> PhaseSample:
    """Run fn(rank, worker) on every worker concurrently and time each one.

    The reported duration is the maximum across workers (slowest straggler),
    `bytes` and `ops` are summed. fn returns (bytes_moved, ops).
    """
    count = len(workers)
    barrier = threading.Barrier(count)
    outcomes: list = [None] * count
    failures: list = [None] * count

    def body(rank: int):
        try:
            barrier.wait()
            t0 = time.perf_counter()
            moved, ops = fn(rank, workers[rank])
            outcomes[rank] = (time.perf_counter() - t0, moved, ops)
        except BaseException as exc:  # noqa: BLE001 - reported to the caller
            barrier.abort()
            failures[rank] = exc

    if count == 1:
        body(0)
    else:
        threads = [
            threading.Thread(target=body, args=(rank,), name=f"bench-w{rank}")
            for rank in range(count)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    for exc in failures:
        if exc is not None and not isinstance(exc, threading.BrokenBarrierError):
            raise exc
    for exc in failures:
        if exc is not None:
            raise exc
    seconds = max(o[0] for o in outcomes)
    return PhaseSample(
        phase=phase,
        iteration=iteration,
        bytes_moved=sum(o[1] for o in outcomes),
        seconds=seconds,
        ops=sum(o[2] for o in outcomes),
    )


@contextmanager
def worker_pool(spec: BenchSpec, target):
    """Open one I/O handle per worker; always closed afterwards."""
    workers = []
    try:
        for _ in range(spec.workers):
            workers.append(target.open_worker())
        yield workers
    finally:
        for w in workers:
            try:
                w.close()
            except Exception:  # noqa: BLE001 - teardown is best-effort
                pass
