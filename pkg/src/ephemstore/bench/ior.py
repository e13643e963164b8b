"""Sequential bulk-I/O workload: shared file or file-per-process."""

from __future__ import annotations

from ..errors import BenchError, VerificationError
from . import patterns
from .model import BenchMode, BenchResult, BenchSpec, Workload
from .runner import run_phase, worker_pool


def _layout(spec: BenchSpec, iteration: int, rank: int) -> tuple[str, int]:
    """(path, base offset) of the region rank writes in this iteration."""
    if spec.mode is BenchMode.SHARED_FILE:
        return f"{spec.workdir}/ior-shared-it{iteration}", rank * spec.size_per_proc_bytes
    return f"{spec.workdir}/ior-fpp-it{iteration}-r{rank}", 0


def _read_rank(spec: BenchSpec, rank: int) -> int:
    """With rank reorder, read a region written on another (virtual) node."""
    if spec.reorder_read_ranks and spec.workers > 1:
        return (rank + spec.ppn) % spec.workers
    return rank


def run_ior(spec: BenchSpec, target) -> BenchResult:
    if spec.workload is not Workload.IOR:
        raise BenchError(f"run_ior got workload {spec.workload.value!r}")
    result = BenchResult(spec=spec)
    size = spec.size_per_proc_bytes
    transfer = spec.transfer_size_bytes
    created: list[str] = []

    with worker_pool(spec, target) as workers:
        lead = workers[0]
        lead.ensure_dirs(spec.workdir)

        for iteration in range(spec.iterations):
            paths = sorted({_layout(spec, iteration, r)[0] for r in range(spec.workers)})
            for path in paths:
                lead.create(path)
            created.extend(paths)

            def write_fn(rank: int, w):
                if size == 0:
                    return 0, 0
                path, base = _layout(spec, iteration, rank)
                for block_start in range(0, size, transfer):
                    offset = base + block_start
                    data = patterns.block(spec.seed, path, offset, transfer)
                    w.write(path, offset, data)
                w.sync(path)
                return size, size // transfer

            result.add_sample(run_phase("write", iteration, workers, write_fn))

            expected_file = size * spec.workers if spec.mode is BenchMode.SHARED_FILE else size
            for path in paths:
                actual = lead.stat_size(path)
                if actual != expected_file:
                    raise BenchError(
                        f"{path}: size {actual} after write phase, expected {expected_file}"
                    )

            def read_fn(rank: int, w):
                if size == 0:
                    return 0, 0
                source = _read_rank(spec, rank)
                path, base = _layout(spec, iteration, source)
                for block_start in range(0, size, transfer):
                    offset = base + block_start
                    expected = patterns.block(spec.seed, path, offset, transfer)
                    actual = w.read(path, offset, transfer)
                    if actual != expected:
                        at = patterns.first_mismatch(expected, actual)
                        raise VerificationError(
                            path, offset + at, f"read of rank {source}'s region"
                        )
                return size, size // transfer

            result.add_sample(run_phase("read", iteration, workers, read_fn))

        if spec.cleanup:
            for path in created:
                lead.unlink(path)

    result.extras["files_per_iteration"] = 1 if spec.mode is BenchMode.SHARED_FILE else spec.workers
    result.extras["file_size_bytes"] = (
        size * spec.workers if spec.mode is BenchMode.SHARED_FILE else size
    )
    return result
