"""Benchmark harness: patterns, spec validation, the three workloads, verification."""

from __future__ import annotations

import struct
import threading

import numpy as np
import pytest

from ephemstore.bench import (
    MDTEST_ROWS,
    BenchMode,
    BenchSpec,
    DirBenchTarget,
    Particle,
    PARTICLE_BYTES,
    StoreBenchTarget,
    Workload,
    run_hacc,
    run_ior,
    run_mdtest,
)
from ephemstore.bench import patterns
from ephemstore.bench.hacc import PARTICLE_DTYPE, PARTICLE_RECORD, particle_array
from ephemstore.bench.mdtest import _tree_paths
from ephemstore.bench.runner import run_phase, worker_pool
from ephemstore.errors import BenchError, VerificationError

KIB = 1 << 10


# -- deterministic data patterns --


def test_block_is_deterministic():
    a = patterns.block(1234, "/bench/f", 65536, 4096)
    b = patterns.block(1234, "/bench/f", 65536, 4096)
    assert a == b
    assert len(a) == 4096


def test_block_varies_with_address():
    base = patterns.block(1, "/f", 0, 512)
    assert patterns.block(2, "/f", 0, 512) != base  # seed
    assert patterns.block(1, "/g", 0, 512) != base  # file
    assert patterns.block(1, "/f", 512, 512) != base  # offset


def test_block_zero_length():
    assert patterns.block(1, "/f", 0, 0) == b""


def test_first_mismatch_positions():
    data = bytes(range(256))
    assert patterns.first_mismatch(data, data) == -1
    for at in (0, 1, 100, 255):
        bad = bytearray(data)
        bad[at] ^= 0xFF
        assert patterns.first_mismatch(data, bytes(bad)) == at


def test_first_mismatch_length_difference():
    # equal prefix, different lengths: first divergence is at the short end
    assert patterns.first_mismatch(b"abcdef", b"abc") == 3
    assert patterns.first_mismatch(b"abc", b"abcdef") == 3


# -- workload specification --


def test_spec_coerces_enum_strings():
    spec = BenchSpec(workload="ior", mode="file_per_process")
    assert spec.workload is Workload.IOR
    assert spec.mode is BenchMode.FILE_PER_PROCESS


def test_spec_workers_is_nodes_times_ppn():
    assert BenchSpec(workload="ior", nodes=3, ppn=4).workers == 12


@pytest.mark.parametrize(
    "kwargs",
    [
        {"nodes": 0},
        {"ppn": 0},
        {"iterations": 0},
        {"transfer_size_bytes": 0},
        {"size_per_proc_bytes": -1},
        {"particles_per_proc": -1},
        {"items_per_proc": -1},
        # transfer must evenly divide the per-process size
        {"size_per_proc_bytes": 3 * KIB, "transfer_size_bytes": 2 * KIB},
    ],
)
def test_spec_rejects_bad_values(kwargs):
    with pytest.raises(BenchError):
        BenchSpec(workload="ior", **kwargs)


def test_spec_rejects_unknown_workload():
    with pytest.raises(ValueError):
        BenchSpec(workload="bonnie")


# -- phase engine --


class _NullWorker:
    def __init__(self, log):
        self._log = log

    def close(self):
        self._log.append("closed")


class _NullTarget:
    def __init__(self, log, fail_after=None):
        self.log = log
        self._fail_after = fail_after
        self._opened = 0

    def open_worker(self):
        if self._fail_after is not None and self._opened >= self._fail_after:
            raise RuntimeError("no more workers")
        self._opened += 1
        return _NullWorker(self.log)


def test_run_phase_sums_bytes_and_ops_takes_max_seconds():
    workers = [object(), object(), object()]
    sample = run_phase("write", 2, workers, lambda rank, w: (100 * (rank + 1), rank + 1))
    assert sample.phase == "write"
    assert sample.iteration == 2
    assert sample.bytes_moved == 600
    assert sample.ops == 6
    assert sample.seconds > 0
    assert sample.bandwidth == sample.bytes_moved / sample.seconds


def test_run_phase_single_worker_runs_inline():
    seen = []
    run_phase("read", 0, [object()], lambda rank, w: seen.append(threading.current_thread()) or (0, 1))
    assert seen == [threading.main_thread()]


def test_run_phase_propagates_worker_failure():
    def fn(rank, w):
        if rank == 1:
            raise RuntimeError("disk on fire")
        return (0, 1)

    with pytest.raises(RuntimeError, match="disk on fire"):
        run_phase("write", 0, [object(), object(), object()], fn)


def test_worker_pool_closes_workers_on_error():
    log = []
    with pytest.raises(RuntimeError, match="boom"):
        with worker_pool(BenchSpec(workload="ior", nodes=1, ppn=3), _NullTarget(log)):
            raise RuntimeError("boom")
    assert log == ["closed"] * 3


def test_worker_pool_closes_partial_pool_when_open_fails():
    log = []
    with pytest.raises(RuntimeError, match="no more workers"):
        with worker_pool(BenchSpec(workload="ior", nodes=1, ppn=3), _NullTarget(log, fail_after=2)):
            pass  # pragma: no cover - open fails first
    assert log == ["closed"] * 2


# -- delegating wrappers used to inject faults into a healthy target --


class _WrappedTarget:
    kind = "dir"

    def __init__(self, inner, wrap):
        self._inner = inner
        self._wrap = wrap

    def open_worker(self):
        return self._wrap(self._inner.open_worker())


class _Delegate:
    def __init__(self, worker):
        self._worker = worker

    def __getattr__(self, name):
        return getattr(self._worker, name)


class _FlipByteOnRead(_Delegate):
    """Returns read data with one absolute byte inverted."""

    def __init__(self, worker, path_token: str, at: int):
        super().__init__(worker)
        self._token = path_token
        self._at = at

    def read(self, path, offset, length):
        data = self._worker.read(path, offset, length)
        if self._token in path and offset <= self._at < offset + len(data):
            i = self._at - offset
            data = data[:i] + bytes([data[i] ^ 0xFF]) + data[i + 1 :]
        return data


class _DropWriteAt(_Delegate):
    """Silently discards the write landing at one offset."""

    def __init__(self, worker, offset: int):
        super().__init__(worker)
        self._offset = offset

    def write(self, path, offset, data):
        if offset == self._offset:
            return len(data)
        return self._worker.write(path, offset, data)


class _TruncateRead(_Delegate):
    def read(self, path, offset, length):
        return self._worker.read(path, offset, length)[:-1]


class _LyingStatKind(_Delegate):
    def __init__(self, worker, path_suffix: str, claim: str):
        super().__init__(worker)
        self._suffix = path_suffix
        self._claim = claim

    def stat_kind(self, path):
        if path.endswith(self._suffix):
            return self._claim
        return self._worker.stat_kind(path)


# -- bulk-I/O workload on a plain directory --


def _ior_spec(**kwargs) -> BenchSpec:
    base = dict(
        workload="ior",
        nodes=2,
        ppn=2,
        size_per_proc_bytes=256 * KIB,
        transfer_size_bytes=64 * KIB,
        iterations=3,
        cleanup=False,
    )
    base.update(kwargs)
    return BenchSpec(**base)


def test_ior_shared_file_rows_bytes_and_content(tmp_path):
    spec = _ior_spec()
    result = run_ior(spec, DirBenchTarget(str(tmp_path)))

    assert len(result.samples) == spec.iterations * 2
    for sample in result.phase_samples("write"):
        assert sample.bytes_moved == spec.workers * spec.size_per_proc_bytes
        assert sample.ops == spec.workers * (spec.size_per_proc_bytes // spec.transfer_size_bytes)
    assert len(result.phase_samples("read")) == spec.iterations
    assert len(result.per_iteration) == spec.iterations
    assert result.extras["files_per_iteration"] == 1
    assert result.extras["file_size_bytes"] == spec.workers * spec.size_per_proc_bytes

    # on-disk bytes equal the addressable pattern, tiled over every rank region
    token = "/bench/ior-shared-it0"
    total = spec.workers * spec.size_per_proc_bytes
    expected = b"".join(
        patterns.block(spec.seed, token, off, spec.transfer_size_bytes)
        for off in range(0, total, spec.transfer_size_bytes)
    )
    on_disk = (tmp_path / "bench" / "ior-shared-it0").read_bytes()
    assert on_disk == expected


def test_ior_file_per_process_layout(tmp_path):
    spec = _ior_spec(mode="file_per_process", iterations=2)
    result = run_ior(spec, DirBenchTarget(str(tmp_path)))

    assert result.extras["files_per_iteration"] == spec.workers
    assert result.extras["file_size_bytes"] == spec.size_per_proc_bytes
    names = sorted(p.name for p in (tmp_path / "bench").iterdir())
    assert names == sorted(
        f"ior-fpp-it{i}-r{r}" for i in range(spec.iterations) for r in range(spec.workers)
    )
    for name in names:
        assert (tmp_path / "bench" / name).stat().st_size == spec.size_per_proc_bytes


def test_ior_cleanup_removes_files(tmp_path):
    run_ior(_ior_spec(cleanup=True, iterations=1), DirBenchTarget(str(tmp_path)))
    assert list((tmp_path / "bench").iterdir()) == []


def test_ior_reordered_reads_still_verify(tmp_path):
    spec = _ior_spec(nodes=3, ppn=1, reorder_read_ranks=True, iterations=1)
    result = run_ior(spec, DirBenchTarget(str(tmp_path)))
    assert len(result.phase_samples("read")) == 1


def test_ior_rejects_wrong_workload(tmp_path):
    with pytest.raises(BenchError, match="run_ior got workload 'mdtest'"):
        run_ior(BenchSpec(workload="mdtest"), DirBenchTarget(str(tmp_path)))


def test_ior_detects_short_file_after_write(tmp_path):
    spec = _ior_spec(iterations=1)
    last_block = spec.workers * spec.size_per_proc_bytes - spec.transfer_size_bytes
    target = _WrappedTarget(
        DirBenchTarget(str(tmp_path)), lambda w: _DropWriteAt(w, last_block)
    )
    with pytest.raises(BenchError, match="after write phase"):
        run_ior(spec, target)


def test_ior_read_verification_pinpoints_corrupt_byte(tmp_path):
    spec = _ior_spec(iterations=1)
    corrupt_at = 3 * spec.size_per_proc_bytes + 5 * KIB + 17  # inside rank 3's region
    target = _WrappedTarget(
        DirBenchTarget(str(tmp_path)),
        lambda w: _FlipByteOnRead(w, "ior-shared-it0", corrupt_at),
    )
    with pytest.raises(VerificationError) as exc_info:
        run_ior(spec, target)
    assert exc_info.value.path == "/bench/ior-shared-it0"
    assert exc_info.value.offset == corrupt_at


# -- particle workload --


def test_particle_record_is_38_bytes():
    assert PARTICLE_BYTES == 38
    assert PARTICLE_RECORD.size == 38
    assert PARTICLE_DTYPE.itemsize == 38


def test_particle_pack_unpack_round_trip():
    p = Particle(0.5, 0.25, 0.125, -1.0, 2.0, -4.0, 0.75, 123456789, 40000)
    assert len(p.pack()) == PARTICLE_BYTES
    assert Particle.unpack(p.pack()) == p


def test_particle_array_matches_struct_packing():
    # the array's raw bytes equal packing each record independently
    arr = particle_array(7, "/bench/hacc-it0", 2, 5)
    packed = b"".join(PARTICLE_RECORD.pack(*record) for record in arr.tolist())
    assert arr.tobytes() == packed
    assert len(packed) == 5 * PARTICLE_BYTES


def test_particle_array_deterministic_and_rank_distinct():
    a = particle_array(1234, "/f", 0, 100)
    b = particle_array(1234, "/f", 0, 100)
    assert a.tobytes() == b.tobytes()
    assert particle_array(1234, "/f", 1, 100).tobytes() != a.tobytes()
    # particle ids form one global sequence across ranks
    assert list(particle_array(1234, "/f", 3, 4)["pid"]) == [12, 13, 14, 15]


def _hacc_spec(**kwargs) -> BenchSpec:
    base = dict(workload="hacc", nodes=3, ppn=1, particles_per_proc=5, iterations=1, cleanup=False)
    base.update(kwargs)
    return BenchSpec(**base)


def test_hacc_shared_file_is_rank_ordered_concat(tmp_path):
    spec = _hacc_spec()
    result = run_hacc(spec, DirBenchTarget(str(tmp_path)))

    region = 5 * PARTICLE_BYTES
    assert result.extras["region_bytes"] == region
    assert result.extras["file_size_bytes"] == 3 * region
    assert result.extras["particle_bytes"] == 38

    token = "/bench/hacc-it0"
    expected = b"".join(particle_array(spec.seed, token, rank, 5).tobytes() for rank in range(3))
    assert (tmp_path / "bench" / "hacc-it0").read_bytes() == expected


def test_hacc_sample_accounting(tmp_path):
    spec = _hacc_spec(iterations=2, cleanup=True)
    result = run_hacc(spec, DirBenchTarget(str(tmp_path)))
    assert len(result.samples) == 4
    for sample in result.samples:
        assert sample.bytes_moved == 3 * 5 * PARTICLE_BYTES
        assert sample.ops == 3 * 5  # particles moved
    assert list((tmp_path / "bench").iterdir()) == []


def test_hacc_verification_names_field_and_record(tmp_path):
    spec = _hacc_spec()
    region = 5 * PARTICLE_BYTES
    # first byte of record 2's phi field, inside rank 1's region
    phi_offset = PARTICLE_DTYPE.fields["phi"][1]
    corrupt_at = 1 * region + 2 * PARTICLE_BYTES + phi_offset
    target = _WrappedTarget(
        DirBenchTarget(str(tmp_path)), lambda w: _FlipByteOnRead(w, "hacc-it0", corrupt_at)
    )
    with pytest.raises(VerificationError, match="field phi of record 2") as exc_info:
        run_hacc(spec, target)
    assert exc_info.value.offset == corrupt_at


def test_hacc_verification_rejects_short_region(tmp_path):
    target = _WrappedTarget(DirBenchTarget(str(tmp_path)), _TruncateRead)
    with pytest.raises(VerificationError, match="region length"):
        run_hacc(_hacc_spec(), target)


def test_hacc_rejects_wrong_workload(tmp_path):
    with pytest.raises(BenchError, match="run_hacc got workload 'ior'"):
        run_hacc(BenchSpec(workload="ior"), DirBenchTarget(str(tmp_path)))


# -- metadata workload --


def test_tree_paths_list_parents_before_children():
    paths = _tree_paths("/w0", 10)
    assert len(paths) == 10
    assert paths[0] == "/w0/t0"
    seen = {"/w0"}
    for path in paths:
        parent = path.rsplit("/", 1)[0]
        assert parent in seen
        seen.add(path)


def _mdtest_spec(**kwargs) -> BenchSpec:
    base = dict(workload="mdtest", nodes=2, ppn=1, items_per_proc=10, iterations=2)
    base.update(kwargs)
    return BenchSpec(**base)


def test_mdtest_rows_and_exact_op_counts(tmp_path):
    spec = _mdtest_spec()
    result = run_mdtest(spec, DirBenchTarget(str(tmp_path)))

    assert set(result.op_counts) == set(MDTEST_ROWS)
    expected_ops = spec.workers * spec.items_per_proc * spec.iterations
    for row in MDTEST_ROWS:
        assert result.op_counts[row] == expected_ops

    # reported rate times accumulated wall time reproduces the op count exactly
    for kind, op in MDTEST_ROWS:
        phase = f"{kind}-{op}"
        seconds = sum(s.seconds for s in result.phase_samples(phase))
        rate = result.ops_table[(kind, op)]
        assert rate > 0
        assert rate * seconds == pytest.approx(expected_ops, rel=1e-12)

    assert len(result.samples) == len(MDTEST_ROWS) * spec.iterations
    # cleanup leaves nothing under the namespace root
    assert list((tmp_path / "bench").iterdir()) == []


def test_mdtest_refuses_namespace_residue(tmp_path):
    (tmp_path / "bench" / "mdtest").mkdir(parents=True)
    with pytest.raises(BenchError, match="namespace residue"):
        run_mdtest(_mdtest_spec(), DirBenchTarget(str(tmp_path)))


def test_mdtest_keeps_namespace_without_cleanup(tmp_path):
    run_mdtest(_mdtest_spec(cleanup=False, iterations=1), DirBenchTarget(str(tmp_path)))
    assert (tmp_path / "bench" / "mdtest").is_dir()


def test_mdtest_stat_phase_verifies_kind(tmp_path):
    target = _WrappedTarget(
        DirBenchTarget(str(tmp_path)), lambda w: _LyingStatKind(w, "/d000003", "file")
    )
    with pytest.raises(VerificationError, match="stat says file, expected directory"):
        run_mdtest(_mdtest_spec(iterations=1), target)


def test_mdtest_rejects_wrong_workload(tmp_path):
    with pytest.raises(BenchError, match="run_mdtest got workload 'hacc'"):
        run_mdtest(BenchSpec(workload="hacc"), DirBenchTarget(str(tmp_path)))


# -- the same workloads against a live deployed store --


def test_ior_runs_against_store(mesh_factory):
    mesh = mesh_factory(storage_targets=2, metadata_services=1, stripe_size=64 * KIB)
    target = StoreBenchTarget(mesh.session)
    spec = BenchSpec(
        workload="ior",
        nodes=2,
        ppn=1,
        size_per_proc_bytes=128 * KIB,
        transfer_size_bytes=64 * KIB,
        iterations=2,
    )
    result = run_ior(spec, target)
    assert len(result.samples) == 4
    assert result.write_bw > 0
    assert result.read_bw > 0


def test_hacc_runs_against_store(mesh_factory):
    mesh = mesh_factory(storage_targets=2, metadata_services=1, stripe_size=64 * KIB)
    result = run_hacc(
        BenchSpec(workload="hacc", nodes=2, ppn=1, particles_per_proc=100, iterations=1),
        StoreBenchTarget(mesh.session),
    )
    assert result.extras["file_size_bytes"] == 2 * 100 * PARTICLE_BYTES


def test_mdtest_runs_against_store(mesh_factory):
    mesh = mesh_factory(storage_targets=1, metadata_services=2, stripe_size=64 * KIB)
    result = run_mdtest(
        BenchSpec(workload="mdtest", nodes=2, ppn=1, items_per_proc=5, iterations=1),
        StoreBenchTarget(mesh.session),
    )
    for row in MDTEST_ROWS:
        assert result.op_counts[row] == 10
