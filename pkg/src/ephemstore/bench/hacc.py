"""Cosmology particle workload: 38-byte records, one shared file, rank regions."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import BenchError, VerificationError
from .model import BenchResult, BenchSpec, Workload
from .patterns import _key
from .runner import run_phase, worker_pool

PARTICLE_RECORD = struct.Struct("<fffffffqH")
PARTICLE_BYTES = PARTICLE_RECORD.size

PARTICLE_FIELDS = ("xx", "yy", "zz", "vx", "vy", "vz", "phi", "pid", "mask")
PARTICLE_DTYPE = np.dtype(
    [
        ("xx", "<f4"),
        ("yy", "<f4"),
        ("zz", "<f4"),
        ("vx", "<f4"),
        ("vy", "<f4"),
        ("vz", "<f4"),
        ("phi", "<f4"),
        ("pid", "<i8"),
        ("mask", "<u2"),
    ]
)
assert PARTICLE_DTYPE.itemsize == PARTICLE_BYTES == 38


@dataclass(frozen=True)
class Particle:
    xx: float
    yy: float
    zz: float
    vx: float
    vy: float
    vz: float
    phi: float
    pid: int
    mask: int

    def pack(self) -> bytes:
        return PARTICLE_RECORD.pack(
            self.xx, self.yy, self.zz, self.vx, self.vy, self.vz,
            self.phi, self.pid, self.mask,
        )

    @classmethod
    def unpack(cls, record: bytes) -> "Particle":
        return cls(*PARTICLE_RECORD.unpack(record))


def particle_array(seed: int, token: str, rank: int, count: int) -> np.ndarray:
    """Deterministic per-rank particle batch in record layout."""
    rng = np.random.Generator(np.random.PCG64(_key(seed, f"{token}:r{rank}", 0)))
    arr = np.empty(count, dtype=PARTICLE_DTYPE)
    for name in ("xx", "yy", "zz", "vx", "vy", "vz", "phi"):
        arr[name] = rng.random(count, dtype=np.float32)
    arr["pid"] = rank * count + np.arange(count, dtype=np.int64)
    arr["mask"] = rng.integers(0, 1 << 16, size=count, dtype=np.uint16)
    return arr


def _verify_region(path: str, base: int, expected: np.ndarray, actual: bytes):
    if len(actual) != expected.nbytes:
        raise VerificationError(
            path, base + min(len(actual), expected.nbytes),
            f"region length {len(actual)}, expected {expected.nbytes}",
        )
    got = np.frombuffer(actual, dtype=PARTICLE_DTYPE)
    for name in PARTICLE_FIELDS:
        mismatch = np.nonzero(got[name] != expected[name])[0]
        if mismatch.size:
            index = int(mismatch[0])
            field_offset = PARTICLE_DTYPE.fields[name][1]
            raise VerificationError(
                path,
                base + index * PARTICLE_BYTES + field_offset,
                f"field {name} of record {index}",
            )


def run_hacc(spec: BenchSpec, target) -> BenchResult:
    if spec.workload is not Workload.HACC:
        raise BenchError(f"run_hacc got workload {spec.workload.value!r}")
    result = BenchResult(spec=spec)
    count = spec.particles_per_proc
    region = count * PARTICLE_BYTES
    total = region * spec.workers

    with worker_pool(spec, target) as workers:
        lead = workers[0]
        lead.ensure_dirs(spec.workdir)

        for iteration in range(spec.iterations):
            path = f"{spec.workdir}/hacc-it{iteration}"
            lead.create(path)

            def write_fn(rank: int, w):
                if count == 0:
                    return 0, 0
                buf = particle_array(spec.seed, path, rank, count).tobytes()
                w.write(path, rank * region, buf)
                w.sync(path)
                return region, count

            result.add_sample(run_phase("write", iteration, workers, write_fn))

            actual_size = lead.stat_size(path)
            if actual_size != total:
                raise BenchError(f"{path}: size {actual_size}, expected {total}")

            def read_fn(rank: int, w):
                if count == 0:
                    return 0, 0
                source = rank
                if spec.reorder_read_ranks and spec.workers > 1:
                    source = (rank + spec.ppn) % spec.workers
                expected = particle_array(spec.seed, path, source, count)
                actual = w.read(path, source * region, region)
                _verify_region(path, source * region, expected, actual)
                return region, count

            result.add_sample(run_phase("read", iteration, workers, read_fn))

            if spec.cleanup:
                lead.unlink(path)

    result.extras["file_size_bytes"] = total
    result.extras["region_bytes"] = region
    result.extras["particle_bytes"] = PARTICLE_BYTES
    return result
