"""Workload descriptions and measured results."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from enum import Enum

from ..errors import BenchError


class Workload(str, Enum):
    IOR = "ior"
    MDTEST = "mdtest"
    HACC = "hacc"


class BenchMode(str, Enum):
    SHARED_FILE = "shared_file"
    FILE_PER_PROCESS = "file_per_process"


@dataclass
class BenchSpec:
    workload: Workload
    nodes: int = 1
    ppn: int = 1
    size_per_proc_bytes: int = 0
    transfer_size_bytes: int = 1 << 20
    mode: BenchMode = BenchMode.SHARED_FILE
    particles_per_proc: int = 0
    items_per_proc: int = 1000
    iterations: int = 10
    reorder_read_ranks: bool = False
    seed: int = 1234
    workdir: str = "/bench"
    cleanup: bool = True

    def __post_init__(self):
        self.workload = Workload(self.workload)
        self.mode = BenchMode(self.mode)
        if self.nodes * self.ppn < 1:
            raise BenchError("nodes x ppn must be >= 1")
        if self.iterations < 1:
            raise BenchError("iterations must be >= 1")
        if self.transfer_size_bytes < 1:
            raise BenchError("transfer_size_bytes must be >= 1")
        if self.size_per_proc_bytes < 0 or self.particles_per_proc < 0 or self.items_per_proc < 0:
            raise BenchError("sizes and counts must be >= 0")
        if (
            self.size_per_proc_bytes
            and self.size_per_proc_bytes % self.transfer_size_bytes != 0
        ):
            raise BenchError(
                f"transfer size {self.transfer_size_bytes} must divide "
                f"size per process {self.size_per_proc_bytes}"
            )

    @property
    def workers(self) -> int:
        return self.nodes * self.ppn


@dataclass
class PhaseSample:
    """One timed phase of one iteration, aggregated across workers."""

    phase: str
    iteration: int
    bytes_moved: int
    seconds: float  # max across workers
    ops: int = 0

    @property
    def bandwidth(self) -> float:
        return self.bytes_moved / self.seconds if self.seconds > 0 else 0.0

    @property
    def ops_per_sec(self) -> float:
        return self.ops / self.seconds if self.seconds > 0 else 0.0


def _median(values: list[float]) -> float:
    return statistics.median(values) if values else 0.0


@dataclass
class BenchResult:
    spec: BenchSpec
    samples: list[PhaseSample] = field(default_factory=list)
    ops_table: dict = field(default_factory=dict)  # (target, op) -> ops/sec
    elapsed: dict = field(default_factory=dict)  # phase -> summed seconds
    op_counts: dict = field(default_factory=dict)  # (target, op) -> exact op count
    extras: dict = field(default_factory=dict)

    def phase_samples(self, phase: str) -> list[PhaseSample]:
        return [s for s in self.samples if s.phase == phase]

    def phase_bandwidths(self, phase: str) -> list[float]:
        return [s.bandwidth for s in self.phase_samples(phase)]

    @property
    def per_iteration(self) -> list[tuple[float, float]]:
        writes = {s.iteration: s.bandwidth for s in self.phase_samples("write")}
        reads = {s.iteration: s.bandwidth for s in self.phase_samples("read")}
        return [
            (writes.get(i, 0.0), reads.get(i, 0.0))
            for i in sorted(set(writes) | set(reads))
        ]

    @property
    def write_bw(self) -> float:
        return _median(self.phase_bandwidths("write"))

    @property
    def read_bw(self) -> float:
        return _median(self.phase_bandwidths("read"))

    def add_sample(self, sample: PhaseSample):
        self.samples.append(sample)
        self.elapsed[sample.phase] = self.elapsed.get(sample.phase, 0.0) + sample.seconds
