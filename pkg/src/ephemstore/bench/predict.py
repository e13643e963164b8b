"""Analytic predictors: per-storage-node data volume and aggregate peak bandwidth."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import BenchError
from ..inventory import DiskSpec

DEFAULT_DRAM_BYTES = 64 * 10**9


@dataclass(frozen=True)
class CacheFitReport:
    per_node_volume_bytes: int
    dram_bytes: int
    fits: bool


def predict_per_node_volume(
    compute_nodes: int,
    ppn: int,
    size_per_proc_bytes: int,
    storage_nodes: int,
    dram_bytes: int = DEFAULT_DRAM_BYTES,
) -> CacheFitReport:
    """Volume each storage node must absorb when every process writes S_p.

    compute_nodes x ppn x S_p bytes spread over storage_nodes (rounded up);
    `fits` says whether one node's share still fits its DRAM.
    """
    if storage_nodes < 1:
        raise BenchError("storage_nodes must be >= 1")
    if compute_nodes < 0 or ppn < 0 or size_per_proc_bytes < 0:
        raise BenchError("node, process, and size arguments must be >= 0")
    if dram_bytes < 0:
        raise BenchError("dram_bytes must be >= 0")
    total = compute_nodes * ppn * size_per_proc_bytes
    volume = -(-total // storage_nodes)  # ceil division, exact when divisible
    return CacheFitReport(
        per_node_volume_bytes=volume,
        dram_bytes=dram_bytes,
        fits=volume <= dram_bytes,
    )


def aggregate_peak_bw(storage_disks: list[DiskSpec], direction: str = "write") -> int:
    """Sum of the disks' nominal bandwidths in one direction."""
    if not storage_disks:
        raise BenchError("need at least one storage disk")
    if direction == "write":
        return sum(d.nominal_write_bw for d in storage_disks)
    if direction == "read":
        return sum(d.nominal_read_bw for d in storage_disks)
    raise BenchError(f"direction must be 'read' or 'write', got {direction!r}")
