"""Result serialization: bandwidth CSV, ops CSV, and text summaries."""

from __future__ import annotations

import statistics

from .hacc import PARTICLE_BYTES
from .mdtest import MDTEST_ROWS
from .model import BenchResult, Workload

BANDWIDTH_HEADER = (
    "workload,mode,nodes,ppn,size_per_proc,iteration,phase,bytes,seconds,"
    "bandwidth_bytes_per_s"
)
OPS_HEADER = "workload,target,operation,ops,seconds,ops_per_sec"


def _size_per_proc(result: BenchResult) -> int:
    spec = result.spec
    if spec.workload is Workload.HACC:
        return spec.particles_per_proc * PARTICLE_BYTES
    if spec.workload is Workload.IOR:
        return spec.size_per_proc_bytes
    return 0


def bandwidth_csv(result: BenchResult) -> str:
    spec = result.spec
    size = _size_per_proc(result)
    lines = [BANDWIDTH_HEADER]
    for s in result.samples:
        lines.append(
            f"{spec.workload.value},{spec.mode.value},{spec.nodes},{spec.ppn},"
            f"{size},{s.iteration},{s.phase},{s.bytes_moved},{s.seconds:.9f},"
            f"{s.bandwidth:.6f}"
        )
    return "\n".join(lines) + "\n"


def ops_csv(result: BenchResult) -> str:
    lines = [OPS_HEADER]
    for target, op in MDTEST_ROWS:
        phase = f"{target}-{op}"
        seconds = result.elapsed.get(phase, 0.0)
        ops = result.op_counts.get((target, op), 0)
        rate = result.ops_table.get((target, op), 0.0)
        lines.append(
            f"{result.spec.workload.value},{target},{op},{ops},{seconds:.9f},{rate:.6f}"
        )
    return "\n".join(lines) + "\n"


def _stats_line(phase: str, values: list[float], unit: str) -> str:
    if not values:
        return f"  {phase}: no samples"
    return (
        f"  {phase}: min={min(values):,.0f} median={statistics.median(values):,.0f} "
        f"max={max(values):,.0f} {unit} over {len(values)} iteration(s)"
    )


def summary_text(result: BenchResult) -> str:
    spec = result.spec
    lines = [
        f"workload={spec.workload.value} mode={spec.mode.value} "
        f"nodes={spec.nodes} ppn={spec.ppn} workers={spec.workers} "
        f"iterations={spec.iterations}"
    ]
    if spec.workload is Workload.MDTEST:
        lines.append(f"  items per process: {spec.items_per_proc}")
        for target, op in MDTEST_ROWS:
            rate = result.ops_table.get((target, op), 0.0)
            ops = result.op_counts.get((target, op), 0)
            lines.append(f"  {target} {op}: {rate:,.1f} ops/s ({ops} ops)")
    else:
        if spec.workload is Workload.HACC:
            lines.append(
                f"  particles per process: {spec.particles_per_proc} "
                f"({spec.particles_per_proc * PARTICLE_BYTES} bytes per region)"
            )
            lines.append(f"  file size: {result.extras.get('file_size_bytes', 0)} bytes")
        for phase in ("write", "read"):
            lines.append(_stats_line(phase, result.phase_bandwidths(phase), "B/s"))
    return "\n".join(lines) + "\n"
