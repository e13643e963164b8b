"""Benchmark harness: bulk-I/O and metadata workloads plus analytic predictors."""

from .attach import DirBenchTarget, StoreBenchTarget
from .hacc import PARTICLE_BYTES, Particle, run_hacc
from .ior import run_ior
from .mdtest import MDTEST_ROWS, run_mdtest
from .model import BenchMode, BenchResult, BenchSpec, PhaseSample, Workload
from .predict import CacheFitReport, aggregate_peak_bw, predict_per_node_volume

__all__ = [
    "BenchMode",
    "BenchResult",
    "BenchSpec",
    "CacheFitReport",
    "DirBenchTarget",
    "MDTEST_ROWS",
    "PARTICLE_BYTES",
    "Particle",
    "PhaseSample",
    "StoreBenchTarget",
    "Workload",
    "aggregate_peak_bw",
    "predict_per_node_volume",
    "run_hacc",
    "run_ior",
    "run_mdtest",
]
