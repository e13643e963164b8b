"""Metadata workload: timed create/stat/read/remove over private subtrees."""

from __future__ import annotations

from ..errors import BenchError, VerificationError
from .model import BenchResult, BenchSpec, Workload
from .runner import run_phase, worker_pool

MDTEST_ROWS = (
    ("directory", "creation"),
    ("directory", "stat"),
    ("directory", "removal"),
    ("file", "creation"),
    ("file", "stat"),
    ("file", "read"),
    ("file", "removal"),
    ("tree", "creation"),
    ("tree", "removal"),
)


def _tree_paths(root: str, count: int) -> list[str]:
    """A binary directory tree of `count` nodes, parents before children."""
    paths: list[str] = []
    for index in range(count):
        if index == 0:
            paths.append(f"{root}/t0")
        else:
            paths.append(f"{paths[(index - 1) // 2]}/t{index}")
    return paths


def run_mdtest(spec: BenchSpec, target) -> BenchResult:
    if spec.workload is not Workload.MDTEST:
        raise BenchError(f"run_mdtest got workload {spec.workload.value!r}")
    result = BenchResult(spec=spec)
    items = spec.items_per_proc
    base = f"{spec.workdir}/mdtest"

    with worker_pool(spec, target) as workers:
        lead = workers[0]
        lead.ensure_dirs(spec.workdir)
        if lead.exists(base):
            raise BenchError(
                f"namespace residue from a previous run at {base}; remove it first"
            )
        lead.mkdir(base)
        subtrees = [f"{base}/w{rank}" for rank in range(spec.workers)]
        for subtree in subtrees:
            lead.mkdir(subtree)

        def dir_paths(rank: int) -> list[str]:
            return [f"{subtrees[rank]}/d{i:06d}" for i in range(items)]

        def file_paths(rank: int) -> list[str]:
            return [f"{subtrees[rank]}/f{i:06d}" for i in range(items)]

        phases = [
            ("directory", "creation", lambda w, p: w.mkdir(p), dir_paths, False),
            ("directory", "stat", None, dir_paths, False),
            ("directory", "removal", lambda w, p: w.rmdir(p), dir_paths, False),
            ("file", "creation", lambda w, p: w.create(p), file_paths, False),
            ("file", "stat", None, file_paths, True),
            ("file", "read", lambda w, p: w.read_full(p), file_paths, False),
            ("file", "removal", lambda w, p: w.unlink(p), file_paths, False),
        ]

        for iteration in range(spec.iterations):
            for kind, op, action, path_fn, is_file in phases:

                def fn(rank: int, w, action=action, path_fn=path_fn, kind=kind, is_file=is_file):
                    ops = 0
                    for path in path_fn(rank):
                        if action is None:
                            seen = w.stat_kind(path)
                            want = "file" if is_file else "directory"
                            if seen != want:
                                raise VerificationError(path, 0, f"stat says {seen}, expected {want}")
                        else:
                            action(w, path)
                        ops += 1
                    return 0, ops

                sample = run_phase(f"{kind}-{op}", iteration, workers, fn)
                result.add_sample(sample)

            def tree_create(rank: int, w):
                ops = 0
                for path in _tree_paths(subtrees[rank], items):
                    w.mkdir(path)
                    ops += 1
                return 0, ops

            result.add_sample(run_phase("tree-creation", iteration, workers, tree_create))

            def tree_remove(rank: int, w):
                ops = 0
                for path in reversed(_tree_paths(subtrees[rank], items)):
                    w.rmdir(path)
                    ops += 1
                return 0, ops

            result.add_sample(run_phase("tree-removal", iteration, workers, tree_remove))

        if spec.cleanup:
            lead.remove_tree(base)

    for kind, op in MDTEST_ROWS:
        phase = f"{kind}-{op}"
        phase_samples = result.phase_samples(phase)
        total_ops = sum(s.ops for s in phase_samples)
        total_seconds = sum(s.seconds for s in phase_samples)
        result.op_counts[(kind, op)] = total_ops
        result.ops_table[(kind, op)] = (
            total_ops / total_seconds if total_seconds > 0 and total_ops else 0.0
        )
    return result
