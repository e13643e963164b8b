"""Deployment registry behind the HTTP service: owns clusters and live handles."""

from __future__ import annotations

import hashlib
import threading

from ..bench import (
    BenchSpec,
    DirBenchTarget,
    StoreBenchTarget,
    Workload,
    run_hacc,
    run_ior,
    run_mdtest,
)
from ..bench import report as bench_report
from ..errors import AllocationError, BenchError, EphemstoreError
from ..executor import (
    Backend,
    NodeExecutor,
    attach_clients,
    deploy,
    stage,
    teardown,
)
from ..inventory import AllocationRequest, Cluster, NodeKind, Purpose, load_inventory
from ..ministore.client import Session
from ..planner import DeploymentPlan, format_role_table, plan_deployment, render_configs
from . import schemas


class UnknownDeploymentError(EphemstoreError):
    """No live deployment with that id."""


class BusyDeploymentError(EphemstoreError):
    """The deployment is already running a benchmark."""


_BACKENDS = {"local": Backend.LOCAL_PROCESS, "emit": Backend.EXTERNAL_EMIT}

_RUNNERS = {
    Workload.IOR: run_ior,
    Workload.MDTEST: run_mdtest,
    Workload.HACC: run_hacc,
}


class ManagedDeployment:
    def __init__(self, handle, cluster, allocation, nodes, working_root):
        self.handle = handle
        self.cluster = cluster
        self.allocation = allocation
        self.nodes = nodes  # full inventory behind this deployment
        self.working_root = working_root
        self.bench_lock = threading.Lock()

    def record(self) -> schemas.DeploymentRecord:
        handle = self.handle
        address, port = handle.mgmt_endpoint
        return schemas.DeploymentRecord(
            deployment_id=handle.deployment_id,
            backend=handle.executor.backend.value,
            working_root=self.working_root,
            allocation_nodes=list(self.allocation.node_ids),
            services={sid: st.value for sid, st in handle.service_states.items()},
            timings={k: float(v) for k, v in handle.timings.items()},
            mgmt_address=address,
            mgmt_port=port,
            running=handle.all_running(),
            failed=handle.failed_services(),
            clients=sorted(handle.client_mounts),
            notes=list(handle.notes),
        )


def _build_plan(cluster: Cluster, req: schemas.PlanRequest) -> tuple[DeploymentPlan, object]:
    request = AllocationRequest(
        count=req.storage_nodes, constraint=req.constraint, purpose=Purpose.STORAGE
    )
    allocation = cluster.request_allocation(request)
    try:
        plan = plan_deployment(allocation, req.policy.to_policy())
    except EphemstoreError:
        cluster.release_allocation(allocation)
        raise
    return plan, allocation


def _plan_response(plan: DeploymentPlan) -> schemas.PlanResponse:
    return schemas.PlanResponse(
        allocation_nodes=[n.id for n in plan.allocation.nodes],
        assignments=[
            schemas.RoleRow(
                node=a.node.id, disk=a.disk.id, role=a.role.value, data_dir=a.disk.mount_root
            )
            for a in plan.assignments
        ],
        startup_order=list(plan.startup_order),
        role_table=format_role_table(plan),
        configs=dict(render_configs(plan)),
    )


class DeploymentManager:
    def __init__(self):
        self._lock = threading.Lock()
        self._deployments: dict[str, ManagedDeployment] = {}
        self._clusters: dict[str, Cluster] = {}

    # -- helpers ---------------------------------------------------------------

    def _cluster_for(self, inventory_text: str) -> Cluster:
        key = hashlib.sha256(inventory_text.encode()).hexdigest()
        with self._lock:
            cluster = self._clusters.get(key)
            if cluster is None:
                cluster = Cluster(load_inventory(inventory_text))
                self._clusters[key] = cluster
            return cluster

    def _get(self, deployment_id: str) -> ManagedDeployment:
        with self._lock:
            managed = self._deployments.get(deployment_id)
        if managed is None:
            raise UnknownDeploymentError(f"no deployment {deployment_id!r}")
        return managed

    # -- operations ---------------------------------------------------------------

    def plan(self, req: schemas.PlanRequest) -> schemas.PlanResponse:
        # stateless: a throwaway cluster, so nothing stays held
        cluster = Cluster(load_inventory(req.inventory_text))
        plan, allocation = _build_plan(cluster, req)
        response = _plan_response(plan)
        cluster.release_allocation(allocation)
        return response

    def create_deployment(self, req: schemas.DeployRequest) -> schemas.DeploymentRecord:
        backend = _BACKENDS.get(req.backend)
        if backend is None:
            raise BenchError(f"backend must be one of {sorted(_BACKENDS)}, got {req.backend!r}")
        cluster = self._cluster_for(req.inventory_text)
        plan, allocation = _build_plan(cluster, req)
        executor = NodeExecutor(backend=backend, working_root=req.working_root)
        try:
            handle = deploy(plan, executor)
        except EphemstoreError:
            cluster.release_allocation(allocation)
            raise
        cluster.mark_active(allocation)
        managed = ManagedDeployment(
            handle=handle,
            cluster=cluster,
            allocation=allocation,
            nodes=load_inventory(req.inventory_text),
            working_root=executor.working_root,
        )
        with self._lock:
            self._deployments[handle.deployment_id] = managed
        return managed.record()

    def list_deployments(self) -> list[schemas.DeploymentRecord]:
        with self._lock:
            managed = list(self._deployments.values())
        return [m.record() for m in managed]

    def get_record(self, deployment_id: str) -> schemas.DeploymentRecord:
        return self._get(deployment_id).record()

    def attach(self, deployment_id: str, req: schemas.AttachRequest) -> schemas.AttachResponse:
        managed = self._get(deployment_id)
        compute = sorted(
            (n for n in managed.nodes if n.kind is NodeKind.COMPUTE), key=lambda n: n.id
        )
        if req.nodes is not None:
            by_id = {n.id: n for n in compute}
            missing = [nid for nid in req.nodes if nid not in by_id]
            if missing:
                raise AllocationError(
                    f"not compute nodes in this inventory: {', '.join(missing)}"
                )
            chosen = [by_id[nid] for nid in req.nodes]
        else:
            count = req.count if req.count is not None else len(compute)
            if count > len(compute):
                raise AllocationError(
                    f"requested {count} compute nodes, inventory has {len(compute)}"
                )
            chosen = compute[:count]
        attach_clients(managed.handle, chosen)
        return schemas.AttachResponse(
            attached=[n.id for n in chosen],
            mounts={
                nid: point.mount_dir for nid, point in managed.handle.client_mounts.items()
            },
        )

    def stage(self, deployment_id: str, req: schemas.StageRequest) -> schemas.StageResponse:
        managed = self._get(deployment_id)
        copied = stage(managed.handle, req.direction, req.src, req.dst)
        return schemas.StageResponse(bytes_copied=copied)

    def bench(self, req: schemas.BenchRequest, deployment_id: str | None) -> schemas.BenchResponse:
        spec = BenchSpec(
            workload=req.workload,
            nodes=req.nodes,
            ppn=req.ppn,
            size_per_proc_bytes=req.size_per_proc_bytes,
            transfer_size_bytes=req.transfer_size_bytes,
            mode=req.mode,
            particles_per_proc=req.particles_per_proc,
            items_per_proc=req.items_per_proc,
            iterations=req.iterations,
            reorder_read_ranks=req.reorder_read_ranks,
            seed=req.seed,
            workdir=req.workdir,
        )
        runner = _RUNNERS[spec.workload]
        if deployment_id is None:
            if not req.baseline_dir:
                raise BenchError("need a deployment id or a baseline directory")
            result = runner(spec, DirBenchTarget(req.baseline_dir))
        else:
            managed = self._get(deployment_id)
            if not managed.handle.all_running():
                raise BenchError("deployment is not running")
            address, port = managed.handle.mgmt_endpoint
            target = StoreBenchTarget(lambda: Session(address, port).attach())
            if not managed.bench_lock.acquire(blocking=False):
                raise BusyDeploymentError("a benchmark is already running here")
            try:
                result = runner(spec, target)
            finally:
                managed.bench_lock.release()
        is_mdtest = spec.workload is Workload.MDTEST
        return schemas.BenchResponse(
            workload=spec.workload.value,
            summary=bench_report.summary_text(result),
            write_bw=result.write_bw,
            read_bw=result.read_bw,
            bandwidth_csv=None if is_mdtest else bench_report.bandwidth_csv(result),
            ops_csv=bench_report.ops_csv(result) if is_mdtest else None,
            extras=dict(result.extras),
        )

    def teardown_deployment(self, deployment_id: str) -> schemas.TeardownResponse:
        managed = self._get(deployment_id)
        report = teardown(managed.handle)
        managed.cluster.release_allocation(managed.allocation)
        with self._lock:
            self._deployments.pop(deployment_id, None)
        return schemas.TeardownResponse(
            deployment_id=deployment_id,
            clean=report.clean,
            rows=[
                schemas.ScrubRowModel(
                    disk=r.disk,
                    residual_entries=r.residual_entries,
                    bytes_scrubbed=r.bytes_scrubbed,
                )
                for r in report.rows
            ],
            notes=list(report.notes),
            csv=report.to_csv(),
        )

    def teardown_all(self) -> list[schemas.TeardownResponse]:
        with self._lock:
            ids = list(self._deployments)
        reports = []
        for deployment_id in ids:
            try:
                reports.append(self.teardown_deployment(deployment_id))
            except UnknownDeploymentError:
                pass
        return reports
