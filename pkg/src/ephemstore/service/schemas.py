"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field

from ..planner import DeploymentPolicy


class PolicyModel(BaseModel):
    meta_disks_per_node: int = 1
    storage_disks_per_node: int = 2
    colocate_mgmt_on_first_meta: bool = True
    dedicated_mgmt_disks: int = 0
    stripe_size_bytes: int = 1 << 20
    base_port: int = 46000
    enable_xattr_metadata: bool = False

    def to_policy(self) -> DeploymentPolicy:
        return DeploymentPolicy(**self.model_dump())


class PlanRequest(BaseModel):
    inventory_text: str
    storage_nodes: int = Field(default=1, ge=1)
    constraint: str = "storage"
    policy: PolicyModel = Field(default_factory=PolicyModel)


class RoleRow(BaseModel):
    node: str
    disk: str
    role: str
    data_dir: str


class PlanResponse(BaseModel):
    allocation_nodes: list[str]
    assignments: list[RoleRow]
    startup_order: list[str]
    role_table: str
    configs: dict[str, str]


class DeployRequest(PlanRequest):
    backend: str = "local"
    working_root: str = "./ephemstore-run"


class DeploymentRecord(BaseModel):
    deployment_id: str
    backend: str
    working_root: str
    allocation_nodes: list[str]
    services: dict[str, str]
    timings: dict[str, float]
    mgmt_address: str
    mgmt_port: int
    running: bool
    failed: list[str]
    clients: list[str]
    notes: list[str]


class AttachRequest(BaseModel):
    nodes: list[str] | None = None
    count: int | None = Field(default=None, ge=0)


class AttachResponse(BaseModel):
    attached: list[str]
    mounts: dict[str, str]


class StageRequest(BaseModel):
    direction: str
    src: str
    dst: str


class StageResponse(BaseModel):
    bytes_copied: int


class BenchRequest(BaseModel):
    workload: str
    mode: str = "shared_file"
    nodes: int = 1
    ppn: int = 1
    size_per_proc_bytes: int = 0
    transfer_size_bytes: int = 1 << 20
    particles_per_proc: int = 0
    items_per_proc: int = 1000
    iterations: int = 10
    reorder_read_ranks: bool = False
    seed: int = 1234
    workdir: str = "/bench"
    baseline_dir: str | None = None


class BenchResponse(BaseModel):
    workload: str
    summary: str
    write_bw: float
    read_bw: float
    bandwidth_csv: str | None = None
    ops_csv: str | None = None
    extras: dict


class ScrubRowModel(BaseModel):
    disk: str
    residual_entries: int
    bytes_scrubbed: int


class TeardownResponse(BaseModel):
    deployment_id: str
    clean: bool
    rows: list[ScrubRowModel]
    notes: list[str]
    csv: str


class ErrorBody(BaseModel):
    error: str
    kind: str
