"""Ephemeral storage provisioning: constraint-based node allocation, role-based
disk planning, tiered service deployment, and integrated I/O benchmarks.

Heavy optional surfaces (the benchmark suite, the HTTP service) live in
`ephemstore.bench` and `ephemstore.service` and are imported on demand so that
daemon startup stays cheap.
"""

from .errors import (
    AllocationError,
    AttachError,
    BenchError,
    DeployError,
    EphemstoreError,
    InventoryError,
    PlanError,
    PortCollisionError,
    StageError,
    StoreError,
    VerificationError,
)
from .executor import (
    Backend,
    DeploymentHandle,
    NodeExecutor,
    ServiceState,
    StageDirection,
    TeardownReport,
    attach_clients,
    deploy,
    stage,
    teardown,
)
from .inventory import (
    Allocation,
    AllocationRequest,
    Cluster,
    Constraint,
    DiskSpec,
    NodeKind,
    NodeSpec,
    Purpose,
    load_inventory,
    parse_constraint,
)
from .planner import (
    DeploymentPlan,
    DeploymentPolicy,
    DiskRole,
    ServiceConfig,
    ServiceKind,
    format_role_table,
    parse_config_document,
    plan_deployment,
    plans_equivalent,
    render_configs,
)

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "AllocationError",
    "AllocationRequest",
    "AttachError",
    "Backend",
    "BenchError",
    "Cluster",
    "Constraint",
    "DeployError",
    "DeploymentHandle",
    "DeploymentPlan",
    "DeploymentPolicy",
    "DiskRole",
    "DiskSpec",
    "EphemstoreError",
    "InventoryError",
    "NodeExecutor",
    "NodeKind",
    "NodeSpec",
    "PlanError",
    "PortCollisionError",
    "Purpose",
    "ServiceConfig",
    "ServiceKind",
    "ServiceState",
    "StageDirection",
    "StageError",
    "StoreError",
    "TeardownReport",
    "VerificationError",
    "attach_clients",
    "deploy",
    "format_role_table",
    "load_inventory",
    "parse_config_document",
    "parse_constraint",
    "plan_deployment",
    "plans_equivalent",
    "render_configs",
    "stage",
    "teardown",
]
