"""Deployment planning: disk-role assignment, service configs, startup order."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import PlanError
from .inventory import Allocation, AllocationState, DiskSpec, NodeSpec

DEFAULT_STRIPE_SIZE = 1 << 20
DEFAULT_BASE_PORT = 46000

# Port scheme: base_port + per-service offset. The slot index k counts
# services per *address*, so plans whose nodes share one host (virtual
# localhost inventories) stay collision-free.
MGMT_PORT_OFFSET = 0
META_PORT_OFFSET = 10
STORAGE_PORT_OFFSET = 20
MONITORING_PORT_OFFSET = 30
_SLOTS_PER_ROLE = 10


class DiskRole(str, Enum):
    MANAGEMENT = "management"
    MONITORING = "monitoring"
    METADATA = "metadata"
    STORAGE = "storage"


class ServiceKind(str, Enum):
    MANAGEMENT = "management"
    METADATA = "metadata"
    STORAGE = "storage"
    MONITORING = "monitoring"
    CLIENT = "client"


@dataclass(frozen=True)
class DeploymentPolicy:
    meta_disks_per_node: int = 1
    storage_disks_per_node: int = 2
    colocate_mgmt_on_first_meta: bool = True
    dedicated_mgmt_disks: int = 0
    stripe_size_bytes: int = DEFAULT_STRIPE_SIZE
    base_port: int = DEFAULT_BASE_PORT
    enable_xattr_metadata: bool = False

    def __post_init__(self):
        if self.stripe_size_bytes <= 0:
            raise PlanError(f"stripe_size_bytes must be > 0, got {self.stripe_size_bytes}")
        if self.meta_disks_per_node < 0:
            raise PlanError("meta_disks_per_node must be >= 0")
        if self.storage_disks_per_node < 1:
            raise PlanError("storage_disks_per_node must be >= 1")
        if self.base_port < 1 or self.base_port > 65535 - MONITORING_PORT_OFFSET:
            raise PlanError(f"base_port {self.base_port} out of range")
        # one management home, not zero, not two
        if self.colocate_mgmt_on_first_meta == (self.dedicated_mgmt_disks >= 1):
            raise PlanError(
                "exactly one of colocate_mgmt_on_first_meta / dedicated_mgmt_disks >= 1 must hold"
            )
        if self.dedicated_mgmt_disks > 1:
            raise PlanError("at most one dedicated management disk is supported")
        if self.colocate_mgmt_on_first_meta and self.meta_disks_per_node < 1:
            raise PlanError("colocated management requires meta_disks_per_node >= 1")


@dataclass(frozen=True)
class RoleAssignment:
    node: NodeSpec
    disk: DiskSpec
    role: DiskRole


@dataclass(frozen=True)
class ServiceConfig:
    service: ServiceKind
    service_id: str
    node: NodeSpec | None
    listen_address: str
    listen_port: int
    mgmt_address: str
    mgmt_port: int
    data_dir: str
    options: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DeploymentPlan:
    allocation: Allocation
    assignments: tuple[RoleAssignment, ...]
    services: tuple[ServiceConfig, ...]
    startup_order: tuple[str, ...]
    policy: DeploymentPolicy

    def service_by_id(self, service_id: str) -> ServiceConfig:
        for svc in self.services:
            if svc.service_id == service_id:
                return svc
        raise PlanError(f"no service {service_id!r} in plan")

    def services_of(self, kind: ServiceKind) -> list[ServiceConfig]:
        return [s for s in self.services if s.service is kind]

    @property
    def management(self) -> ServiceConfig:
        return self.services_of(ServiceKind.MANAGEMENT)[0]

    @property
    def client_template(self) -> ServiceConfig:
        return self.services_of(ServiceKind.CLIENT)[0]

    def daemon_services(self) -> list[ServiceConfig]:
        return [s for s in self.services if s.service is not ServiceKind.CLIENT]

    def role_disks(self, role: DiskRole) -> list[RoleAssignment]:
        return [a for a in self.assignments if a.role is role]


def _node_demand(policy: DeploymentPolicy, first: bool) -> int:
    need = policy.meta_disks_per_node + policy.storage_disks_per_node
    if first:
        need += policy.dedicated_mgmt_disks
    return need


def plan_deployment(alloc: Allocation, policy: DeploymentPolicy) -> DeploymentPlan:
    """Assign disk roles and render the service set for a storage allocation.

    Deterministic: nodes keep allocation order, disks sort by id, and the
    first `dedicated_mgmt_disks` disks of the first node (if any) take the
    management role, then metadata disks, then storage disks.
    """
    if not alloc.nodes:
        raise PlanError("allocation holds zero storage nodes")
    if alloc.state is AllocationState.RELEASED:
        raise PlanError(f"allocation {alloc.id!r} is released")

    assignments: list[RoleAssignment] = []
    meta_disks: list[tuple[NodeSpec, DiskSpec]] = []
    storage_disks: list[tuple[NodeSpec, DiskSpec]] = []
    mgmt_home: tuple[NodeSpec, DiskSpec] | None = None

    for index, node in enumerate(alloc.nodes):
        need = _node_demand(policy, first=index == 0)
        disks = sorted(node.disks, key=lambda d: d.id)
        if len(disks) < need:
            raise PlanError(
                f"insufficient disks on node {node.id!r}: policy needs {need}, found {len(disks)}"
            )
        cursor = 0
        if index == 0 and policy.dedicated_mgmt_disks:
            mgmt_home = (node, disks[cursor])
            assignments.append(RoleAssignment(node, disks[cursor], DiskRole.MANAGEMENT))
            assignments.append(RoleAssignment(node, disks[cursor], DiskRole.MONITORING))
            cursor += 1
        for disk in disks[cursor : cursor + policy.meta_disks_per_node]:
            if index == 0 and policy.colocate_mgmt_on_first_meta and mgmt_home is None:
                mgmt_home = (node, disk)
                assignments.append(RoleAssignment(node, disk, DiskRole.MANAGEMENT))
                assignments.append(RoleAssignment(node, disk, DiskRole.MONITORING))
            assignments.append(RoleAssignment(node, disk, DiskRole.METADATA))
            meta_disks.append((node, disk))
        cursor += policy.meta_disks_per_node
        for disk in disks[cursor : cursor + policy.storage_disks_per_node]:
            assignments.append(RoleAssignment(node, disk, DiskRole.STORAGE))
            storage_disks.append((node, disk))

    if not meta_disks:
        raise PlanError("plan yields zero metadata disks; need at least one")
    if not storage_disks:
        raise PlanError("plan yields zero storage disks; need at least one")
    assert mgmt_home is not None

    base = policy.base_port
    meta_slots: dict[str, int] = {}
    storage_slots: dict[str, int] = {}

    def next_port(address: str, offset: int, slots: dict[str, int], role: str) -> int:
        k = slots.get(address, 0)
        if k >= _SLOTS_PER_ROLE:
            raise PlanError(
                f"too many {role} services on address {address} for the port scheme"
            )
        slots[address] = k + 1
        return base + offset + k

    mgmt_node, mgmt_disk = mgmt_home
    mgmt_port = base + MGMT_PORT_OFFSET
    stripe = str(policy.stripe_size_bytes)
    xattr = "true" if policy.enable_xattr_metadata else "false"

    services: list[ServiceConfig] = [
        ServiceConfig(
            service=ServiceKind.MANAGEMENT,
            service_id="management",
            node=mgmt_node,
            listen_address=mgmt_node.address,
            listen_port=mgmt_port,
            mgmt_address=mgmt_node.address,
            mgmt_port=mgmt_port,
            data_dir=mgmt_disk.mount_root,
            options={
                "expect_metadata": str(len(meta_disks)),
                "expect_storage": str(len(storage_disks)),
                "expect_monitoring": "1",
            },
        )
    ]
    for node, disk in meta_disks:
        services.append(
            ServiceConfig(
                service=ServiceKind.METADATA,
                service_id=f"metadata-{node.id}-{disk.id}",
                node=node,
                listen_address=node.address,
                listen_port=next_port(node.address, META_PORT_OFFSET, meta_slots, "metadata"),
                mgmt_address=mgmt_node.address,
                mgmt_port=mgmt_port,
                data_dir=disk.mount_root,
                options={"use_xattr": xattr},
            )
        )
    for node, disk in storage_disks:
        services.append(
            ServiceConfig(
                service=ServiceKind.STORAGE,
                service_id=f"storage-{node.id}-{disk.id}",
                node=node,
                listen_address=node.address,
                listen_port=next_port(node.address, STORAGE_PORT_OFFSET, storage_slots, "storage"),
                mgmt_address=mgmt_node.address,
                mgmt_port=mgmt_port,
                data_dir=disk.mount_root,
                options={},
            )
        )
    services.append(
        ServiceConfig(
            service=ServiceKind.MONITORING,
            service_id="monitoring",
            node=mgmt_node,
            listen_address=mgmt_node.address,
            listen_port=base + MONITORING_PORT_OFFSET,
            mgmt_address=mgmt_node.address,
            mgmt_port=mgmt_port,
            data_dir=mgmt_disk.mount_root,
            options={},
        )
    )
    services.append(
        ServiceConfig(
            service=ServiceKind.CLIENT,
            service_id="client",
            node=None,
            listen_address="-",
            listen_port=0,
            mgmt_address=mgmt_node.address,
            mgmt_port=mgmt_port,
            data_dir="-",
            options={},
        )
    )

    order = tuple(s.service_id for s in services)
    return DeploymentPlan(
        allocation=alloc,
        assignments=tuple(assignments),
        services=tuple(services),
        startup_order=order,
        policy=policy,
    )


def render_configs(plan: DeploymentPlan) -> list[tuple[str, str]]:
    """Render one `key = value` document per service, in startup order."""
    documents = []
    for service_id in plan.startup_order:
        svc = plan.service_by_id(service_id)
        lines = [
            f"service = {svc.service.value}",
            f"service_id = {svc.service_id}",
            f"node = {svc.node.id if svc.node else '-'}",
            f"listen_address = {svc.listen_address}",
            f"listen_port = {svc.listen_port}",
            f"mgmt_address = {svc.mgmt_address}",
            f"mgmt_port = {svc.mgmt_port}",
            f"data_dir = {svc.data_dir}",
            f"stripe_size = {plan.policy.stripe_size_bytes}",
        ]
        for key in sorted(svc.options):
            lines.append(f"{key} = {svc.options[key]}")
        documents.append((f"configs/{svc.service_id}.conf", "\n".join(lines) + "\n"))
    return documents


def parse_config_document(document: str) -> dict[str, str]:
    """Parse a rendered service document back into a flat string map."""
    values: dict[str, str] = {}
    for raw in document.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise PlanError(f"bad config line: {raw!r}")
        values[key.strip()] = value.strip()
    return values


def format_role_table(plan: DeploymentPlan) -> str:
    """Human-readable disk-role table, one row per assignment."""
    rows = [("node", "disk", "role", "data_dir")]
    for a in plan.assignments:
        rows.append((a.node.id, a.disk.id, a.role.value, a.disk.mount_root))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    out = []
    for r in rows:
        out.append("  ".join(r[i].ljust(widths[i]) for i in range(4)).rstrip())
    return "\n".join(out) + "\n"


def plans_equivalent(a: DeploymentPlan, b: DeploymentPlan) -> bool:
    """Structural equality that ignores allocation identity."""
    def shape(plan: DeploymentPlan):
        return (
            plan.policy,
            tuple((x.node.id, x.disk.id, x.role) for x in plan.assignments),
            tuple(
                (s.service, s.service_id, s.listen_address, s.listen_port, s.data_dir)
                for s in plan.services
            ),
            plan.startup_order,
        )

    return shape(a) == shape(b)
