"""Role assignment, service layout, port scheme, and config rendering."""

import pytest

from ephemstore import (
    AllocationRequest,
    Cluster,
    DeploymentPolicy,
    DiskRole,
    PlanError,
    Purpose,
    ServiceKind,
    load_inventory,
    parse_config_document,
    plan_deployment,
    plans_equivalent,
    render_configs,
)
from ephemstore.planner import DEFAULT_BASE_PORT, DEFAULT_STRIPE_SIZE


def _storage_alloc(text: str, count: int, constraint: str = "storage"):
    cluster = Cluster(load_inventory(text))
    return cluster.request_allocation(
        AllocationRequest(count=count, constraint=constraint, purpose=Purpose.STORAGE)
    )


def _roles(plan) -> dict[DiskRole, list[tuple[str, str]]]:
    table = {}
    for a in plan.assignments:
        table.setdefault(a.role, []).append((a.node.id, a.disk.id))
    return table


def test_two_node_layout_roles(dom_text):
    plan = plan_deployment(_storage_alloc(dom_text, 2), DeploymentPolicy())
    roles = _roles(plan)
    assert roles[DiskRole.METADATA] == [("dw1", "d0"), ("dw2", "d0")]
    assert roles[DiskRole.STORAGE] == [
        ("dw1", "d1"),
        ("dw1", "d2"),
        ("dw2", "d1"),
        ("dw2", "d2"),
    ]
    # management and monitoring share the first node's metadata disk
    assert roles[DiskRole.MANAGEMENT] == [("dw1", "d0")]
    assert roles[DiskRole.MONITORING] == [("dw1", "d0")]


def test_dense_node_layout_roles(ault_text):
    policy = DeploymentPolicy(
        meta_disks_per_node=2,
        storage_disks_per_node=5,
        colocate_mgmt_on_first_meta=False,
        dedicated_mgmt_disks=1,
    )
    plan = plan_deployment(_storage_alloc(ault_text, 1, "storage & nvme"), policy)
    roles = _roles(plan)
    assert roles[DiskRole.MANAGEMENT] == [("ault01", "d00")]
    assert roles[DiskRole.MONITORING] == [("ault01", "d00")]
    assert roles[DiskRole.METADATA] == [("ault01", "d01"), ("ault01", "d02")]
    assert roles[DiskRole.STORAGE] == [("ault01", f"d{i:02d}") for i in range(3, 8)]
    distinct = {(a.node.id, a.disk.id) for a in plan.assignments}
    assert len(distinct) == 8  # 1 mgmt+monitoring disk, 2 meta, 5 storage


def test_plan_deterministic_across_reruns(dom_text):
    plans = []
    for _ in range(10):
        plans.append(plan_deployment(_storage_alloc(dom_text, 2), DeploymentPolicy()))
    assert all(plans_equivalent(plans[0], p) for p in plans[1:])


def test_service_set_complete(dom_text):
    plan = plan_deployment(_storage_alloc(dom_text, 2), DeploymentPolicy())
    kinds = {s.service_id: s.service for s in plan.services}
    assert kinds["management"] is ServiceKind.MANAGEMENT
    assert kinds["monitoring"] is ServiceKind.MONITORING
    assert kinds["client"] is ServiceKind.CLIENT
    assert sum(1 for k in kinds.values() if k is ServiceKind.METADATA) == 2
    assert sum(1 for k in kinds.values() if k is ServiceKind.STORAGE) == 4


def test_startup_order_tiers(dom_text):
    plan = plan_deployment(_storage_alloc(dom_text, 2), DeploymentPolicy())
    order = list(plan.startup_order)
    assert order[0] == "management"
    assert order[-1] == "client"
    assert order[-2] == "monitoring"
    meta = [i for i, sid in enumerate(order) if sid.startswith("metadata-")]
    stor = [i for i, sid in enumerate(order) if sid.startswith("storage-")]
    assert max(meta) < min(stor)


def test_ports_unique_per_address(dom_text):
    plan = plan_deployment(_storage_alloc(dom_text, 2), DeploymentPolicy())
    seen = set()
    for svc in plan.services:
        if svc.service is ServiceKind.CLIENT:
            continue
        key = (svc.listen_address, svc.listen_port)
        assert key not in seen
        seen.add(key)


def test_port_offsets_by_role(local_text):
    # both virtual nodes share 127.0.0.1, so slots must count per address
    plan = plan_deployment(_storage_alloc(local_text, 2), DeploymentPolicy())
    ports = {s.service_id: s.listen_port for s in plan.services if s.service is not ServiceKind.CLIENT}
    base = DEFAULT_BASE_PORT
    assert ports["management"] == base
    assert ports["monitoring"] == base + 30
    assert sorted(p for sid, p in ports.items() if sid.startswith("metadata-")) == [
        base + 10,
        base + 11,
    ]
    assert sorted(p for sid, p in ports.items() if sid.startswith("storage-")) == [
        base + 20,
        base + 21,
        base + 22,
        base + 23,
    ]


def test_too_many_services_per_address_rejected():
    from tests.conftest import local_inventory

    text = local_inventory(storage_nodes=6, disks=3)  # 12 storage services on one address
    with pytest.raises(PlanError):
        plan_deployment(_storage_alloc(text, 6), DeploymentPolicy())


def test_insufficient_disks_rejected(ault_text):
    policy = DeploymentPolicy(meta_disks_per_node=10, storage_disks_per_node=8)
    with pytest.raises(PlanError) as err:
        plan_deployment(_storage_alloc(ault_text, 1, "storage & nvme"), policy)
    assert "disk" in str(err.value)


def test_released_allocation_rejected(dom_text):
    cluster = Cluster(load_inventory(dom_text))
    alloc = cluster.request_allocation(
        AllocationRequest(count=1, constraint="storage", purpose=Purpose.STORAGE)
    )
    cluster.release_allocation(alloc)
    with pytest.raises(PlanError):
        plan_deployment(alloc, DeploymentPolicy())


def test_policy_validation():
    with pytest.raises(PlanError):
        DeploymentPolicy(meta_disks_per_node=0, colocate_mgmt_on_first_meta=True)
    with pytest.raises(PlanError):
        DeploymentPolicy(dedicated_mgmt_disks=2)
    with pytest.raises(PlanError):
        DeploymentPolicy(dedicated_mgmt_disks=1, colocate_mgmt_on_first_meta=True)
    with pytest.raises(PlanError):
        DeploymentPolicy(dedicated_mgmt_disks=0, colocate_mgmt_on_first_meta=False)
    with pytest.raises(PlanError):
        DeploymentPolicy(stripe_size_bytes=0)


def test_render_and_parse_round_trip(dom_text):
    plan = plan_deployment(_storage_alloc(dom_text, 2), DeploymentPolicy())
    docs = dict(render_configs(plan))
    assert set(docs) == {f"configs/{sid}.conf" for sid in plan.startup_order}
    mgmt = parse_config_document(docs["configs/management.conf"])
    assert mgmt["service"] == "management"
    assert mgmt["listen_port"] == str(DEFAULT_BASE_PORT)
    assert mgmt["expect_metadata"] == "2"
    assert mgmt["expect_storage"] == "4"
    assert mgmt["expect_monitoring"] == "1"
    assert mgmt["stripe_size"] == str(DEFAULT_STRIPE_SIZE)
    meta = parse_config_document(docs["configs/metadata-dw1-d0.conf"])
    assert meta["data_dir"] == "/disks/dw1/d0"
    assert meta["mgmt_port"] == str(DEFAULT_BASE_PORT)
    assert meta["use_xattr"] == "false"
    client = parse_config_document(docs["configs/client.conf"])
    assert client["service"] == "client"
    assert client["mgmt_address"] == mgmt["listen_address"]


def test_custom_stripe_size_flows_to_configs(dom_text):
    policy = DeploymentPolicy(stripe_size_bytes=1 << 16)
    plan = plan_deployment(_storage_alloc(dom_text, 2), policy)
    for _, doc in render_configs(plan):
        assert "stripe_size = 65536" in doc


def test_role_table_lists_every_assignment(dom_text):
    plan = plan_deployment(_storage_alloc(dom_text, 2), DeploymentPolicy())
    from ephemstore import format_role_table

    table = format_role_table(plan)
    for a in plan.assignments:
        assert a.node.id in table
        assert a.role.value in table


def test_data_dirs_match_assigned_disks(dom_text):
    plan = plan_deployment(_storage_alloc(dom_text, 2), DeploymentPolicy())
    mount_roots = {(a.node.id, a.disk.mount_root) for a in plan.assignments}
    for svc in plan.services:
        if svc.service is ServiceKind.CLIENT:
            continue
        assert (svc.node.id, svc.data_dir) in mount_roots
