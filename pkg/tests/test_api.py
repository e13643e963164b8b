"""HTTP service: route contract, error-to-status mapping, full deployment lifecycle."""

from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from ephemstore.service.app import create_app
from tests.conftest import dom_inventory, free_port_base, local_inventory

KIB = 1 << 10


@pytest.fixture
def client():
    # the lifespan hook tears down anything a test leaves behind
    with TestClient(create_app()) as c:
        yield c


def _policy(base_port: int, storage_disks: int = 2) -> dict:
    return {
        "meta_disks_per_node": 1,
        "storage_disks_per_node": storage_disks,
        "stripe_size_bytes": 64 * KIB,
        "base_port": base_port,
    }


def _deploy(client, working_root: str, inventory: str | None = None,
            base_port: int | None = None, storage_disks: int = 2, **overrides):
    payload = {
        "inventory_text": inventory if inventory is not None else local_inventory(),
        "storage_nodes": 2,
        "policy": _policy(base_port if base_port is not None else free_port_base(),
                          storage_disks=storage_disks),
        "backend": "local",
        "working_root": working_root,
    }
    payload.update(overrides)
    return client.post("/deployments", json=payload)


# -- health and planning --


def test_health_reports_deployment_count(client):
    body = client.get("/health").json()
    assert body == {"status": "ok", "deployments": 0}


def test_plan_returns_assignments_and_configs(client):
    resp = client.post(
        "/plans",
        json={"inventory_text": dom_inventory(), "storage_nodes": 2},
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["allocation_nodes"] == ["dw1", "dw2"]
    roles = {(r["node"], r["disk"], r["role"]) for r in body["assignments"]}
    assert ("dw1", "d0", "management") in roles
    assert sum(1 for r in body["assignments"] if r["role"] == "storage") == 4
    assert sum(1 for r in body["assignments"] if r["role"] == "metadata") == 2
    assert body["startup_order"][0].startswith("management")
    assert body["configs"]  # one rendered document per service
    assert "management" in body["role_table"]


def test_plan_is_stateless(client):
    payload = {"inventory_text": dom_inventory(), "storage_nodes": 4}
    first = client.post("/plans", json=payload).json()
    second = client.post("/plans", json=payload).json()
    assert first == second  # nothing stays allocated between calls


def test_plan_maps_inventory_error_to_422(client):
    resp = client.post("/plans", json={"inventory_text": "[node x]\naddress =\n"})
    assert resp.status_code == 422
    body = resp.json()
    assert body["kind"] == "InventoryError"
    assert "line" in body["error"]


def test_plan_maps_allocation_error_to_422(client):
    resp = client.post(
        "/plans", json={"inventory_text": dom_inventory(), "storage_nodes": 40}
    )
    assert resp.status_code == 422
    assert resp.json()["kind"] == "AllocationError"


def test_plan_maps_policy_error_to_422(client):
    resp = client.post(
        "/plans",
        json={
            "inventory_text": dom_inventory(),
            "storage_nodes": 4,
            "policy": {"meta_disks_per_node": 0},
        },
    )
    assert resp.status_code == 422
    assert resp.json()["kind"] == "PlanError"


def test_request_validation_is_422(client):
    resp = client.post(
        "/plans", json={"inventory_text": dom_inventory(), "storage_nodes": 0}
    )
    assert resp.status_code == 422  # pydantic field constraint


# -- deployment lifecycle over HTTP --


def test_deploy_bench_stage_teardown_cycle(client, tmp_path):
    resp = _deploy(client, str(tmp_path / "run"))
    assert resp.status_code == 200, resp.text
    record = resp.json()
    dep = record["deployment_id"]
    assert record["running"] is True
    assert record["failed"] == []
    assert set(record["services"].values()) == {"running"}
    assert record["allocation_nodes"] == ["v1", "v2"]
    assert record["mgmt_address"] == "127.0.0.1"

    try:
        assert client.get("/health").json()["deployments"] == 1
        listed = client.get("/deployments").json()
        assert [r["deployment_id"] for r in listed] == [dep]
        assert client.get(f"/deployments/{dep}").json()["running"] is True

        # attach one compute client
        resp = client.post(f"/deployments/{dep}/attach", json={"count": 1})
        assert resp.status_code == 200
        attach = resp.json()
        assert attach["attached"] == ["c1"]
        assert "c1" in attach["mounts"]

        # stage a directory in, then back out
        src = tmp_path / "in"
        src.mkdir()
        (src / "a.bin").write_bytes(b"x" * 3000)
        (src / "b.bin").write_bytes(b"y" * 500)
        resp = client.post(
            f"/deployments/{dep}/stage",
            json={"direction": "in", "src": str(src), "dst": "/staged"},
        )
        assert resp.status_code == 200
        assert resp.json()["bytes_copied"] == 3500

        out = tmp_path / "out"
        resp = client.post(
            f"/deployments/{dep}/stage",
            json={"direction": "out", "src": "/staged", "dst": str(out)},
        )
        assert resp.status_code == 200
        assert resp.json()["bytes_copied"] == 3500
        assert (out / "a.bin").read_bytes() == b"x" * 3000
        assert (out / "b.bin").read_bytes() == b"y" * 500

        # a bulk-I/O run against the live store
        resp = client.post(
            f"/deployments/{dep}/bench",
            json={
                "workload": "ior",
                "nodes": 1,
                "ppn": 2,
                "size_per_proc_bytes": 128 * KIB,
                "transfer_size_bytes": 64 * KIB,
                "iterations": 2,
            },
        )
        assert resp.status_code == 200, resp.text
        bench = resp.json()
        assert bench["workload"] == "ior"
        assert bench["write_bw"] > 0
        assert bench["read_bw"] > 0
        assert bench["bandwidth_csv"].startswith("workload,mode,")
        assert bench["ops_csv"] is None

        # a metadata run produces the ops table instead
        resp = client.post(
            f"/deployments/{dep}/bench",
            json={"workload": "mdtest", "items_per_proc": 5, "iterations": 1},
        )
        assert resp.status_code == 200, resp.text
        bench = resp.json()
        assert bench["bandwidth_csv"] is None
        assert bench["ops_csv"].startswith("workload,target,operation,")
    finally:
        resp = client.post(f"/deployments/{dep}/teardown")

    assert resp.status_code == 200
    td = resp.json()
    assert td["clean"] is True
    assert td["csv"].startswith("disk,residual_entries,bytes_scrubbed")
    assert all(row["residual_entries"] == 0 for row in td["rows"])

    # the deployment is gone afterwards
    assert client.get(f"/deployments/{dep}").status_code == 404
    assert client.get("/deployments").json() == []
    assert client.get("/health").json()["deployments"] == 0


def test_unknown_deployment_is_404(client):
    for method, path, body in [
        ("get", "/deployments/nope", None),
        ("post", "/deployments/nope/attach", {}),
        ("post", "/deployments/nope/stage", {"direction": "in", "src": "/x", "dst": "/y"}),
        ("post", "/deployments/nope/bench", {"workload": "ior"}),
        ("post", "/deployments/nope/teardown", None),
    ]:
        resp = getattr(client, method)(path, json=body) if body is not None else getattr(client, method)(path)
        assert resp.status_code == 404, path
        assert resp.json()["kind"] == "UnknownDeploymentError"


def test_deploy_rejects_unknown_backend(client, tmp_path):
    resp = _deploy(client, str(tmp_path / "run"), backend="docker")
    assert resp.status_code == 422
    assert "backend" in resp.json()["error"]


def test_attach_and_stage_error_mapping(client, tmp_path):
    resp = _deploy(client, str(tmp_path / "run"))
    assert resp.status_code == 200, resp.text
    dep = resp.json()["deployment_id"]
    try:
        resp = client.post(f"/deployments/{dep}/attach", json={"nodes": ["ghost"]})
        assert resp.status_code == 422
        assert "ghost" in resp.json()["error"]

        resp = client.post(f"/deployments/{dep}/attach", json={"count": 99})
        assert resp.status_code == 422

        resp = client.post(
            f"/deployments/{dep}/stage",
            json={"direction": "in", "src": str(tmp_path / "missing"), "dst": "/x"},
        )
        assert resp.status_code == 400
        assert resp.json()["kind"] == "StageError"

        resp = client.post(
            f"/deployments/{dep}/stage",
            json={"direction": "sideways", "src": "/x", "dst": "/y"},
        )
        assert resp.status_code == 400
        assert "direction" in resp.json()["error"]
    finally:
        assert client.post(f"/deployments/{dep}/teardown").status_code == 200


def test_port_collision_maps_to_409_and_first_deployment_survives(client, tmp_path):
    base_port = free_port_base()
    resp = _deploy(client, str(tmp_path / "a"), base_port=base_port)
    assert resp.status_code == 200, resp.text
    dep = resp.json()["deployment_id"]
    try:
        # a different inventory, so a distinct deployment contends for the same ports
        resp = _deploy(
            client,
            str(tmp_path / "b"),
            inventory=local_inventory(storage_nodes=2, disks=2),
            base_port=base_port,
            storage_disks=1,
        )
        assert resp.status_code == 409
        assert resp.json()["kind"] == "PortCollisionError"

        survivor = client.get(f"/deployments/{dep}").json()
        assert survivor["running"] is True
        assert client.get("/health").json()["deployments"] == 1
    finally:
        td = client.post(f"/deployments/{dep}/teardown")
        assert td.status_code == 200
        assert td.json()["clean"] is True


def test_concurrent_bench_on_same_deployment_is_409(client, tmp_path):
    resp = _deploy(client, str(tmp_path / "run"))
    assert resp.status_code == 200, resp.text
    dep = resp.json()["deployment_id"]
    try:
        managed = client.app.state.manager._deployments[dep]
        assert managed.bench_lock.acquire(blocking=False)
        try:
            resp = client.post(
                f"/deployments/{dep}/bench", json={"workload": "mdtest", "iterations": 1}
            )
            assert resp.status_code == 409
            assert resp.json()["kind"] == "BusyDeploymentError"
        finally:
            managed.bench_lock.release()
    finally:
        assert client.post(f"/deployments/{dep}/teardown").status_code == 200


def test_emit_backend_deploys_without_local_processes(client, tmp_path):
    resp = _deploy(
        client, str(tmp_path / "emit"), inventory=dom_inventory(),
        backend="emit", storage_nodes=4,
    )
    assert resp.status_code == 200, resp.text
    record = resp.json()
    assert record["backend"] == "external_emit"
    assert record["running"] is False
    assert set(record["services"].values()) == {"pending"}

    resp = client.post(f"/deployments/{record['deployment_id']}/teardown")
    assert resp.status_code == 200
    body = resp.json()
    assert body["clean"] is True
    assert any("external backend" in note for note in body["notes"])


# -- baseline benchmarks without a deployment --


def test_baseline_bench_requires_directory(client):
    resp = client.post("/bench/baseline", json={"workload": "ior", "iterations": 1})
    assert resp.status_code == 422
    assert "baseline directory" in resp.json()["error"]


def test_baseline_bench_runs_against_directory(client, tmp_path):
    resp = client.post(
        "/bench/baseline",
        json={
            "workload": "ior",
            "nodes": 1,
            "ppn": 2,
            "size_per_proc_bytes": 64 * KIB,
            "transfer_size_bytes": 64 * KIB,
            "iterations": 2,
            "baseline_dir": str(tmp_path / "base"),
        },
    )
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert body["write_bw"] > 0
    assert body["bandwidth_csv"].count("\n") == 1 + 4  # header + 2 iterations x 2 phases


def test_bench_rejects_invalid_spec(client, tmp_path):
    resp = client.post(
        "/bench/baseline",
        json={
            "workload": "ior",
            "size_per_proc_bytes": 3 * KIB,
            "transfer_size_bytes": 2 * KIB,
            "baseline_dir": str(tmp_path),
        },
    )
    assert resp.status_code == 422
    assert resp.json()["kind"] == "BenchError"
