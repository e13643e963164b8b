"""Shared fixtures: inventory texts, an in-process service mesh, free port blocks."""

from __future__ import annotations

import os
import socket
import threading

import pytest

from ephemstore.ministore import protocol as proto
from ephemstore.ministore.client import Session
from ephemstore.ministore.management import ManagementCore
from ephemstore.ministore.metadata import MetadataCore
from ephemstore.ministore.server import LocalTransport, call
from ephemstore.ministore.storage import StorageCore

# -- inventories -----------------------------------------------------------------


def storage_node(node_id: str, disks: int, address: str = "10.0.0.1", capacity: int = 5_900_000_000_000,
                 read_bw: int = 6_300_000_000, write_bw: int = 2_600_000_000,
                 features: str = "storage, ssd") -> str:
    lines = [
        f"[node {node_id}]",
        f"address = {address}",
        "kind = storage",
        f"features = {features}",
        "cpus = 16",
        "dram_bytes = 192000000000",
    ]
    width = 2 if disks > 10 else 1
    for i in range(disks):
        disk_id = f"d{i:0{width}d}"
        lines.append(f"disk = {disk_id},/disks/{node_id}/{disk_id},{capacity},{read_bw},{write_bw}")
    return "\n".join(lines)


def compute_node(node_id: str, address: str = "10.0.1.1") -> str:
    return "\n".join(
        [
            f"[node {node_id}]",
            f"address = {address}",
            "kind = compute",
            "features = compute",
            "cpus = 36",
            "dram_bytes = 64000000000",
        ]
    )


def dom_inventory() -> str:
    """8 compute nodes plus 4 storage nodes with 3 SSDs each."""
    parts = [compute_node(f"c{i:02d}", address=f"10.0.1.{i}") for i in range(1, 9)]
    parts += [
        storage_node(f"dw{i}", disks=3, address=f"10.0.0.{i}") for i in range(1, 5)
    ]
    return "\n\n".join(parts)


def ault_inventory() -> str:
    """One dense node with 16 NVMe drives plus a compute node."""
    parts = [
        compute_node("login", address="10.1.1.1"),
        storage_node(
            "ault01",
            disks=16,
            address="10.1.0.1",
            capacity=7_000_000_000_000,
            features="storage, nvme",
        ),
    ]
    return "\n\n".join(parts)


def local_inventory(storage_nodes: int = 2, disks: int = 3, compute: int = 1) -> str:
    """Loopback inventory: every node claims 127.0.0.1 so daemons can really run."""
    parts = [
        storage_node(f"v{i}", disks=disks, address="127.0.0.1",
                     capacity=100_000_000_000, read_bw=600_000_000, write_bw=300_000_000,
                     features="storage")
        for i in range(1, storage_nodes + 1)
    ]
    parts += [compute_node(f"c{i}", address="127.0.0.1") for i in range(1, compute + 1)]
    return "\n\n".join(parts)


@pytest.fixture
def dom_text() -> str:
    return dom_inventory()


@pytest.fixture
def ault_text() -> str:
    return ault_inventory()


@pytest.fixture
def local_text() -> str:
    return local_inventory()


# -- free ports -------------------------------------------------------------------

_port_lock = threading.Lock()
# stay below the kernel's ephemeral range (32768+): an outbound connection can
# otherwise grab a probed port as its source port before the daemon binds it
_next_base = 20000 + (os.getpid() % 100) * 50


def free_port_base(span: int = 31) -> int:
    """A base port whose [base, base+span] block is currently free."""
    global _next_base
    with _port_lock:
        for _ in range(200):
            base = _next_base
            _next_base += span + 9
            if _next_base > 31000:
                _next_base = 20000
            ok = True
            for offset in (0, 10, 20, 30):
                if offset > span:
                    break
                with socket.socket() as probe:
                    try:
                        probe.bind(("127.0.0.1", base + offset))
                    except OSError:
                        ok = False
                        break
            if ok:
                return base
    raise RuntimeError("no free port block found")


@pytest.fixture
def port_base() -> int:
    return free_port_base()


# -- in-process mesh ----------------------------------------------------------------


class Mesh:
    """A full service set wired over in-process transports; no sockets, no daemons."""

    def __init__(self, root: str, storage_targets: int, metadata_services: int = 1,
                 stripe_size: int = 1 << 20, use_xattr: bool = False):
        self.deployment_id = "mesh-1"
        self.management = ManagementCore(
            "management",
            deployment_id=self.deployment_id,
            expect_metadata=metadata_services,
            expect_storage=storage_targets,
            expect_monitoring=0,
        )
        self.metadata = [
            MetadataCore(
                f"metadata-{i}",
                os.path.join(root, f"meta{i}"),
                stripe_size=stripe_size,
                use_xattr=use_xattr,
            )
            for i in range(metadata_services)
        ]
        self.storage = [
            StorageCore(f"storage-{i}", os.path.join(root, f"stor{i}"))
            for i in range(storage_targets)
        ]
        self.transports = {"management": LocalTransport(self.management)}
        for core in self.metadata + self.storage:
            self.transports[core.service_id] = LocalTransport(core)
        for core in self.metadata + self.storage:
            call(
                self.transports["management"],
                proto.REGISTER,
                proto.pack_json(
                    {
                        "service": core.service,
                        "service_id": core.service_id,
                        "address": "127.0.0.1",
                        "port": 0,
                        "deployment_id": self.deployment_id,
                    }
                ),
            )
        for core in self.metadata:
            core.connect_management(self.transports["management"], self._resolve)

    def _resolve(self, entry: dict):
        return self.transports[entry["service_id"]]

    def session(self) -> Session:
        return Session(
            "127.0.0.1",
            0,
            mgmt_transport=self.transports["management"],
            resolver=self._resolve,
        ).attach()

    def storage_bytes_of(self, file_id: int) -> dict[str, int]:
        """Stored byte total per storage target for one file."""
        totals = {}
        for core in self.storage:
            state = core.state()
            totals[core.service_id] = sum(
                length for (fid, _), length in state.chunks.items() if fid == file_id
            )
        return totals


@pytest.fixture
def mesh_factory(tmp_path):
    built = []

    def build(storage_targets: int = 3, metadata_services: int = 1,
              stripe_size: int = 1 << 20, use_xattr: bool = False) -> Mesh:
        root = tmp_path / f"mesh{len(built)}"
        root.mkdir()
        mesh = Mesh(
            str(root),
            storage_targets=storage_targets,
            metadata_services=metadata_services,
            stripe_size=stripe_size,
            use_xattr=use_xattr,
        )
        built.append(mesh)
        return mesh

    return build
