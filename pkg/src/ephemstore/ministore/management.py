"""Management registry and the (load-free) monitoring service."""

from __future__ import annotations

import threading

from ..errors import StoreBadRequestError, StoreDuplicateError
from .protocol import HEALTH, REGISTER, SNAPSHOT, pack_json, unpack_json
from .server import ServiceCore

_KINDS = ("management", "metadata", "storage", "monitoring", "client")


class ManagementCore(ServiceCore):
    """Tracks registered services and answers deployment health checks."""

    service = "management"

    def __init__(
        self,
        service_id: str = "management",
        deployment_id: str = "",
        expect_metadata: int = 0,
        expect_storage: int = 0,
        expect_monitoring: int = 1,
    ):
        super().__init__(service_id)
        self.deployment_id = deployment_id
        self.expected = {
            "metadata": expect_metadata,
            "storage": expect_storage,
            "monitoring": expect_monitoring,
        }
        self._registry: dict[str, dict] = {}
        self._lock = threading.Lock()
        self.dispatch.update(
            {
                REGISTER: self._op_register,
                SNAPSHOT: self._op_snapshot,
                HEALTH: self._op_health,
            }
        )

    def _snapshot_doc(self) -> dict:
        services = sorted(
            self._registry.values(), key=lambda e: (e["service"], e["service_id"])
        )
        return {"deployment_id": self.deployment_id, "services": services}

    def _op_register(self, payload: bytes) -> bytes:
        doc = unpack_json(payload)
        for key in ("service", "service_id", "address", "port"):
            if key not in doc:
                raise StoreBadRequestError(f"register payload missing {key!r}")
        if doc["service"] not in _KINDS:
            raise StoreBadRequestError(f"unknown service kind {doc['service']!r}")
        peer_deployment = doc.get("deployment_id", "")
        if peer_deployment != self.deployment_id:
            raise StoreBadRequestError(
                f"foreign deployment {peer_deployment!r}, this registry serves "
                f"{self.deployment_id!r}"
            )
        entry = {
            "service": doc["service"],
            "service_id": doc["service_id"],
            "address": doc["address"],
            "port": doc["port"],
        }
        with self._lock:
            if entry["service_id"] in self._registry:
                raise StoreDuplicateError(f"service {entry['service_id']!r} already registered")
            self._registry[entry["service_id"]] = entry
            return pack_json(self._snapshot_doc())

    def _op_snapshot(self, payload: bytes) -> bytes:
        with self._lock:
            return pack_json(self._snapshot_doc())

    def _op_health(self, payload: bytes) -> bytes:
        with self._lock:
            counts = {kind: 0 for kind in ("metadata", "storage", "monitoring")}
            for entry in self._registry.values():
                if entry["service"] in counts:
                    counts[entry["service"]] += 1
        ready = all(counts[kind] >= self.expected[kind] for kind in counts)
        return pack_json(
            {
                "deployment_id": self.deployment_id,
                "counts": counts,
                "expected": self.expected,
                "ready": ready,
            }
        )


class MonitoringCore(ServiceCore):
    """Placeholder observer, deliberately free of disk load."""

    service = "monitoring"

    def __init__(self, service_id: str = "monitoring"):
        super().__init__(service_id)
