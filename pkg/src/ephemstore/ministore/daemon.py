"""Daemon entrypoint: run one service from a rendered config document.

Usage: python -m ephemstore.ministore.daemon <config-path>

Exit codes: 0 clean stop, 2 bind failure, 3 registration failure, 64 usage.
"""

from __future__ import annotations

import signal
import sys
import time

from ..errors import StoreError, StoreUnavailableError
from ..planner import parse_config_document
from .management import ManagementCore, MonitoringCore
from .metadata import MetadataCore
from .protocol import REGISTER, pack_json
from .server import EphemServer, SocketTransport, call
from .storage import StorageCore


def _build_core(values: dict):
    kind = values["service"]
    service_id = values["service_id"]
    if kind == "management":
        return ManagementCore(
            service_id=service_id,
            deployment_id=values.get("deployment_id", ""),
            expect_metadata=int(values.get("expect_metadata", 0)),
            expect_storage=int(values.get("expect_storage", 0)),
            expect_monitoring=int(values.get("expect_monitoring", 1)),
        )
    if kind == "metadata":
        return MetadataCore(
            service_id=service_id,
            data_dir=values["data_dir"],
            stripe_size=int(values.get("stripe_size", 1 << 20)),
            use_xattr=values.get("use_xattr", "false") == "true",
        )
    if kind == "storage":
        return StorageCore(service_id=service_id, data_dir=values["data_dir"])
    if kind == "monitoring":
        return MonitoringCore(service_id=service_id)
    raise ValueError(f"config declares unlaunchable service {kind!r}")


def _register(values: dict, attempts: int = 50, delay: float = 0.1):
    transport = SocketTransport(
        values["mgmt_address"], int(values["mgmt_port"]), label="management"
    )
    payload = pack_json(
        {
            "service": values["service"],
            "service_id": values["service_id"],
            "address": values["listen_address"],
            "port": int(values["listen_port"]),
            "deployment_id": values.get("deployment_id", ""),
        }
    )
    last: Exception | None = None
    for _ in range(attempts):
        try:
            call(transport, REGISTER, payload)
            transport.close()
            return
        except StoreUnavailableError as exc:
            last = exc  # registry may still be coming up
            time.sleep(delay)
        except StoreError as exc:
            last = exc  # real registry rejection
            break
    transport.close()
    raise StoreError(f"registration failed: {last}")


def main(argv: list[str]) -> int:
    if len(argv) != 1:
        print("usage: daemon <config-path>", file=sys.stderr)
        return 64
    with open(argv[0], encoding="utf-8") as fh:
        values = parse_config_document(fh.read())

    core = _build_core(values)
    address = values["listen_address"]
    port = int(values["listen_port"])
    try:
        server = EphemServer(address, port, core)
    except OSError as exc:
        print(f"bind failed, address already in use: {address}:{port} ({exc})", file=sys.stderr)
        return 2

    if values["service"] == "metadata":
        core.connect_management(
            SocketTransport(values["mgmt_address"], int(values["mgmt_port"]), label="management")
        )
    if values["service"] != "management":
        try:
            _register(values)
        except StoreError as exc:
            print(f"{values['service_id']}: {exc}", file=sys.stderr)
            server.server_close()
            return 3

    def _stop(signum, frame):
        raise SystemExit(0)

    signal.signal(signal.SIGTERM, _stop)
    signal.signal(signal.SIGINT, _stop)

    print(f"READY {values['service_id']} {address}:{port}", flush=True)
    try:
        server.serve_forever(poll_interval=0.1)
    except SystemExit:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
