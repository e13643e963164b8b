"""Deployment lifecycle: launch tiers, health-check, attach, stage, teardown."""

from __future__ import annotations

import ipaddress
import os
import shutil
import subprocess
import sys
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum

from .errors import AttachError, DeployError, PortCollisionError, StageError, StoreError, StoreUnavailableError
from .inventory import NodeSpec
from .ministore.client import Session
from .ministore.protocol import HEALTH, SHUTDOWN, unpack_json
from .ministore.server import SocketTransport, call
from .planner import DeploymentPlan, ServiceConfig, ServiceKind, render_configs

_TIER_KINDS = (
    ServiceKind.MANAGEMENT,
    ServiceKind.METADATA,
    ServiceKind.STORAGE,
    ServiceKind.MONITORING,
)


class Backend(str, Enum):
    LOCAL_PROCESS = "local_process"
    EXTERNAL_EMIT = "external_emit"


class ServiceState(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    FAILED = "failed"
    STOPPED = "stopped"


class StageDirection(str, Enum):
    IN = "in"
    OUT = "out"


@dataclass
class NodeExecutor:
    backend: Backend = Backend.LOCAL_PROCESS
    working_root: str = "./ephemstore-run"
    tier_timeout: float = 20.0
    poll_interval: float = 0.05

    def __post_init__(self):
        self.backend = Backend(self.backend)
        override = os.environ.get("EPHEMSTORE_ROOT")
        if override:
            self.working_root = override
        self.working_root = os.path.abspath(self.working_root)


@dataclass
class AttachPoint:
    node_id: str
    mount_dir: str
    session: Session


@dataclass
class ScrubRow:
    disk: str
    residual_entries: int
    bytes_scrubbed: int


@dataclass
class TeardownReport:
    rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return all(row.residual_entries == 0 for row in self.rows)

    def to_csv(self) -> str:
        lines = ["disk,residual_entries,bytes_scrubbed"]
        for row in self.rows:
            lines.append(f"{row.disk},{row.residual_entries},{row.bytes_scrubbed}")
        return "\n".join(lines) + "\n"


@dataclass
class DeploymentHandle:
    plan: DeploymentPlan
    executor: NodeExecutor
    deployment_id: str
    service_states: dict = field(default_factory=dict)
    client_mounts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    processes: dict = field(default_factory=dict)
    runtime_configs: dict = field(default_factory=dict)
    data_dirs: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    torn_down: bool = False

    @property
    def mgmt_endpoint(self) -> tuple[str, int]:
        mgmt = self.plan.management
        return mgmt.listen_address, mgmt.listen_port

    def all_running(self) -> bool:
        states = [
            self.service_states[s.service_id] for s in self.plan.daemon_services()
        ]
        return bool(states) and all(s is ServiceState.RUNNING for s in states)

    def failed_services(self) -> list[str]:
        return [
            sid for sid, state in self.service_states.items() if state is ServiceState.FAILED
        ]

    def status(self) -> dict:
        return {
            "deployment_id": self.deployment_id,
            "backend": self.executor.backend.value,
            "services": {sid: state.value for sid, state in self.service_states.items()},
            "clients": sorted(self.client_mounts),
            "timings": dict(self.timings),
            "torn_down": self.torn_down,
        }

    def open_session(self) -> Session:
        address, port = self.mgmt_endpoint
        return Session(address, port).attach()


def _is_loopback(address: str) -> bool:
    if address in ("localhost", "localhost.localdomain"):
        return True
    try:
        return ipaddress.ip_address(address).is_loopback
    except ValueError:
        return False


def _disk_key(node_id: str, disk_id: str) -> str:
    return f"{node_id}/{disk_id}"


def _rebase_dir(working_root: str, node_id: str, disk_id: str) -> str:
    return os.path.join(working_root, "nodes", node_id, disk_id)


def _unique_disks(plan: DeploymentPlan) -> list[tuple[str, str]]:
    seen = []
    for a in plan.assignments:
        key = (a.node.id, a.disk.id)
        if key not in seen:
            seen.append(key)
    return seen


def _runtime_document(
    svc: ServiceConfig, rendered: str, data_dir: str, deployment_id: str
) -> str:
    lines = []
    for line in rendered.splitlines():
        if line.startswith("data_dir = "):
            lines.append(f"data_dir = {data_dir}")
        else:
            lines.append(line)
    lines.append(f"deployment_id = {deployment_id}")
    return "\n".join(lines) + "\n"


def _tail(path: str, limit: int = 2000) -> str:
    try:
        with open(path, "r", encoding="utf-8", errors="replace") as fh:
            return fh.read()[-limit:]
    except OSError:
        return ""


class _Deployer:
    """Single-use helper that walks the startup tiers for one deploy call."""

    def __init__(self, plan: DeploymentPlan, executor: NodeExecutor):
        self.plan = plan
        self.executor = executor
        self.handle = DeploymentHandle(
            plan=plan,
            executor=executor,
            deployment_id=uuid.uuid4().hex[:12],
            service_states={
                s.service_id: ServiceState.PENDING for s in plan.daemon_services()
            },
        )
        self.root = executor.working_root

    # -- filesystem prep -----------------------------------------------------

    def prepare(self):
        try:
            for sub in ("configs", "logs", "mnt"):
                os.makedirs(os.path.join(self.root, sub), exist_ok=True)
        except OSError as exc:
            raise DeployError(f"working root not writable: {self.root}: {exc}")
        for node_id, disk_id in _unique_disks(self.plan):
            path = _rebase_dir(self.root, node_id, disk_id)
            self.handle.data_dirs[_disk_key(node_id, disk_id)] = path
            try:
                os.makedirs(path, exist_ok=True)
            except OSError:
                # leave the failure to the owning daemon so it surfaces as
                # a failed service, not a failed plan
                pass
        rendered = dict(render_configs(self.plan))
        for svc in self.plan.daemon_services():
            doc = rendered[f"configs/{svc.service_id}.conf"]
            if self.executor.backend is Backend.LOCAL_PROCESS:
                data_dir = _rebase_dir(self.root, svc.node.id, _disk_of(self.plan, svc))
                doc = _runtime_document(svc, doc, data_dir, self.handle.deployment_id)
            path = os.path.join(self.root, "configs", f"{svc.service_id}.conf")
            try:
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write(doc)
            except OSError as exc:
                raise DeployError(f"working root not writable: {path}: {exc}")
            self.handle.runtime_configs[svc.service_id] = path
        client_doc = rendered["configs/client.conf"]
        client_path = os.path.join(self.root, "configs", "client.conf")
        with open(client_path, "w", encoding="utf-8") as fh:
            fh.write(client_doc)

    def emit_manifest(self):
        lines = []
        for tier, kind in enumerate(_TIER_KINDS, start=1):
            for svc in self.plan.services_of(kind):
                config = self.handle.runtime_configs[svc.service_id]
                lines.append(f"tier {tier}: {svc.node.id} {svc.service_id} {config}")
        path = os.path.join(self.root, "launch_manifest.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        self.handle.notes.append(f"launch manifest written to {path}")

    # -- process control -------------------------------------------------------

    def spawn(self, svc: ServiceConfig):
        log_path = os.path.join(self.root, "logs", f"{svc.service_id}.log")
        log = open(log_path, "ab")
        try:
            proc = subprocess.Popen(
                [
                    sys.executable,
                    "-m",
                    "ephemstore.ministore.daemon",
                    self.handle.runtime_configs[svc.service_id],
                ],
                stdout=log,
                stderr=subprocess.STDOUT,
                cwd=self.root,
            )
        finally:
            log.close()
        self.handle.processes[svc.service_id] = proc

    def stop_started(self):
        _stop_processes(self.handle)
        for sid in self.handle.processes:
            state = self.handle.service_states[sid]
            if state is ServiceState.RUNNING:
                self.handle.service_states[sid] = ServiceState.STOPPED
            elif state is ServiceState.PENDING:
                # spawned but never confirmed healthy
                self.handle.service_states[sid] = ServiceState.FAILED

    def _collision(self, svc: ServiceConfig, detail: str) -> PortCollisionError:
        self.handle.service_states[svc.service_id] = ServiceState.FAILED
        self.stop_started()
        return PortCollisionError(
            f"service {svc.service_id} on {svc.listen_address}:{svc.listen_port}: {detail}"
        )

    def _check_children(self, tier: list[ServiceConfig]):
        """Detect daemons that died during startup; returns a failed service."""
        for svc in tier:
            proc = self.handle.processes.get(svc.service_id)
            if proc is None or proc.poll() is None:
                continue
            log_tail = _tail(os.path.join(self.root, "logs", f"{svc.service_id}.log"))
            if proc.returncode == 2 or "address already in use" in log_tail:
                raise self._collision(svc, log_tail.strip().splitlines()[-1] if log_tail else "bind failed")
            self.handle.service_states[svc.service_id] = ServiceState.FAILED
            self.handle.notes.append(
                f"service {svc.service_id} exited with code {proc.returncode}: {log_tail.strip()[-300:]}"
            )
            return svc
        return None

    def await_tier(self, kind: ServiceKind, tier: list[ServiceConfig], health) -> bool:
        """Barrier: spawn already done; wait until the registry confirms the tier."""
        needed = {
            ServiceKind.MANAGEMENT: ("metadata", 0),
            ServiceKind.METADATA: ("metadata", len(self.plan.services_of(ServiceKind.METADATA))),
            ServiceKind.STORAGE: ("storage", len(self.plan.services_of(ServiceKind.STORAGE))),
            ServiceKind.MONITORING: ("monitoring", 1),
        }[kind]
        deadline = time.monotonic() + self.executor.tier_timeout
        while time.monotonic() < deadline:
            failed = self._check_children(tier)
            if failed is not None:
                return False
            try:
                doc = health()
            except (StoreError, OSError):
                time.sleep(self.executor.poll_interval)
                continue
            if doc.get("deployment_id") != self.handle.deployment_id:
                raise self._collision(
                    self.plan.management,
                    f"registry on this port belongs to deployment "
                    f"{doc.get('deployment_id')!r}",
                )
            counts = doc.get("counts", {})
            if counts.get(needed[0], 0) >= needed[1]:
                for svc in tier:
                    self.handle.service_states[svc.service_id] = ServiceState.RUNNING
                return True
            time.sleep(self.executor.poll_interval)
        for svc in tier:
            if self.handle.service_states[svc.service_id] is ServiceState.PENDING:
                self.handle.service_states[svc.service_id] = ServiceState.FAILED
        self.handle.notes.append(f"tier {kind.value} did not become healthy in time")
        return False

    def run(self) -> DeploymentHandle:
        self.prepare()
        if self.executor.backend is Backend.EXTERNAL_EMIT:
            self.emit_manifest()
            return self.handle

        for node in {s.node.id: s.node for s in self.plan.daemon_services()}.values():
            if not _is_loopback(node.address):
                raise DeployError(
                    f"local backend needs a loopback inventory; node {node.id} "
                    f"has address {node.address!r}"
                )

        address, port = self.plan.management.listen_address, self.plan.management.listen_port
        mgmt = SocketTransport(address, port, label="management", timeout=5.0)

        def health() -> dict:
            return unpack_json(call(mgmt, HEALTH))

        start = time.monotonic()
        try:
            for kind in _TIER_KINDS:
                tier = self.plan.services_of(kind)
                if not tier:
                    continue
                tier_start = time.monotonic()
                for svc in tier:
                    self.spawn(svc)
                ok = self.await_tier(kind, tier, health)
                self.handle.timings[f"tier:{kind.value}"] = time.monotonic() - tier_start
                if not ok:
                    self.stop_started()
                    return self.handle
            self.handle.timings["deploy"] = time.monotonic() - start
        finally:
            mgmt.close()
        return self.handle


def _disk_of(plan: DeploymentPlan, svc: ServiceConfig) -> str:
    for a in plan.assignments:
        if a.node.id == svc.node.id and a.disk.mount_root == svc.data_dir:
            return a.disk.id
    raise DeployError(f"no disk backs service {svc.service_id}")


def deploy(plan: DeploymentPlan, executor: NodeExecutor) -> DeploymentHandle:
    """Launch all plan services tier by tier with registry health barriers.

    Returns a handle whose states are all `running` on success. A service
    that dies or never turns healthy leaves the handle partially `failed`
    (started services are stopped first). Port conflicts raise
    PortCollisionError.
    """
    return _Deployer(plan, executor).run()


def attach_clients(handle: DeploymentHandle, compute_nodes: list[NodeSpec]) -> DeploymentHandle:
    """Bind one client session per compute node to the running deployment."""
    if handle.torn_down or not handle.all_running():
        raise AttachError("management unreachable: deployment is not running")
    for node in compute_nodes:
        if node.id in handle.client_mounts:
            raise AttachError(f"node {node.id} already attached")
    address, port = handle.mgmt_endpoint
    for node in compute_nodes:
        mount_dir = os.path.join(handle.executor.working_root, "mnt", node.id)
        os.makedirs(mount_dir, exist_ok=True)
        try:
            session = Session(address, port).attach()
        except (StoreError, OSError) as exc:
            raise AttachError(f"management unreachable: {exc}")
        handle.client_mounts[node.id] = AttachPoint(node.id, mount_dir, session)
    return handle


def _stop_processes(handle: DeploymentHandle, notes: list | None = None):
    """SHUTDOWN frame first, then SIGTERM, then SIGKILL; best-effort."""
    order = [sid for sid in reversed(handle.plan.startup_order) if sid in handle.processes]
    for sid in order:
        proc = handle.processes[sid]
        if proc.poll() is not None:
            continue
        # a SHUTDOWN frame may only go to a service that registered healthy:
        # an unconfirmed child might have lost its port to a foreign daemon,
        # and the frame would kill that daemon instead
        if handle.service_states.get(sid) is ServiceState.RUNNING:
            svc = handle.plan.service_by_id(sid)
            transport = SocketTransport(svc.listen_address, svc.listen_port, label=sid, timeout=1.0)
            try:
                transport.request(SHUTDOWN)
            except StoreError:
                pass
            finally:
                transport.close()
            try:
                proc.wait(timeout=1.0)
                continue
            except subprocess.TimeoutExpired:
                pass
        proc.terminate()
        try:
            proc.wait(timeout=2.0)
            if notes is not None:
                notes.append(f"service {sid} needed SIGTERM")
            continue
        except subprocess.TimeoutExpired:
            pass
        proc.kill()
        proc.wait(timeout=5.0)
        if notes is not None:
            notes.append(f"service {sid} was unresponsive; killed")


def _scrub_dir(path: str) -> tuple[int, int]:
    """Delete everything under path; returns (entries_removed, bytes_removed)."""
    entries = 0
    size = 0
    if not os.path.isdir(path):
        return 0, 0
    for root, dirs, files in os.walk(path, topdown=False, onerror=lambda e: None):
        for name in files:
            full = os.path.join(root, name)
            entries += 1
            try:
                size += os.path.getsize(full)
            except OSError:
                pass
        entries += len(dirs)
    for name in os.listdir(path):
        full = os.path.join(path, name)
        try:
            if os.path.isdir(full) and not os.path.islink(full):
                shutil.rmtree(full, ignore_errors=True)
            else:
                os.unlink(full)
        except OSError:
            pass
    return entries, size


def _count_entries(path: str) -> int:
    count = 0
    for _, dirs, files in os.walk(path, onerror=lambda e: None):
        count += len(dirs) + len(files)
    return count


def teardown(handle: DeploymentHandle) -> TeardownReport:
    """Stop every service, detach clients, and scrub all disk directories.

    Best-effort and idempotent: problems become report notes, never raises.
    """
    report = TeardownReport()
    if handle.torn_down:
        report.notes.append("already torn down; nothing to do")
        return report
    start = time.monotonic()

    for attach_point in handle.client_mounts.values():
        try:
            attach_point.session.close()
        except Exception as exc:  # noqa: BLE001 - best-effort teardown
            report.notes.append(f"client {attach_point.node_id} detach: {exc}")
        shutil.rmtree(attach_point.mount_dir, ignore_errors=True)
    handle.client_mounts.clear()

    if handle.executor.backend is Backend.LOCAL_PROCESS:
        _stop_processes(handle, notes=report.notes)
        for sid, state in handle.service_states.items():
            if state in (ServiceState.RUNNING, ServiceState.PENDING):
                handle.service_states[sid] = ServiceState.STOPPED

        for key, path in sorted(handle.data_dirs.items()):
            removed, size = _scrub_dir(path)
            residual = _count_entries(path)
            if residual:
                report.notes.append(f"disk {key} kept {residual} entries after scrub")
            report.rows.append(ScrubRow(disk=key, residual_entries=residual, bytes_scrubbed=size))
    else:
        report.notes.append("external backend: nothing was launched locally")
        for sid, state in handle.service_states.items():
            if state is ServiceState.PENDING:
                handle.service_states[sid] = ServiceState.STOPPED

    handle.timings["teardown"] = time.monotonic() - start
    handle.torn_down = True
    return report


def _copy_in(session: Session, src: str, dst: str) -> int:
    copied = 0
    if os.path.isdir(src):
        if not session.exists(dst):
            session.mkdir(dst)
        for name in sorted(os.listdir(src)):
            copied += _copy_in(session, os.path.join(src, name), f"{dst.rstrip('/')}/{name}")
        return copied
    session.create(dst)
    with open(src, "rb") as fh:
        offset = 0
        while True:
            block = fh.read(4 << 20)
            if not block:
                break
            session.write(dst, offset, block)
            offset += len(block)
            copied += len(block)
    return copied


def _copy_out(session: Session, src: str, dst: str) -> int:
    meta = session.stat(src)
    if meta.kind == "file":
        data = session.read_full(src)
        os.makedirs(os.path.dirname(dst) or ".", exist_ok=True)
        with open(dst, "wb") as fh:
            fh.write(data)
        return len(data)
    os.makedirs(dst, exist_ok=True)
    copied = 0
    dirs, files = session.listdir(src)
    base = src.rstrip("/") or ""
    for name in files + dirs:
        copied += _copy_out(session, f"{base}/{name}", os.path.join(dst, name))
    return copied


def stage(handle: DeploymentHandle, direction, src: str, dst: str) -> int:
    """Recursive copy across the namespace boundary; returns bytes copied."""
    try:
        direction = StageDirection(direction)
    except ValueError:
        raise StageError(f"direction must be 'in' or 'out', got {direction!r}")
    if handle.torn_down or not handle.all_running():
        raise StageError("deployment is not running")
    try:
        session = handle.open_session()
    except (StoreError, OSError) as exc:
        raise StageError(f"cannot attach for staging: {exc}")
    try:
        if direction is StageDirection.IN:
            if not os.path.exists(src):
                raise StageError(f"stage-in source missing: {src}")
            return _copy_in(session, src, dst)
        if not session.exists(src):
            raise StageError(f"stage-out source missing: {src}")
        return _copy_out(session, src, dst)
    except StageError:
        raise
    except (StoreError, OSError) as exc:
        raise StageError(f"stage {direction.value} failed: {exc}")
    finally:
        session.close()
