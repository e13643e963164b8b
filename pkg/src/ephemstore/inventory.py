"""Cluster inventory: nodes, raw disks, features, and constraint-based allocations."""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from enum import Enum

from .errors import AllocationError, InventoryError


class NodeKind(str, Enum):
    COMPUTE = "compute"
    STORAGE = "storage"


class Purpose(str, Enum):
    COMPUTE = "compute"
    STORAGE = "storage"


class AllocationState(str, Enum):
    GRANTED = "granted"
    ACTIVE = "active"
    RELEASED = "released"


@dataclass(frozen=True)
class DiskSpec:
    id: str
    mount_root: str
    capacity_bytes: int
    nominal_read_bw: int
    nominal_write_bw: int


@dataclass(frozen=True)
class NodeSpec:
    id: str
    address: str
    kind: NodeKind
    features: frozenset[str]
    cpus: int
    dram_bytes: int
    disks: tuple[DiskSpec, ...]


# ---------------------------------------------------------------------------
# Constraint expressions: AND/OR over feature literals, & binds tighter than |.

_TOKEN_RE = re.compile(r"\s*([A-Za-z0-9_.-]+|[&|()])")


@dataclass(frozen=True)
class _Lit:
    name: str

    def matches(self, features: frozenset[str]) -> bool:
        return self.name in features

    def names(self) -> set[str]:
        return {self.name}


@dataclass(frozen=True)
class _And:
    parts: tuple

    def matches(self, features: frozenset[str]) -> bool:
        return all(p.matches(features) for p in self.parts)

    def names(self) -> set[str]:
        return set().union(*(p.names() for p in self.parts))


@dataclass(frozen=True)
class _Or:
    parts: tuple

    def matches(self, features: frozenset[str]) -> bool:
        return any(p.matches(features) for p in self.parts)

    def names(self) -> set[str]:
        return set().union(*(p.names() for p in self.parts))


@dataclass(frozen=True)
class Constraint:
    """Parsed boolean expression over node feature names."""

    text: str
    root: object

    def matches(self, features: frozenset[str]) -> bool:
        return self.root.matches(features)

    def feature_names(self) -> set[str]:
        return self.root.names()


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise AllocationError(f"bad constraint syntax near {text[pos:]!r}")
            break
        tokens.append(m.group(1))
        pos = m.end()
    return tokens


def parse_constraint(text: str) -> Constraint:
    """Parse a constraint like ``storage``, ``a&b``, or ``gpu|(mc&local-storage)``."""
    tokens = _tokenize(text)
    if not tokens:
        raise AllocationError("empty constraint")
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else None

    def take():
        nonlocal pos
        tok = peek()
        pos += 1
        return tok

    def parse_or():
        parts = [parse_and()]
        while peek() == "|":
            take()
            parts.append(parse_and())
        return parts[0] if len(parts) == 1 else _Or(tuple(parts))

    def parse_and():
        parts = [parse_factor()]
        while peek() == "&":
            take()
            parts.append(parse_factor())
        return parts[0] if len(parts) == 1 else _And(tuple(parts))

    def parse_factor():
        tok = take()
        if tok == "(":
            inner = parse_or()
            if take() != ")":
                raise AllocationError(f"unbalanced parentheses in constraint {text!r}")
            return inner
        if tok is None or tok in "&|)":
            raise AllocationError(f"bad constraint syntax in {text!r}")
        return _Lit(tok)

    root = parse_or()
    if pos != len(tokens):
        raise AllocationError(f"trailing tokens in constraint {text!r}")
    return Constraint(text=text, root=root)


@dataclass
class AllocationRequest:
    count: int
    constraint: str
    purpose: Purpose

    def __post_init__(self):
        if self.count < 1:
            raise AllocationError(f"allocation count must be >= 1, got {self.count}")
        self.purpose = Purpose(self.purpose)
        self.parsed = parse_constraint(self.constraint)


@dataclass
class Allocation:
    id: str
    nodes: tuple[NodeSpec, ...]
    state: AllocationState
    purpose: Purpose
    constraint: str

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes)


# ---------------------------------------------------------------------------
# Inventory file format (line-oriented, sectioned):
#
#   # comment
#   [node dw01]
#   address = 127.0.0.1
#   kind = storage
#   features = storage
#   cpus = 36
#   dram_bytes = 64000000000
#   disk = nvme0n1,/mnt/nvme0n1,5900000000000,6340000000,3200000000

_SECTION_RE = re.compile(r"^\[node\s+([A-Za-z0-9_.-]+)\]$")
_NODE_KEYS = {"address", "kind", "features", "cpus", "dram_bytes", "disk"}
_REQUIRED_KEYS = ("address", "kind", "cpus", "dram_bytes")


def _parse_int(raw: str, what: str, line: int) -> int:
    try:
        return int(raw)
    except ValueError:
        raise InventoryError(f"{what} must be an integer, got {raw!r}", line)


def _finish_node(node_id, fields, disks, header_line) -> NodeSpec:
    for key in _REQUIRED_KEYS:
        if key not in fields:
            raise InventoryError(f"node {node_id!r} missing key {key!r}", header_line)
    kind_raw = fields["kind"]
    try:
        kind = NodeKind(kind_raw)
    except ValueError:
        raise InventoryError(
            f"node {node_id!r}: kind must be compute or storage, got {kind_raw!r}",
            header_line,
        )
    features = frozenset(fields.get("features", frozenset()))
    cpus = fields["cpus"]
    dram = fields["dram_bytes"]
    if cpus < 1:
        raise InventoryError(f"node {node_id!r}: cpus must be >= 1", header_line)
    if dram <= 0:
        raise InventoryError(f"node {node_id!r}: dram_bytes must be > 0", header_line)
    if kind is NodeKind.STORAGE and not disks:
        raise InventoryError(f"storage node {node_id!r} declares no disks", header_line)
    if (kind is NodeKind.STORAGE) != ("storage" in features):
        raise InventoryError(
            f"node {node_id!r}: feature 'storage' is present iff kind is storage",
            header_line,
        )
    if kind is NodeKind.COMPUTE and disks and "local-storage" not in features:
        raise InventoryError(
            f"compute node {node_id!r} declares disks without 'local-storage' feature",
            header_line,
        )
    return NodeSpec(
        id=node_id,
        address=fields["address"],
        kind=kind,
        features=features,
        cpus=cpus,
        dram_bytes=dram,
        disks=tuple(disks),
    )


def load_inventory(document: str) -> list[NodeSpec]:
    """Parse an inventory document into NodeSpecs, preserving document order."""
    nodes: list[NodeSpec] = []
    seen_ids: set[str] = set()
    node_id = None
    header_line = 0
    fields: dict = {}
    disks: list[DiskSpec] = []
    disk_ids: set[str] = set()
    disk_mounts: set[str] = set()

    def close_section():
        if node_id is None:
            return
        node = _finish_node(node_id, fields, disks, header_line)
        nodes.append(node)

    for lineno, raw in enumerate(document.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _SECTION_RE.match(line)
        if m:
            close_section()
            node_id = m.group(1)
            if node_id in seen_ids:
                raise InventoryError(f"duplicate node id {node_id!r}", lineno)
            seen_ids.add(node_id)
            header_line = lineno
            fields, disks, disk_ids, disk_mounts = {}, [], set(), set()
            continue
        if "=" not in line:
            raise InventoryError(f"expected 'key = value', got {line!r}", lineno)
        if node_id is None:
            raise InventoryError(f"key outside any [node ...] section: {line!r}", lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _NODE_KEYS:
            raise InventoryError(f"unknown key {key!r}", lineno)
        if key == "disk":
            parts = [p.strip() for p in value.split(",")]
            if len(parts) != 5:
                raise InventoryError(
                    "disk needs 5 fields: id,mount_root,capacity_bytes,read_bw,write_bw",
                    lineno,
                )
            disk_id, mount_root, cap, rbw, wbw = parts
            if disk_id in disk_ids:
                raise InventoryError(f"duplicate disk id {disk_id!r} on node {node_id!r}", lineno)
            if mount_root in disk_mounts:
                raise InventoryError(
                    f"duplicate mount root {mount_root!r} on node {node_id!r}", lineno
                )
            disk_ids.add(disk_id)
            disk_mounts.add(mount_root)
            disk = DiskSpec(
                id=disk_id,
                mount_root=mount_root,
                capacity_bytes=_parse_int(cap, "capacity_bytes", lineno),
                nominal_read_bw=_parse_int(rbw, "read_bw", lineno),
                nominal_write_bw=_parse_int(wbw, "write_bw", lineno),
            )
            if disk.capacity_bytes <= 0:
                raise InventoryError(f"disk {disk_id!r}: capacity_bytes must be > 0", lineno)
            if disk.nominal_read_bw < 0 or disk.nominal_write_bw < 0:
                raise InventoryError(f"disk {disk_id!r}: bandwidths must be >= 0", lineno)
            disks.append(disk)
        elif key == "features":
            fields[key] = frozenset(f.strip() for f in value.split(",") if f.strip())
        elif key in ("cpus", "dram_bytes"):
            if key in fields:
                raise InventoryError(f"duplicate key {key!r}", lineno)
            fields[key] = _parse_int(value, key, lineno)
        else:
            if key in fields:
                raise InventoryError(f"duplicate key {key!r}", lineno)
            fields[key] = value

    close_section()
    return nodes


class Cluster:
    """Allocation registry over a fixed inventory.

    Mutations are serialized behind one lock (single-writer model); reads of
    granted allocations are safe from any thread.
    """

    def __init__(self, nodes: list[NodeSpec]):
        ids = [n.id for n in nodes]
        if len(set(ids)) != len(ids):
            raise InventoryError("duplicate node ids in inventory")
        self.nodes = list(nodes)
        self._lock = threading.Lock()
        self._seq = 0
        self._allocations: dict[str, Allocation] = {}
        # purpose -> node ids currently held by a non-released allocation
        self._held: dict[Purpose, set[str]] = {p: set() for p in Purpose}
        self._features = set().union(*(n.features for n in nodes)) if nodes else set()

    def declared_features(self) -> set[str]:
        return set(self._features)

    def allocations(self) -> list[Allocation]:
        with self._lock:
            return list(self._allocations.values())

    def request_allocation(self, req: AllocationRequest) -> Allocation:
        """Grant `req.count` nodes matching the constraint, lowest node id first."""
        if not self.nodes:
            raise AllocationError("inventory is empty")
        unknown = req.parsed.feature_names() - self._features
        if unknown:
            raise AllocationError(
                f"unknown feature(s) in constraint: {', '.join(sorted(unknown))}"
            )
        with self._lock:
            held = self._held[req.purpose]
            eligible = [
                n
                for n in sorted(self.nodes, key=lambda n: n.id)
                if req.parsed.matches(n.features) and n.id not in held
            ]
            if len(eligible) < req.count:
                raise AllocationError(
                    f"insufficient eligible nodes: requested {req.count}, "
                    f"{len(eligible)} eligible for constraint {req.constraint!r}"
                )
            self._seq += 1
            alloc = Allocation(
                id=f"alloc-{self._seq:04d}",
                nodes=tuple(eligible[: req.count]),
                state=AllocationState.GRANTED,
                purpose=req.purpose,
                constraint=req.constraint,
            )
            self._allocations[alloc.id] = alloc
            held.update(alloc.node_ids)
            return alloc

    def release_allocation(self, alloc: Allocation) -> Allocation:
        """Release a granted or active allocation; its nodes become eligible again."""
        with self._lock:
            known = self._allocations.get(alloc.id)
            if known is None:
                raise AllocationError(f"unknown allocation {alloc.id!r}")
            if known.state is AllocationState.RELEASED:
                raise AllocationError(f"allocation {alloc.id!r} already released")
            known.state = AllocationState.RELEASED
            self._held[known.purpose].difference_update(known.node_ids)
            return known

    def mark_active(self, alloc: Allocation) -> Allocation:
        with self._lock:
            known = self._allocations.get(alloc.id)
            if known is None or known.state is AllocationState.RELEASED:
                raise AllocationError(f"allocation {alloc.id!r} is not live")
            known.state = AllocationState.ACTIVE
            return known
