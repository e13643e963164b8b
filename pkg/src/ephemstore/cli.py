"""Thin command-line client for the deployment service.

Every subcommand except `serve` and `report` talks HTTP to a running
`ephemstore serve` instance. State lives server-side; the run directory
(--out) keeps the manifest, rendered configs, and CSV mirrors.

Exit codes: 0 success, 2 usage or bad input, 3 missing state, 4 runtime failure.
"""

from __future__ import annotations

import csv
import glob
import io
import json
import os
import statistics
import sys
from contextlib import contextmanager

import click
import httpx
from filelock import FileLock, Timeout

DEFAULT_SERVER = "http://127.0.0.1:8750"
MANIFEST_NAME = "manifest.json"

EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_RUNTIME = 4

BANDWIDTH_HEADER = [
    "workload",
    "mode",
    "nodes",
    "ppn",
    "size_per_proc",
    "iteration",
    "phase",
    "bytes",
    "seconds",
    "bandwidth_bytes_per_s",
]
OPS_HEADER = ["workload", "target", "operation", "ops", "seconds", "ops_per_sec"]

_SIZE_SUFFIXES = {
    "": 1,
    "b": 1,
    "k": 1 << 10,
    "kib": 1 << 10,
    "kb": 10**3,
    "m": 1 << 20,
    "mib": 1 << 20,
    "mb": 10**6,
    "g": 1 << 30,
    "gib": 1 << 30,
    "gb": 10**9,
    "t": 1 << 40,
    "tib": 1 << 40,
    "tb": 10**12,
}


def parse_size(text: str) -> int:
    """'4MiB' -> 4194304. Binary suffixes KiB/MiB/GiB (K/M/G alias them), decimal KB/MB/GB."""
    raw = str(text).strip().lower()
    digits, suffix = raw, ""
    for i, ch in enumerate(raw):
        if ch not in "0123456789.":
            digits, suffix = raw[:i], raw[i:].strip()
            break
    factor = _SIZE_SUFFIXES.get(suffix)
    if factor is None or not digits:
        raise ValueError(f"unrecognized size {text!r}")
    value = float(digits) if "." in digits else int(digits)
    result = value * factor
    if result != int(result) or result < 0:
        raise ValueError(f"size must be a whole byte count, got {text!r}")
    return int(result)


class SizeType(click.ParamType):
    name = "size"

    def convert(self, value, param, ctx):
        if isinstance(value, int):
            return value
        try:
            return parse_size(value)
        except ValueError as exc:
            self.fail(str(exc), param, ctx)


SIZE = SizeType()


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@contextmanager
def _run_lock(ctx):
    """One command at a time per run directory."""
    out = ctx.obj["out"]
    os.makedirs(out, exist_ok=True)
    lock = FileLock(os.path.join(out, ".lock"))
    try:
        lock.acquire(timeout=1.0)
    except Timeout:
        _fail(EXIT_RUNTIME, f"another command holds the lock on {out}")
    try:
        yield
    finally:
        lock.release()


def _error_text(resp: httpx.Response) -> str:
    try:
        body = resp.json()
    except ValueError:
        return resp.text.strip() or f"HTTP {resp.status_code}"
    if isinstance(body, dict):
        if "error" in body:
            return str(body["error"])
        if "detail" in body:
            detail = body["detail"]
            return detail if isinstance(detail, str) else json.dumps(detail)
    return resp.text.strip()


def _request(ctx, method: str, path: str, payload: dict | None = None, timeout: float = 120.0):
    url = ctx.obj["server"] + path
    try:
        resp = httpx.request(method, url, json=payload, timeout=timeout)
    except httpx.HTTPError as exc:
        _fail(EXIT_RUNTIME, f"cannot reach service at {url}: {exc}")
    if resp.status_code == 404:
        _fail(EXIT_MISSING, _error_text(resp))
    if resp.status_code == 422:
        _fail(EXIT_USAGE, _error_text(resp))
    if resp.status_code >= 400:
        _fail(EXIT_RUNTIME, _error_text(resp))
    return resp.json()


def _manifest_path(ctx) -> str:
    return os.path.join(ctx.obj["out"], MANIFEST_NAME)


def _load_manifest(ctx) -> dict:
    path = _manifest_path(ctx)
    if not os.path.exists(path):
        _fail(EXIT_MISSING, f"no deployment manifest at {path}; run deploy first")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _read_inventory(ctx) -> str:
    path = ctx.obj["inventory"]
    if not path:
        raise click.UsageError("--inventory is required for this command")
    if not os.path.exists(path):
        _fail(EXIT_USAGE, f"inventory file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _write_text(path: str, text: str):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _write_csv(path: str, header: list[str], rows: list[list]):
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    _write_text(path, buf.getvalue())


def _services_csv(ctx, services: dict[str, str]):
    rows = [[sid, state] for sid, state in sorted(services.items())]
    _write_csv(os.path.join(ctx.obj["out"], "services.csv"), ["service", "state"], rows)


def _fmt_bw(value: float) -> str:
    return f"{value / 1e9:.3f} GB/s"


# -- command group -------------------------------------------------------------


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option(
    "--server",
    envvar="EPHEMSTORE_SERVER",
    default=DEFAULT_SERVER,
    show_default=True,
    help="deployment service URL",
)
@click.option("--inventory", type=click.Path(dir_okay=False), default=None, help="cluster inventory file")
@click.option(
    "--out",
    type=click.Path(file_okay=False),
    default="./ephemstore-out",
    show_default=True,
    help="run directory for the manifest, configs, and CSV mirrors",
)
@click.option(
    "--backend",
    type=click.Choice(["local", "emit"]),
    default="local",
    show_default=True,
    help="launch daemons locally, or only emit a launch manifest",
)
@click.pass_context
def main(ctx, server, inventory, out, backend):
    """Provision, exercise, and dismantle an ephemeral storage deployment."""
    ctx.ensure_object(dict)
    ctx.obj.update(
        server=server.rstrip("/"),
        inventory=inventory,
        out=os.path.abspath(out),
        backend=backend,
    )


def _policy_options(cmd):
    opts = [
        click.option(
            "--storage-nodes",
            type=click.IntRange(min=1),
            default=1,
            show_default=True,
            help="storage nodes to allocate",
        ),
        click.option(
            "--constraint",
            default="storage",
            show_default=True,
            help="node feature constraint, e.g. 'storage & nvme'",
        ),
        click.option("--meta-disks", type=click.IntRange(min=0), default=1, show_default=True),
        click.option("--storage-disks", type=click.IntRange(min=1), default=2, show_default=True),
        click.option(
            "--dedicated-mgmt",
            is_flag=True,
            help="give management its own disk instead of sharing the first metadata disk",
        ),
        click.option("--stripe-size", type=SIZE, default="1MiB", show_default=True),
        click.option("--base-port", type=int, default=46000, show_default=True),
        click.option("--xattr", is_flag=True, help="mirror path attributes into xattrs"),
    ]
    for opt in reversed(opts):
        cmd = opt(cmd)
    return cmd


def _plan_payload(ctx, storage_nodes, constraint, meta_disks, storage_disks, dedicated_mgmt, stripe_size, base_port, xattr) -> dict:
    return {
        "inventory_text": _read_inventory(ctx),
        "storage_nodes": storage_nodes,
        "constraint": constraint,
        "policy": {
            "meta_disks_per_node": meta_disks,
            "storage_disks_per_node": storage_disks,
            "colocate_mgmt_on_first_meta": not dedicated_mgmt,
            "dedicated_mgmt_disks": 1 if dedicated_mgmt else 0,
            "stripe_size_bytes": stripe_size,
            "base_port": base_port,
            "enable_xattr_metadata": xattr,
        },
    }


@main.command()
@_policy_options
@click.pass_context
def plan(ctx, storage_nodes, constraint, meta_disks, storage_disks, dedicated_mgmt, stripe_size, base_port, xattr):
    """Allocate nodes on paper; print the role table, write service configs."""
    with _run_lock(ctx):
        payload = _plan_payload(
            ctx, storage_nodes, constraint, meta_disks, storage_disks, dedicated_mgmt, stripe_size, base_port, xattr
        )
        body = _request(ctx, "POST", "/plans", payload)
        out = ctx.obj["out"]
        for rel, doc in sorted(body["configs"].items()):
            _write_text(os.path.join(out, rel), doc)
        _write_csv(
            os.path.join(out, "roles.csv"),
            ["node", "disk", "role", "data_dir"],
            [[a["node"], a["disk"], a["role"], a["data_dir"]] for a in body["assignments"]],
        )
        _write_text(
            os.path.join(out, "plan.txt"),
            body["role_table"] + "\nstartup order: " + " ".join(body["startup_order"]) + "\n",
        )
        click.echo(body["role_table"].rstrip())
        click.echo(f"startup order: {' '.join(body['startup_order'])}")
        click.echo(f"configs written under {os.path.join(out, 'configs')}")


@main.command()
@_policy_options
@click.option(
    "--working-root",
    default=None,
    help="deployment scratch directory [default: <out>/run]",
)
@click.pass_context
def deploy(ctx, storage_nodes, constraint, meta_disks, storage_disks, dedicated_mgmt, stripe_size, base_port, xattr, working_root):
    """Allocate, plan, and launch the full service stack."""
    with _run_lock(ctx):
        if os.path.exists(_manifest_path(ctx)):
            _fail(
                EXIT_RUNTIME,
                f"a deployment manifest already exists at {_manifest_path(ctx)}; run teardown first",
            )
        payload = _plan_payload(
            ctx, storage_nodes, constraint, meta_disks, storage_disks, dedicated_mgmt, stripe_size, base_port, xattr
        )
        payload["backend"] = ctx.obj["backend"]
        payload["working_root"] = working_root or os.path.join(ctx.obj["out"], "run")
        body = _request(ctx, "POST", "/deployments", payload, timeout=300.0)
        manifest = {
            "server": ctx.obj["server"],
            "deployment_id": body["deployment_id"],
            "backend": body["backend"],
            "working_root": body["working_root"],
            "mgmt_address": body["mgmt_address"],
            "mgmt_port": body["mgmt_port"],
        }
        _write_text(_manifest_path(ctx), json.dumps(manifest, indent=2) + "\n")
        _services_csv(ctx, body["services"])
        if body["failed"]:
            _fail(EXIT_RUNTIME, f"services failed to start: {', '.join(body['failed'])}")
        took = body["timings"].get("deploy")
        running = sum(1 for s in body["services"].values() if s == "running")
        if took is None:
            click.echo(
                f"deployment {body['deployment_id']}: launch manifest emitted under "
                f"{body['working_root']}"
            )
        else:
            click.echo(
                f"deployment {body['deployment_id']}: {running}/{len(body['services'])} "
                f"services running in {took:.2f}s"
            )
        click.echo(f"management endpoint: {body['mgmt_address']}:{body['mgmt_port']}")


@main.command()
@click.pass_context
def status(ctx):
    """Show service states for the deployment in this run directory."""
    with _run_lock(ctx):
        manifest = _load_manifest(ctx)
        body = _request(ctx, "GET", f"/deployments/{manifest['deployment_id']}")
        _services_csv(ctx, body["services"])
        width = max(len(sid) for sid in body["services"])
        for sid, state in sorted(body["services"].items()):
            click.echo(f"{sid:<{width}}  {state}")
        if body["clients"]:
            click.echo(f"clients: {', '.join(body['clients'])}")
        for note in body["notes"]:
            click.echo(f"note: {note}")


@main.command()
@click.option("--nodes", default=None, help="comma-separated compute node ids")
@click.option(
    "--count",
    type=click.IntRange(min=0),
    default=None,
    help="attach this many compute nodes [default: all]",
)
@click.pass_context
def attach(ctx, nodes, count):
    """Attach compute-node clients to the running deployment."""
    with _run_lock(ctx):
        manifest = _load_manifest(ctx)
        node_list = [s.strip() for s in nodes.split(",") if s.strip()] if nodes else None
        body = _request(
            ctx,
            "POST",
            f"/deployments/{manifest['deployment_id']}/attach",
            {"nodes": node_list, "count": count},
        )
        _write_csv(
            os.path.join(ctx.obj["out"], "attach.csv"),
            ["node", "mount_dir"],
            [[node, body["mounts"][node]] for node in body["attached"]],
        )
        for node in body["attached"]:
            click.echo(f"{node} -> {body['mounts'][node]}")


@main.command()
@click.argument("direction", type=click.Choice(["in", "out"]))
@click.argument("src")
@click.argument("dst")
@click.pass_context
def stage(ctx, direction, src, dst):
    """Copy data into (host->store) or out of (store->host) the deployment."""
    with _run_lock(ctx):
        manifest = _load_manifest(ctx)
        body = _request(
            ctx,
            "POST",
            f"/deployments/{manifest['deployment_id']}/stage",
            {"direction": direction, "src": src, "dst": dst},
            timeout=600.0,
        )
        _write_csv(
            os.path.join(ctx.obj["out"], "stage.csv"),
            ["direction", "src", "dst", "bytes_copied"],
            [[direction, src, dst, body["bytes_copied"]]],
        )
        click.echo(f"staged {body['bytes_copied']} bytes {direction}")


@main.group()
@click.option(
    "--baseline",
    type=click.Path(file_okay=False),
    default=None,
    help="run against a plain directory instead of the deployment",
)
@click.option("--iterations", type=click.IntRange(min=1), default=10, show_default=True)
@click.option(
    "--nodes",
    "bench_nodes",
    type=click.IntRange(min=1),
    default=1,
    show_default=True,
    help="simulated client nodes",
)
@click.option(
    "--ppn", type=click.IntRange(min=1), default=1, show_default=True, help="worker processes per node"
)
@click.option("--seed", type=int, default=1234, show_default=True)
@click.option(
    "--workdir", default="/bench", show_default=True, help="directory used inside the store namespace"
)
@click.option(
    "--reorder-ranks", is_flag=True, help="each rank reads the region written by a neighbor rank"
)
@click.pass_context
def bench(ctx, baseline, iterations, bench_nodes, ppn, seed, workdir, reorder_ranks):
    """Run an I/O workload and mirror the results as CSV."""
    ctx.obj["bench"] = {
        "baseline_dir": os.path.abspath(baseline) if baseline else None,
        "iterations": iterations,
        "nodes": bench_nodes,
        "ppn": ppn,
        "seed": seed,
        "workdir": workdir,
        "reorder_read_ranks": reorder_ranks,
    }


def _run_bench(ctx, payload: dict, csv_name: str):
    with _run_lock(ctx):
        common = dict(ctx.obj["bench"])
        baseline_dir = common.pop("baseline_dir")
        payload.update(common)
        if baseline_dir:
            payload["baseline_dir"] = baseline_dir
            body = _request(ctx, "POST", "/bench/baseline", payload, timeout=3600.0)
            csv_name += "-baseline"
        else:
            manifest = _load_manifest(ctx)
            body = _request(
                ctx,
                "POST",
                f"/deployments/{manifest['deployment_id']}/bench",
                payload,
                timeout=3600.0,
            )
        results_dir = os.path.join(ctx.obj["out"], "results")
        text = body.get("bandwidth_csv") or body.get("ops_csv") or ""
        path = os.path.join(results_dir, f"{csv_name}.csv")
        _write_text(path, text)
        click.echo(body["summary"].rstrip())
        click.echo(f"results: {path}")


@bench.command()
@click.option(
    "--mode",
    type=click.Choice(["shared", "fpp", "shared_file", "file_per_process"]),
    default="shared",
    show_default=True,
)
@click.option("--size", type=SIZE, default="4MiB", show_default=True, help="bytes written per process")
@click.option("--transfer", type=SIZE, default="1MiB", show_default=True, help="transfer block size")
@click.pass_context
def ior(ctx, mode, size, transfer):
    """Sequential write then read bandwidth, shared file or file-per-process."""
    full_mode = {"shared": "shared_file", "fpp": "file_per_process"}.get(mode, mode)
    _run_bench(
        ctx,
        {
            "workload": "ior",
            "mode": full_mode,
            "size_per_proc_bytes": size,
            "transfer_size_bytes": transfer,
        },
        csv_name=f"ior-{full_mode}",
    )


@bench.command()
@click.option("--particles", type=click.IntRange(min=1), default=25000, show_default=True)
@click.pass_context
def hacc(ctx, particles):
    """Particle checkpoint write/read with per-field verification."""
    _run_bench(
        ctx,
        {"workload": "hacc", "mode": "shared_file", "particles_per_proc": particles},
        csv_name="hacc",
    )


@bench.command()
@click.option("--items", type=click.IntRange(min=1), default=1000, show_default=True)
@click.pass_context
def mdtest(ctx, items):
    """Metadata operation rates over directory and file trees."""
    _run_bench(
        ctx,
        {"workload": "mdtest", "mode": "shared_file", "items_per_proc": items},
        csv_name="mdtest",
    )


def _summarize_bandwidth(name: str, rows: list[dict]) -> str:
    first = rows[0]
    lines = [
        f"{name}: workload={first['workload']} mode={first['mode']} "
        f"nodes={first['nodes']} ppn={first['ppn']} size_per_proc={first['size_per_proc']}"
    ]
    phases = sorted({row["phase"] for row in rows})
    for phase in phases:
        values = [float(r["bandwidth_bytes_per_s"]) for r in rows if r["phase"] == phase]
        lines.append(
            f"  {phase:<6} min {_fmt_bw(min(values))}  median {_fmt_bw(statistics.median(values))}  "
            f"max {_fmt_bw(max(values))}  ({len(values)} iterations)"
        )
    return "\n".join(lines)


def _summarize_ops(name: str, rows: list[dict]) -> str:
    lines = [f"{name}: workload={rows[0]['workload']}"]
    for row in rows:
        lines.append(
            f"  {row['target']:<10} {row['operation']:<9} {float(row['ops_per_sec']):>12.2f} ops/s "
            f"({row['ops']} ops in {float(row['seconds']):.4f}s)"
        )
    return "\n".join(lines)


@main.command()
@click.pass_context
def report(ctx):
    """Summarize the result CSVs in this run directory (no server needed)."""
    with _run_lock(ctx):
        results_dir = os.path.join(ctx.obj["out"], "results")
        files = sorted(glob.glob(os.path.join(results_dir, "*.csv")))
        if not files:
            _fail(EXIT_MISSING, f"no result CSVs under {results_dir}; run bench first")
        sections = []
        for path in files:
            with open(path, newline="", encoding="utf-8") as fh:
                reader = csv.DictReader(fh)
                rows = list(reader)
                header = reader.fieldnames or []
            name = os.path.basename(path)
            if not rows:
                sections.append(f"{name}: empty")
            elif header == BANDWIDTH_HEADER:
                sections.append(_summarize_bandwidth(name, rows))
            elif header == OPS_HEADER:
                sections.append(_summarize_ops(name, rows))
            else:
                sections.append(f"{name}: unrecognized columns {header}")
        teardown_csv = os.path.join(ctx.obj["out"], "teardown.csv")
        if os.path.exists(teardown_csv):
            with open(teardown_csv, encoding="utf-8") as fh:
                sections.append("teardown.csv:\n" + "\n".join(f"  {ln}" for ln in fh.read().splitlines()))
        text = "\n\n".join(sections) + "\n"
        _write_text(os.path.join(ctx.obj["out"], "report.txt"), text)
        click.echo(text.rstrip())


@main.command()
@click.pass_context
def teardown(ctx):
    """Stop all services, scrub disks, and release the allocation."""
    with _run_lock(ctx):
        manifest = _load_manifest(ctx)
        body = _request(
            ctx,
            "POST",
            f"/deployments/{manifest['deployment_id']}/teardown",
            timeout=300.0,
        )
        _write_text(os.path.join(ctx.obj["out"], "teardown.csv"), body["csv"])
        click.echo(body["csv"].rstrip())
        for note in body["notes"]:
            click.echo(f"note: {note}")
        os.remove(_manifest_path(ctx))
        if not body["clean"]:
            dirty = [r["disk"] for r in body["rows"] if r["residual_entries"]]
            _fail(EXIT_RUNTIME, f"residual entries remain on: {', '.join(dirty)}")
        click.echo("teardown clean")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8750, show_default=True)
def serve(host, port):
    """Run the deployment service the other subcommands talk to."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
