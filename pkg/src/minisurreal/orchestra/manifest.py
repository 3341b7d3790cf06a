"""Manifest backend: deterministic per-process and per-service documents."""

from __future__ import annotations

from pathlib import Path

import yaml

from .addressing import MANIFEST, assign_addresses
from .spec import ExperimentSpec, check


class UnknownNodepoolError(LookupError):
    pass


def _number(x):
    x = float(x)
    return int(x) if x.is_integer() else x


def colocation_key(experiment: str, group: str) -> str:
    return f"{experiment}/{group}"


def _dump(doc: dict) -> str:
    return yaml.safe_dump(doc, sort_keys=True, default_flow_style=False)


def emit_manifest(spec: ExperimentSpec, cluster=None, out_dir=None) -> dict[str, str]:
    """Render the experiment as ``{relative filename: YAML text}``.

    Output depends only on ``spec`` and ``cluster`` (no timestamps, sorted
    keys).  When ``out_dir`` is given the files are also written there.
    """
    check(spec)
    pools = {p.name for p in getattr(cluster, "nodepools", ())}
    for proc in spec.processes:
        pool = proc.resources.nodepool
        if pool is not None and pool not in pools:
            cname = getattr(cluster, "name", None)
            raise UnknownNodepoolError(
                f"process {proc.name!r} claims nodepool {pool!r}, not in cluster {cname!r} (has: {sorted(pools)})")

    addresses = assign_addresses(spec, MANIFEST)
    env = dict(addresses.env(), SYMPH_EXPERIMENT_NAME=spec.name)
    files: dict[str, str] = {}
    for proc in spec.processes:
        r = proc.resources
        resources = {"cpu": _number(r.cpu), "gpu": int(r.gpu), "memory_mb": int(r.memory_mb)}
        if r.gpu_type is not None:
            resources["gpu_type"] = r.gpu_type
        doc = {
            "kind": "Process",
            "experiment": spec.name,
            "name": proc.name,
            "command": list(proc.command),
            "env": dict(env, SYMPH_PROCESS_NAME=proc.name),
            "resources": resources,
            "binds": sorted(proc.binds),
            "connects": sorted(proc.connects),
        }
        if r.nodepool is not None:
            doc["nodeSelector"] = {"nodepool": r.nodepool}
        group = proc.group or next((g.name for g in spec.groups if proc.name in g.members), None)
        if group is not None:
            doc["colocation"] = {"key": colocation_key(spec.name, group),
                                 "members": spec.group_members(group)}
        files[f"process-{proc.name}.yaml"] = _dump(doc)
    for service in spec.services():
        host, port = addresses[service]
        binder = next(p.name for p in spec.processes if service in p.binds)
        files[f"service-{service}.yaml"] = _dump({
            "kind": "Service",
            "experiment": spec.name,
            "name": service,
            "host": host,
            "port": port,
            "boundBy": binder,
        })
    files = dict(sorted(files.items()))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for fname, text in files.items():
            (out / fname).write_text(text)
    return files
