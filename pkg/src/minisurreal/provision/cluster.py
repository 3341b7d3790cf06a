"""Cluster specification files.

A cluster file is JSON with sorted keys::

    {
      "name": "kuflexes",
      "nodepools": [
        {
          "accelerator": "v100x1",
          "descriptor": {"cpu": 32, "gpu": 1, "gpu_type": "v100", "memory_class": "standard"},
          "max_nodes": 1,
          "min_nodes": 0,
          "name": "pool-0",
          "note": null,
          "vendor_machine_type": "n1-standard-32"
        }
      ],
      "vendor": "gce_like"
    }
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .machines import MachineDescriptor, MappingError, map_machine_type

CLUSTER_SUFFIX = ".cluster"


class ClusterSpecError(ValueError):
    pass


@dataclass(frozen=True)
class Nodepool:
    name: str
    descriptor: MachineDescriptor
    vendor_machine_type: str
    min_nodes: int = 0
    max_nodes: int = 1
    note: str | None = None

    @property
    def accelerator(self) -> str | None:
        d = self.descriptor
        return f"{d.gpu_type}x{d.gpu}" if d.gpu else None


@dataclass(frozen=True)
class ClusterSpec:
    name: str
    vendor: str
    nodepools: tuple[Nodepool, ...] = field(default_factory=tuple)

    def nodepool(self, name: str) -> Nodepool:
        for p in self.nodepools:
            if p.name == name:
                return p
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "vendor": self.vendor,
            "nodepools": [dict(asdict(p), accelerator=p.accelerator) for p in self.nodepools],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def generate_cluster_spec(name: str, pools, vendor: str = "gce_like", out_dir=None) -> ClusterSpec:
    """Build a cluster spec from ``(name, descriptor, min_nodes, max_nodes)`` tuples.

    Writes ``<out_dir>/<name>.cluster`` when ``out_dir`` is given.
    """
    seen = set()
    nodepools = []
    for pool_name, descriptor, min_nodes, max_nodes in pools:
        if pool_name in seen:
            raise ClusterSpecError(f"duplicate nodepool name {pool_name!r}")
        seen.add(pool_name)
        if not 0 <= min_nodes <= max_nodes:
            raise ClusterSpecError(f"nodepool {pool_name!r}: need 0 <= min_nodes <= max_nodes")
        mt = map_machine_type(descriptor, vendor)
        nodepools.append(Nodepool(pool_name, descriptor, mt.identifier, min_nodes, max_nodes, mt.note))
    spec = ClusterSpec(name, vendor, tuple(nodepools))
    if out_dir is not None:
        write_cluster_spec(spec, Path(out_dir) / f"{name}{CLUSTER_SUFFIX}")
    return spec


def write_cluster_spec(spec: ClusterSpec, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(spec.dumps())
    return path


def loads_cluster_spec(text: str) -> ClusterSpec:
    try:
        data = json.loads(text)
        pools = []
        for raw in data["nodepools"]:
            d = MachineDescriptor(**raw["descriptor"])
            pool = Nodepool(raw["name"], d, raw["vendor_machine_type"], int(raw["min_nodes"]),
                            int(raw["max_nodes"]), raw.get("note"))
            expected = map_machine_type(d, data["vendor"]).identifier
            if expected != pool.vendor_machine_type:
                raise ClusterSpecError(
                    f"nodepool {pool.name!r}: machine type {pool.vendor_machine_type!r} does not match "
                    f"descriptor (expected {expected!r})")
            pools.append(pool)
        names = [p.name for p in pools]
        if len(set(names)) != len(names):
            raise ClusterSpecError("duplicate nodepool names")
        return ClusterSpec(data["name"], data["vendor"], tuple(pools))
    except (KeyError, TypeError, json.JSONDecodeError, MappingError) as exc:
        if isinstance(exc, ClusterSpecError):
            raise
        raise ClusterSpecError(f"malformed cluster spec: {exc}") from None


def load_cluster_spec(path) -> ClusterSpec:
    return loads_cluster_spec(Path(path).read_text())
