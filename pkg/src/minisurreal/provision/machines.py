"""Descriptive machine parameters to vendor machine-type identifiers."""

from __future__ import annotations

import bisect
import functools
import json
from dataclasses import dataclass
from importlib import resources

MEMORY_CLASSES = ("standard", "highmem")
GPU_TYPES = ("k80", "p100", "v100")


class MappingError(ValueError):
    pass


@dataclass(frozen=True)
class MachineDescriptor:
    cpu: int
    memory_class: str = "standard"
    gpu: int = 0
    gpu_type: str | None = None

    def __post_init__(self):
        if not isinstance(self.cpu, int) or self.cpu < 1:
            raise MappingError(f"cpu must be an integer >= 1, got {self.cpu!r}")
        if self.memory_class not in MEMORY_CLASSES:
            raise MappingError(f"memory_class must be one of {MEMORY_CLASSES}, got {self.memory_class!r}")
        if not isinstance(self.gpu, int) or self.gpu < 0:
            raise MappingError(f"gpu must be an integer >= 0, got {self.gpu!r}")
        if (self.gpu > 0) != (self.gpu_type is not None):
            raise MappingError("gpu_type must be given exactly when gpu > 0")
        if self.gpu_type is not None and self.gpu_type not in GPU_TYPES:
            raise MappingError(f"gpu_type must be one of {GPU_TYPES}, got {self.gpu_type!r}")


@dataclass(frozen=True)
class MachineType:
    identifier: str
    cpu: int
    note: str | None = None


def vendors() -> list[str]:
    root = resources.files(__package__) / "data" / "vendors"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


@functools.lru_cache(maxsize=None)
def vendor_table(vendor: str) -> dict:
    path = resources.files(__package__) / "data" / "vendors" / f"{vendor}.json"
    if not path.is_file():
        raise MappingError(f"unknown vendor {vendor!r}; known: {vendors()}")
    return json.loads(path.read_text())


def map_machine_type(d: MachineDescriptor, vendor: str = "gce_like") -> MachineType:
    """Pick the vendor identifier for ``d``.

    CPU counts between supported sizes round up to the next size; the
    returned ``note`` records the rounding.
    """
    table = vendor_table(vendor)
    sizes = table["sizes"]
    i = bisect.bisect_left(sizes, d.cpu)
    if i == len(sizes):
        raise MappingError(
            f"no {vendor} machine with {d.cpu} CPUs; nearest supported: {sizes[-2:]}")
    size = sizes[i]
    note = None if size == d.cpu else f"cpu {d.cpu} rounded up to {size}"
    if d.gpu_type is not None and d.gpu_type not in table.get("gpu_types", ()):
        raise MappingError(f"{vendor} has no {d.gpu_type} GPUs; options: {table.get('gpu_types', [])}")
    if "families" in table:
        fmt = table["families"].get(d.memory_class)
        if fmt is None:
            raise MappingError(f"{vendor} has no {d.memory_class} family; options: {sorted(table['families'])}")
        return MachineType(fmt.format(cpu=size), size, note)
    row = table["table"].get(d.memory_class, {})
    ident = row.get(str(size))
    if ident is None:
        raise MappingError(f"{vendor} has no {d.memory_class} machine with {size} CPUs; options: {sorted(map(int, row))}")
    return MachineType(ident, size, note)
