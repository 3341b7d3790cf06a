"""Experiment declaration, validation and the experiment file format.

An experiment file is YAML::

    name: cheetah                 # lowercase alphanumerics and dashes, <= 63 chars
    created_at: '2026-01-01T00:00:00+00:00'   # optional, ISO 8601
    processes:
      - name: replay
        command: [python, replay.py]          # or a single shell-style string
        binds: [replay]                       # optional
        connects: []                          # optional
        resources:                            # optional, all keys optional
          cpu: 1.0
          memory_mb: 512
          gpu: 0
          gpu_type: null
          nodepool: null
        group: null                           # optional
    groups:                                   # optional
      - name: actors
        members: [actor-0, actor-1]
"""

from __future__ import annotations

import datetime as _dt
import re
import shlex
from dataclasses import dataclass, field
from pathlib import Path

import yaml

_IDENT = re.compile(r"^[a-z0-9]([a-z0-9-]*[a-z0-9])?$")
MAX_IDENT = 63


def is_identifier(name) -> bool:
    return isinstance(name, str) and len(name) <= MAX_IDENT and bool(_IDENT.match(name))


class ExperimentParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class InvalidExperiment(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(map(str, self.violations)))


@dataclass
class ResourceClaim:
    cpu: float = 1.0
    memory_mb: int = 0
    gpu: int = 0
    gpu_type: str | None = None
    nodepool: str | None = None


@dataclass
class ProcessSpec:
    name: str
    command: list[str]
    binds: list[str] = field(default_factory=list)
    connects: list[str] = field(default_factory=list)
    resources: ResourceClaim = field(default_factory=ResourceClaim)
    group: str | None = None

    def __post_init__(self):
        if isinstance(self.command, str):
            self.command = shlex.split(self.command)
        else:
            self.command = list(self.command)

    def bind(self, *services: str) -> "ProcessSpec":
        self.binds.extend(services)
        return self

    def connect(self, *services: str) -> "ProcessSpec":
        self.connects.extend(services)
        return self


@dataclass
class ProcessGroup:
    name: str
    members: list[str] = field(default_factory=list)


def _now() -> _dt.datetime:
    return _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0)


@dataclass
class ExperimentSpec:
    name: str
    processes: list[ProcessSpec] = field(default_factory=list)
    groups: list[ProcessGroup] = field(default_factory=list)
    created_at: _dt.datetime | None = field(default_factory=_now)

    def new_process(self, name: str, command, **kwargs) -> ProcessSpec:
        proc = ProcessSpec(name, command, **kwargs)
        self.processes.append(proc)
        return proc

    def new_group(self, name: str, members=()) -> ProcessGroup:
        group = ProcessGroup(name, [])
        self.groups.append(group)
        for m in members:
            proc = self.process(m)
            proc.group = name
            group.members.append(m)
        return group

    def process(self, name: str) -> ProcessSpec:
        for p in self.processes:
            if p.name == name:
                return p
        raise KeyError(name)

    def services(self) -> list[str]:
        return sorted({s for p in self.processes for s in p.binds})

    def group_members(self, group: str) -> list[str]:
        members = set()
        for g in self.groups:
            if g.name == group:
                members.update(g.members)
        members.update(p.name for p in self.processes if p.group == group)
        return sorted(members)


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    detail: str = ""

    def __str__(self):
        return f"{self.code}({self.subject})"


def validate(spec: ExperimentSpec) -> list[Violation]:
    """Return every broken declaration rule; an empty list means valid."""
    out: list[Violation] = []
    if not is_identifier(spec.name):
        out.append(Violation("invalid-name", str(spec.name), "experiment name"))

    seen: set[str] = set()
    binders: dict[str, list[str]] = {}
    group_names = [g.name for g in spec.groups]
    for g in sorted(set(n for n in group_names if group_names.count(n) > 1)):
        out.append(Violation("duplicate-group", g))
    for g in spec.groups:
        if not is_identifier(g.name):
            out.append(Violation("invalid-name", str(g.name), "group name"))

    for p in spec.processes:
        if not is_identifier(p.name):
            out.append(Violation("invalid-name", str(p.name), "process name"))
        if p.name in seen:
            out.append(Violation("duplicate-process", p.name))
        seen.add(p.name)
        if not p.command:
            out.append(Violation("empty-command", p.name))
        for svc in sorted(set(s for s in p.binds if p.binds.count(s) > 1)):
            out.append(Violation("double-bind", f"{p.name}:{svc}", f"{p.name} binds {svc} more than once"))
        for svc in dict.fromkeys(p.binds):
            binders.setdefault(svc, []).append(p.name)
        for svc in p.binds + p.connects:
            if not is_identifier(svc):
                out.append(Violation("invalid-name", str(svc), f"service name in {p.name}"))
        r = p.resources
        if r.cpu < 0 or r.memory_mb < 0 or r.gpu < 0 or int(r.gpu) != r.gpu:
            out.append(Violation("invalid-resources", p.name, "cpu/memory must be >= 0, gpu a non-negative integer"))
        if r.gpu_type is not None and r.gpu <= 0:
            out.append(Violation("invalid-resources", p.name, "gpu_type set without gpu"))
        if p.group is not None and p.group not in group_names:
            out.append(Violation("unknown-group", f"{p.name}:{p.group}"))

    for svc, procs in sorted(binders.items()):
        if len(procs) > 1:
            out.append(Violation("duplicate-bind", svc, f"bound by {', '.join(procs)}"))
    connected = sorted({s for p in spec.processes for s in p.connects})
    for svc in connected:
        if svc not in binders:
            users = [p.name for p in spec.processes if svc in p.connects]
            out.append(Violation("unbound-service", svc, f"connected by {', '.join(users)}"))

    membership: dict[str, set[str]] = {}
    for g in spec.groups:
        for m in g.members:
            if m not in seen:
                out.append(Violation("unknown-member", f"{g.name}:{m}"))
            membership.setdefault(m, set()).add(g.name)
    for p in spec.processes:
        if p.group is not None:
            membership.setdefault(p.name, set()).add(p.group)
    for m, groups in sorted(membership.items()):
        if len(groups) > 1:
            out.append(Violation("multiple-groups", m, ", ".join(sorted(groups))))
    return out


def check(spec: ExperimentSpec) -> ExperimentSpec:
    violations = validate(spec)
    if violations:
        raise InvalidExperiment(violations)
    return spec


# -- file format -------------------------------------------------------------

def to_dict(spec: ExperimentSpec) -> dict:
    return {
        "name": spec.name,
        "created_at": spec.created_at.isoformat() if spec.created_at else None,
        "processes": [
            {
                "name": p.name,
                "command": list(p.command),
                "binds": list(p.binds),
                "connects": list(p.connects),
                "resources": {
                    "cpu": float(p.resources.cpu),
                    "memory_mb": p.resources.memory_mb,
                    "gpu": p.resources.gpu,
                    "gpu_type": p.resources.gpu_type,
                    "nodepool": p.resources.nodepool,
                },
                "group": p.group,
            }
            for p in spec.processes
        ],
        "groups": [{"name": g.name, "members": list(g.members)} for g in spec.groups],
    }


def dumps_experiment(spec: ExperimentSpec) -> str:
    return yaml.safe_dump(to_dict(spec), sort_keys=False, default_flow_style=None)


def serialize_experiment(spec: ExperimentSpec, path) -> Path:
    path = Path(path)
    path.write_text(dumps_experiment(spec))
    return path


def _line_of(node, *path) -> int | None:
    """1-based line of the YAML node reached by ``path`` (keys and indices)."""
    for step in path:
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == step:
                    node = v
                    break
            else:
                break
        elif isinstance(node, yaml.SequenceNode) and isinstance(step, int) and step < len(node.value):
            node = node.value[step]
        else:
            break
    return None if node is None else node.start_mark.line + 1


def _str_list(value, where: str, line, fieldname):
    if value is None:
        return []
    if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
        raise ExperimentParseError(f"{where}: {fieldname} must be a list of strings", line, fieldname)
    return list(value)


def loads_experiment(text: str) -> ExperimentSpec:
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ExperimentParseError(f"malformed YAML: {getattr(exc, 'problem', exc)}",
                                   None if mark is None else mark.line + 1) from None
    if not isinstance(data, dict):
        raise ExperimentParseError("experiment file must be a mapping", 1)
    if "name" not in data:
        raise ExperimentParseError("missing experiment name", 1, "name")
    procs_raw = data.get("processes") or []
    if not isinstance(procs_raw, list):
        raise ExperimentParseError("processes must be a list", _line_of(root, "processes"), "processes")

    processes = []
    for i, raw in enumerate(procs_raw):
        line = _line_of(root, "processes", i)
        if not isinstance(raw, dict):
            raise ExperimentParseError(f"process #{i} must be a mapping", line)
        pname = raw.get("name")
        if pname is None:
            raise ExperimentParseError(f"process #{i}: missing field 'name'", line, "name")
        where = f"process {pname!r}"
        if "command" not in raw or raw["command"] in (None, "", []):
            raise ExperimentParseError(f"{where}: missing field 'command'", line, "command")
        command = raw["command"]
        if not isinstance(command, (str, list)):
            raise ExperimentParseError(f"{where}: command must be a string or list", _line_of(root, "processes", i, "command"), "command")
        res_raw = raw.get("resources") or {}
        if not isinstance(res_raw, dict):
            raise ExperimentParseError(f"{where}: resources must be a mapping", _line_of(root, "processes", i, "resources"), "resources")
        unknown = set(res_raw) - {"cpu", "memory_mb", "gpu", "gpu_type", "nodepool"}
        if unknown:
            raise ExperimentParseError(f"{where}: unknown resource field(s) {sorted(unknown)}",
                                       _line_of(root, "processes", i, "resources"), sorted(unknown)[0])
        try:
            resources = ResourceClaim(
                cpu=float(res_raw.get("cpu", 1.0)),
                memory_mb=int(res_raw.get("memory_mb", 0)),
                gpu=int(res_raw.get("gpu", 0)),
                gpu_type=res_raw.get("gpu_type"),
                nodepool=res_raw.get("nodepool"),
            )
        except (TypeError, ValueError) as exc:
            raise ExperimentParseError(f"{where}: bad resource value: {exc}",
                                       _line_of(root, "processes", i, "resources"), "resources") from None
        processes.append(ProcessSpec(
            name=pname,
            command=[str(c) for c in command] if isinstance(command, list) else command,
            binds=_str_list(raw.get("binds"), where, _line_of(root, "processes", i, "binds"), "binds"),
            connects=_str_list(raw.get("connects"), where, _line_of(root, "processes", i, "connects"), "connects"),
            resources=resources,
            group=raw.get("group"),
        ))

    groups = []
    for j, raw in enumerate(data.get("groups") or []):
        line = _line_of(root, "groups", j)
        if not isinstance(raw, dict) or "name" not in raw:
            raise ExperimentParseError(f"group #{j}: missing field 'name'", line, "name")
        groups.append(ProcessGroup(raw["name"], _str_list(raw.get("members"), f"group {raw['name']!r}", line, "members")))

    created = data.get("created_at")
    if isinstance(created, str):
        try:
            created = _dt.datetime.fromisoformat(created)
        except ValueError:
            raise ExperimentParseError(f"bad created_at {created!r}", _line_of(root, "created_at"), "created_at") from None
    elif created is not None and not isinstance(created, _dt.datetime):
        raise ExperimentParseError("created_at must be an ISO 8601 string", _line_of(root, "created_at"), "created_at")
    return ExperimentSpec(name=data["name"], processes=processes, groups=groups, created_at=created)


def load_experiment(path) -> ExperimentSpec:
    return loads_experiment(Path(path).read_text())
