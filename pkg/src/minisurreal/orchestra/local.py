"""Local-process backend and the on-disk experiment registry.

Registry layout under ``$SURREAL_HOME`` (default ``~/.mini-surreal``)::

    experiments/<name>/experiment.yaml   declaration as launched
    experiments/<name>/state.json        present while the experiment is registered
    experiments/<name>/logs/<proc>.log   captured stdout+stderr
    experiments/<name>/exit/<proc>       exit code, written when the process ends

Every process runs under a tiny ``sh`` wrapper in its own session: the
wrapper records the exit code, and the session id lets a later CLI
invocation signal the whole process tree.
"""

from __future__ import annotations

import contextlib
import fcntl
import json
import os
import shutil
import signal
import subprocess
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path

from .addressing import LOCAL, assign_addresses
from .spec import ExperimentSpec, check, serialize_experiment

HOME_ENV = "SURREAL_HOME"
DEFAULT_HOME = "~/.mini-surreal"

_WRAPPER = 'f=$1; shift; "$@"; echo $? > "$f"'


class NameConflict(RuntimeError):
    pass


class NotFound(LookupError):
    pass


@dataclass(frozen=True)
class ProcessStatus:
    state: str  # running | exited | killed | failed
    code: int | None = None

    @property
    def running(self) -> bool:
        return self.state == "running"

    def __str__(self):
        return f"{self.state}({self.code})" if self.code is not None else self.state


RUNNING = ProcessStatus("running")


def registry_root(root=None) -> Path:
    return Path(root if root is not None else os.environ.get(HOME_ENV, DEFAULT_HOME)).expanduser()


class Registry:
    def __init__(self, root=None):
        self.root = registry_root(root)

    @property
    def experiments_dir(self) -> Path:
        return self.root / "experiments"

    def exp_dir(self, name: str) -> Path:
        return self.experiments_dir / name

    def state_path(self, name: str) -> Path:
        return self.exp_dir(name) / "state.json"

    @contextlib.contextmanager
    def lock(self):
        self.root.mkdir(parents=True, exist_ok=True)
        with open(self.root / ".lock", "a+") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                yield
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)

    def names(self) -> list[str]:
        if not self.experiments_dir.is_dir():
            return []
        return sorted(p.parent.name for p in self.experiments_dir.glob("*/state.json"))

    def read_state(self, name: str) -> dict:
        path = self.state_path(name)
        if not path.exists():
            raise NotFound(f"experiment {name!r} not found")
        return json.loads(path.read_text())

    def write_state(self, name: str, state: dict):
        path = self.state_path(name)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(state, indent=2, sort_keys=True))
        tmp.replace(path)


def _pid_running(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    try:
        with open(f"/proc/{pid}/stat") as fh:
            return fh.read().rsplit(")", 1)[1].split()[0] != "Z"
    except OSError:
        return True


def group_members(pgid: int) -> list[int]:
    """Live (non-zombie) pids whose process group is ``pgid``."""
    out = []
    for entry in os.scandir("/proc"):
        if not entry.name.isdigit():
            continue
        try:
            with open(f"/proc/{entry.name}/stat") as fh:
                fields = fh.read().rsplit(")", 1)[1].split()
        except OSError:
            continue
        if fields[0] != "Z" and int(fields[2]) == pgid:
            out.append(int(entry.name))
    return out


def _reap(pgid: int):
    with contextlib.suppress(ChildProcessError, OSError):
        while os.waitpid(-pgid, os.WNOHANG)[0]:
            pass


def _read_exit(path: Path) -> int | None:
    try:
        text = path.read_text().strip()
    except FileNotFoundError:
        return None
    return int(text) if text else None


def _status_from_record(rec: dict) -> ProcessStatus:
    if rec.get("failed"):
        return ProcessStatus("failed")
    code = _read_exit(Path(rec["exit_file"]))
    if code is not None:
        return ProcessStatus("exited", code)
    if _pid_running(rec["pid"]):
        return RUNNING
    # the wrapper may have written its code between the two checks
    code = _read_exit(Path(rec["exit_file"]))
    return ProcessStatus("exited", code) if code is not None else ProcessStatus("killed")


class LocalExperiment:
    """Handle on an experiment launched by this interpreter."""

    def __init__(self, registry: Registry, name: str, popens: dict[str, subprocess.Popen]):
        self.registry = registry
        self.name = name
        self._popens = popens

    @property
    def directory(self) -> Path:
        return self.registry.exp_dir(self.name)

    @property
    def degraded(self) -> bool:
        return bool(self._state().get("degraded"))

    def _state(self) -> dict:
        return self.registry.read_state(self.name)

    def process_names(self) -> list[str]:
        return list(self._state()["processes"])

    def status(self, process: str) -> ProcessStatus:
        popen = self._popens.get(process)
        if popen is not None:
            popen.poll()
        state = self._state()
        if process not in state["processes"]:
            raise NotFound(f"process {process!r} not in experiment {self.name!r}")
        return _status_from_record(state["processes"][process])

    def statuses(self) -> dict[str, ProcessStatus]:
        for p in self._popens.values():
            p.poll()
        return {name: _status_from_record(rec) for name, rec in self._state()["processes"].items()}

    def log_path(self, process: str) -> Path:
        return self.directory / "logs" / f"{process}.log"

    def logs(self, process: str, tail: int = 10) -> list[str]:
        return logs(self.name, process, tail, registry=self.registry)

    def wait(self, process: str, timeout: float | None = None) -> ProcessStatus:
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            st = self.status(process)
            if not st.running:
                return st
            if deadline is not None and time.monotonic() > deadline:
                raise TimeoutError(f"{process} still running")
            time.sleep(0.02)

    def kill(self, grace: float = 3.0):
        kill_experiment(self.name, registry=self.registry, grace=grace)
        for p in self._popens.values():
            with contextlib.suppress(Exception):
                p.wait(timeout=1.0)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if self.name in self.registry.names():
            self.kill()


def launch_local(spec: ExperimentSpec, *, registry: Registry | None = None, extra_env: dict | None = None,
                 cwd=None) -> LocalExperiment:
    """Start one OS process per declared process.

    Each child sees the caller's environment plus the rendered service
    addresses, ``SYMPH_EXPERIMENT_NAME`` and ``SYMPH_PROCESS_NAME``.
    """
    check(spec)
    registry = registry or Registry()
    with registry.lock():
        if registry.state_path(spec.name).exists():
            raise NameConflict(f"experiment {spec.name!r} already exists")
        exp_dir = registry.exp_dir(spec.name)
        for sub in ("logs", "exit"):
            d = exp_dir / sub
            if d.exists():
                shutil.rmtree(d)
            d.mkdir(parents=True)
        serialize_experiment(spec, exp_dir / "experiment.yaml")
        addresses = assign_addresses(spec, LOCAL)
        state = {
            "name": spec.name,
            "backend": LOCAL,
            "created_at": spec.created_at.isoformat() if spec.created_at else None,
            "addresses": {k: list(v) for k, v in addresses.entries.items()},
            "degraded": False,
            "processes": {},
        }
        # registered before spawning so a crash mid-launch is still killable
        registry.write_state(spec.name, state)

        base_env = dict(os.environ)
        base_env.update(addresses.env())
        base_env["SYMPH_EXPERIMENT_NAME"] = spec.name
        if extra_env:
            base_env.update({k: str(v) for k, v in extra_env.items()})

        popens: dict[str, subprocess.Popen] = {}
        for proc in spec.processes:
            log_path = exp_dir / "logs" / f"{proc.name}.log"
            exit_file = exp_dir / "exit" / proc.name
            rec = {"pid": None, "pgid": None, "log": str(log_path), "exit_file": str(exit_file), "failed": False}
            env = dict(base_env, SYMPH_PROCESS_NAME=proc.name)
            if shutil.which(proc.command[0], path=env.get("PATH")) is None:
                rec["failed"] = True
                rec["error"] = f"command not found: {proc.command[0]}"
                log_path.write_text(rec["error"] + "\n")
                state["degraded"] = True
            else:
                try:
                    with open(log_path, "wb") as log:
                        popen = subprocess.Popen(
                            ["/bin/sh", "-c", _WRAPPER, "sh", str(exit_file), *proc.command],
                            stdin=subprocess.DEVNULL, stdout=log, stderr=subprocess.STDOUT,
                            env=env, cwd=cwd, start_new_session=True,
                        )
                except OSError as exc:
                    rec["failed"] = True
                    rec["error"] = str(exc)
                    state["degraded"] = True
                else:
                    popens[proc.name] = popen
                    rec["pid"] = popen.pid
                    rec["pgid"] = popen.pid
            state["processes"][proc.name] = rec
            registry.write_state(spec.name, state)
    return LocalExperiment(registry, spec.name, popens)


def list_experiments(registry: Registry | None = None) -> list[str]:
    return (registry or Registry()).names()


def list_processes(name: str, registry: Registry | None = None) -> dict[str, ProcessStatus]:
    state = (registry or Registry()).read_state(name)
    return {p: _status_from_record(rec) for p, rec in state["processes"].items()}


def logs(name: str, process: str, tail: int = 10, registry: Registry | None = None) -> list[str]:
    state = (registry or Registry()).read_state(name)
    rec = state["processes"].get(process)
    if rec is None:
        raise NotFound(f"process {process!r} not in experiment {name!r}")
    try:
        with open(rec["log"], errors="replace") as fh:
            return [line.rstrip("\n") for line in deque(fh, maxlen=tail)] if tail > 0 else []
    except FileNotFoundError:
        return []


def kill_experiment(name: str, registry: Registry | None = None, grace: float = 3.0) -> None:
    """Terminate every process of ``name`` and drop it from the registry."""
    registry = registry or Registry()
    with registry.lock():
        state = registry.read_state(name)
        groups = [rec["pgid"] for rec in state["processes"].values() if rec.get("pgid")]
        for pgid in groups:
            with contextlib.suppress(ProcessLookupError, PermissionError):
                os.killpg(pgid, signal.SIGTERM)
        deadline = time.monotonic() + grace
        while True:
            for g in groups:
                _reap(g)
            if not any(group_members(g) for g in groups) or time.monotonic() > deadline:
                break
            time.sleep(0.02)
        for pgid in groups:
            with contextlib.suppress(ProcessLookupError, PermissionError):
                os.killpg(pgid, signal.SIGKILL)
            _reap(pgid)
        registry.state_path(name).unlink()
