"""Shared helpers for the multi-process benchmarks."""

from __future__ import annotations

import json
import sys
import time
import uuid

import numpy as np

from ..orchestra import ExperimentSpec, Registry, launch_local


def role_cmd(role: str, **flags) -> list[str]:
    cmd = [sys.executable, "-m", "minisurreal.bench.roles", role]
    for k, v in flags.items():
        cmd += [f"--{k.replace('_', '-')}", str(v)]
    return cmd


def unique_name(prefix: str) -> str:
    return f"{prefix}-{uuid.uuid4().hex[:8]}"


def last_json(lines: list[str]) -> dict:
    for line in reversed(lines):
        line = line.strip()
        if line.startswith("{"):
            return json.loads(line)
    raise RuntimeError("worker printed no result: " + " | ".join(lines[-5:]))


def wait_all(handle, names, timeout: float) -> dict[str, dict]:
    """Wait for ``names`` to exit and collect their JSON result lines."""
    deadline = time.monotonic() + timeout
    out = {}
    for name in names:
        st = handle.wait(name, timeout=max(0.1, deadline - time.monotonic()))
        if st.code != 0:
            raise RuntimeError(f"{name} ended with {st}: " + " | ".join(handle.logs(name, 5)))
        out[name] = last_json(handle.logs(name, 20))
    return out


def launch(spec: ExperimentSpec, registry: Registry | None = None):
    return launch_local(spec, registry=registry, extra_env={"PYTHONUNBUFFERED": "1"})


def fit_through_origin(x, y) -> tuple[float, float]:
    """Least-squares slope of y = b x and the centered coefficient of determination."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope = float(x @ y / (x @ x))
    ss_res = float(np.sum((y - slope * x) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return slope, r2
