"""Total environment throughput as a function of actor process count."""

from __future__ import annotations

import time

from ..orchestra import ExperimentSpec, Registry
from .common import fit_through_origin, launch, role_cmd, unique_name, wait_all


def measure_actors(n: int, duration: float = 3.0, env: str = "pointmass2d", warmup: float = 2.0,
                   registry: Registry | None = None) -> dict:
    """Launch ``n`` stepper processes that start together; return total steps/s."""
    exp = ExperimentSpec(unique_name(f"bench-scaling-{n}"))
    start = time.time() + warmup + 0.1 * n
    names = []
    for i in range(n):
        names.append(f"actor-{i}")
        exp.new_process(names[-1], role_cmd("stepper", env=env, seed=i, start=start, duration=duration))
    with launch(exp, registry) as handle:
        results = wait_all(handle, names, timeout=warmup + duration + 0.1 * n + 60)
    rates = [r["steps"] / r["elapsed"] for r in results.values()]
    return {"actors": n, "steps_per_sec": sum(rates), "per_actor": rates}


def run_scaling(actors=(1, 2, 4, 8), duration: float = 3.0, env: str = "pointmass2d",
                registry: Registry | None = None, on_point=None) -> dict:
    """Throughput points, a through-origin fit and the slope efficiency."""
    points = []
    for n in actors:
        points.append(measure_actors(n, duration, env, registry=registry))
        if on_point is not None:
            on_point(points[-1])
    xs = [p["actors"] for p in points]
    ys = [p["steps_per_sec"] for p in points]
    slope, r2 = fit_through_origin(xs, ys)
    single = next((p["steps_per_sec"] for p in points if p["actors"] == 1), ys[0] / xs[0])
    return {
        "points": points,
        "slope": slope,
        "r2": r2,
        "single_actor_rate": single,
        "efficiency": slope / single,
        "min_point_efficiency": min(y / (x * single) for x, y in zip(xs, ys)),
    }
