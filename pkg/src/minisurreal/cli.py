"""``minisurreal`` command line: provision, launch, manage, train and benchmark.

Reports go to stdout as one JSON object per line.  Failures print a single
``error: <kind>: <message>`` line to stderr and exit 1 for user errors or
2 for internal ones.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

USER_ERROR = 1
INTERNAL_ERROR = 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(record: dict):
    print(json.dumps(record, sort_keys=True), flush=True)


def _kind(exc: BaseException) -> str:
    return re.sub(r"(?<!^)(?=[A-Z])", "_", type(exc).__name__).lower()


def _user_errors() -> tuple:
    from .algo.train import TrainingAborted
    from .envs import EnvContractError, UnknownEnvError
    from .orchestra import ExperimentParseError, InvalidExperiment, NameConflict, NotFound, UnknownNodepoolError
    from .provision import ClusterSpecError, MappingError

    return (UsageError, UnknownEnvError, EnvContractError, ExperimentParseError, InvalidExperiment,
            NameConflict, NotFound, UnknownNodepoolError, ClusterSpecError, MappingError,
            FileNotFoundError, TrainingAborted, ValueError)


# ---------------------------------------------------------------- parsing helpers

_SIZE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*([kmg]?i?b?)?\s*$", re.IGNORECASE)
_UNITS = {"": 1, "b": 1, "k": 1 << 10, "m": 1 << 20, "g": 1 << 30}


def parse_size(text: str) -> int:
    """``"1MB"`` -> 1048576; plain integers are bytes."""
    m = _SIZE.match(text)
    if not m:
        raise UsageError(f"bad size {text!r}")
    unit = (m.group(2) or "").lower()[:1]
    return int(float(m.group(1)) * _UNITS[unit])


def parse_int_list(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise UsageError(f"expected positive integers, got {text!r}")
    return values


def parse_pool(text: str, index: int):
    """``name=a,cpu=32,memory=highmem,gpu=1,gpu_type=v100,min=0,max=4`` -> pool tuple."""
    from .provision import MachineDescriptor

    fields = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"pool field {item!r} is not key=value")
        fields[key.strip()] = value.strip()
    known = {"name", "cpu", "memory", "gpu", "gpu_type", "min", "max"}
    unknown = set(fields) - known
    if unknown:
        raise UsageError(f"unknown pool fields {sorted(unknown)}; known: {sorted(known)}")
    try:
        cpu, gpu = int(fields.get("cpu", 1)), int(fields.get("gpu", 0))
        lo, hi = int(fields.get("min", 0)), int(fields.get("max", 1))
    except ValueError:
        raise UsageError(f"pool {text!r}: cpu, gpu, min and max must be integers") from None
    descriptor = MachineDescriptor(cpu=cpu, memory_class=fields.get("memory", "standard"), gpu=gpu,
                                   gpu_type=fields.get("gpu_type"))
    return fields.get("name", f"pool-{index}"), descriptor, lo, hi


# ---------------------------------------------------------------- subcommands

def cmd_provision(args) -> int:
    from .provision import generate_cluster_spec, write_cluster_spec
    from .provision.cluster import CLUSTER_SUFFIX

    pools = [parse_pool(p, i) for i, p in enumerate(args.pool or [])]
    spec = generate_cluster_spec(args.name, pools, vendor=args.vendor)
    path = write_cluster_spec(spec, Path(args.out) / f"{args.name}{CLUSTER_SUFFIX}")
    _emit({"cluster": spec.name, "path": str(path),
           "nodepools": {p.name: p.vendor_machine_type for p in spec.nodepools}})
    return 0


def cmd_launch(args) -> int:
    from .orchestra import emit_manifest, launch_local, load_experiment
    from .provision import load_cluster_spec

    if args.backend == "manifest" and not args.cluster:
        raise UsageError("the manifest backend needs --cluster")
    spec = load_experiment(args.expfile)
    if args.backend == "local":
        handle = launch_local(spec)
        _emit({"experiment": spec.name, "backend": "local", "processes": handle.process_names(),
               "degraded": handle.degraded})
        return 0
    cluster = load_cluster_spec(args.cluster)
    out = Path(args.out or Path("manifests") / spec.name)
    files = emit_manifest(spec, cluster, out_dir=out)
    _emit({"experiment": spec.name, "backend": "manifest", "files": [str(out / f) for f in sorted(files)]})
    return 0


def cmd_list(args) -> int:
    from .orchestra import list_experiments

    for name in list_experiments():
        _emit({"experiment": name})
    return 0


def cmd_ps(args) -> int:
    from .orchestra import list_processes

    for proc, st in list_processes(args.experiment).items():
        _emit({"process": proc, "state": st.state, "code": st.code})
    return 0


def cmd_logs(args) -> int:
    from .orchestra import logs

    for line in logs(args.experiment, args.process, tail=args.tail):
        print(line)
    return 0


def cmd_kill(args) -> int:
    from .orchestra import kill_experiment

    kill_experiment(args.experiment)
    _emit({"experiment": args.experiment, "killed": True})
    return 0


def _train_config(args):
    from .algo import ESTrainConfig, PPOConfig

    common = dict(env=args.env, actors=args.actors, iters=args.iters, seed=args.seed,
                  checkpoint_every=args.checkpoint_every)
    if args.algo == "ppo":
        return PPOConfig(**common, kl_target=args.kl_target, lr=args.lr or 3e-4, gamma=args.gamma,
                         segment_length=args.segment_length, segments_per_iter=args.segments_per_iter,
                         epochs=args.epochs, staleness=args.staleness)
    return ESTrainConfig(**common, population=args.population, sigma=args.sigma, lr=args.lr or 0.01,
                         centered=not args.uncentered, mirrored=args.mirrored,
                         normalize_returns=not args.raw_returns, action_bins=args.action_bins)


def cmd_train(args) -> int:
    import uuid

    from .algo.train import run_experiment
    from .envs import make
    from .orchestra import Registry

    if args.actors < 1:
        raise UsageError(f"--actors must be >= 1, got {args.actors}")
    if args.iters < 1:
        raise UsageError(f"--iters must be >= 1, got {args.iters}")
    make(args.env)
    cfg = _train_config(args)
    if args.run_dir:
        run_dir = Path(args.run_dir)
    else:
        run_dir = Registry().root / "runs" / f"{args.algo}-{args.env}-{uuid.uuid4().hex[:8]}"
    kw = {"shards": args.shards} if args.algo == "ppo" else {}
    records = run_experiment(args.algo, cfg, run_dir=run_dir, on_record=_emit, **kw)
    ckpts = sorted(str(p) for p in (run_dir / "checkpoints").glob("*.ckpt"))
    _emit({"event": "done", "iterations": len(records), "run_dir": str(run_dir),
           "checkpoint": ckpts[-1] if ckpts else None})
    return 0


def cmd_bench(args) -> int:
    from . import bench

    if args.which == "proto":
        _emit({"bench": "proto", **bench.run_proto(parse_size(args.payload), iters=args.iters,
                                                    workers=args.workers, producers=args.producers)})
    elif args.which == "scaling":
        out = bench.run_scaling(parse_int_list(args.actors), duration=args.duration, env=args.env,
                                on_point=lambda p: _emit({"bench": "scaling", **p}))
        _emit({"bench": "scaling", **{k: v for k, v in out.items() if k != "points"}})
    else:
        out = bench.run_shard(parse_int_list(args.shards), producers=args.producers, duration=args.duration,
                              on_point=lambda p: _emit({"bench": "shard", **p}))
        rates = [out["rates"][s] for s in sorted(out["rates"])]
        _emit({"bench": "shard", "rates": {str(k): v for k, v in out["rates"].items()},
               "monotone": all(b >= a for a, b in zip(rates, rates[1:]))})
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="minisurreal", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pr = sub.add_parser("provision", help="write a cluster spec file")
    pr.add_argument("--name", required=True)
    pr.add_argument("--pool", action="append", help="name=..,cpu=..,memory=..,gpu=..,gpu_type=..,min=..,max=..")
    pr.add_argument("--vendor", default="gce_like")
    pr.add_argument("--out", default=".")
    pr.set_defaults(fn=cmd_provision)

    la = sub.add_parser("launch", help="launch an experiment file")
    la.add_argument("expfile")
    la.add_argument("--backend", choices=("local", "manifest"), default="local")
    la.add_argument("--cluster")
    la.add_argument("--out", help="manifest output directory")
    la.set_defaults(fn=cmd_launch)

    sub.add_parser("list", help="list registered experiments").set_defaults(fn=cmd_list)
    ps = sub.add_parser("ps", help="process states of an experiment")
    ps.add_argument("experiment")
    ps.set_defaults(fn=cmd_ps)
    lg = sub.add_parser("logs", help="tail a process log")
    lg.add_argument("experiment")
    lg.add_argument("process")
    lg.add_argument("--tail", type=int, default=10)
    lg.set_defaults(fn=cmd_logs)
    kl = sub.add_parser("kill", help="terminate an experiment")
    kl.add_argument("experiment")
    kl.set_defaults(fn=cmd_kill)

    tr = sub.add_parser("train", help="run PPO or ES on the local backend")
    tr.add_argument("algo", choices=("ppo", "es"))
    tr.add_argument("--env", default="pointmass2d")
    tr.add_argument("--actors", type=int, default=4)
    tr.add_argument("--iters", type=int)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--run-dir")
    tr.add_argument("--checkpoint-every", type=int, default=50)
    tr.add_argument("--lr", type=float)
    g = tr.add_argument_group("ppo")
    g.add_argument("--shards", type=int, default=1)
    g.add_argument("--kl-target", type=float, default=0.01)
    g.add_argument("--gamma", type=float, default=0.99)
    g.add_argument("--segment-length", type=int, default=256)
    g.add_argument("--segments-per-iter", type=int, default=4)
    g.add_argument("--epochs", type=int, default=3)
    g.add_argument("--staleness", type=int, default=2)
    g = tr.add_argument_group("es")
    g.add_argument("--population", type=int, default=64)
    g.add_argument("--sigma", type=float, default=0.02)
    g.add_argument("--mirrored", action="store_true")
    g.add_argument("--uncentered", action="store_true")
    g.add_argument("--raw-returns", action="store_true", help="skip return standardization")
    g.add_argument("--action-bins", type=int)
    tr.set_defaults(fn=cmd_train)

    be = sub.add_parser("bench", help="system benchmarks")
    bsub = be.add_subparsers(dest="which", required=True, parser_class=_Parser)
    b = bsub.add_parser("proto")
    b.add_argument("--payload", default="1MB")
    b.add_argument("--iters", type=int, default=40)
    b.add_argument("--workers", type=int, default=3)
    b.add_argument("--producers", type=int, default=2)
    b = bsub.add_parser("scaling")
    b.add_argument("--actors", default="1,2,4,8")
    b.add_argument("--duration", type=float, default=3.0)
    b.add_argument("--env", default="pointmass2d")
    b = bsub.add_parser("shard")
    b.add_argument("--shards", default="1,3,5")
    b.add_argument("--producers", type=int, default=8)
    b.add_argument("--duration", type=float, default=4.0)
    be.set_defaults(fn=cmd_bench)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "command", None) == "train" and args.iters is None:
            args.iters = 300 if args.algo == "ppo" else 500
        return args.fn(args)
    except KeyboardInterrupt:
        print("error: interrupted: stopped by signal", file=sys.stderr)
        return USER_ERROR
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except BaseException as exc:  # noqa: BLE001 - every failure becomes one line
        text = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        msg = " ".join(str(text).split()) or type(exc).__name__
        code = USER_ERROR if isinstance(exc, _user_errors()) else INTERNAL_ERROR
        print(f"error: {_kind(exc)}: {msg}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
