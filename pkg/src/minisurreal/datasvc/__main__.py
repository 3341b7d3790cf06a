"""Process entry points: ``python -m minisurreal.datasvc {shard,ps} ...``.

Bind addresses come from the ``SYMPH_*`` variables set by the launcher.
"""

import argparse
import logging
import os
import signal
import sys

from ..orchestra.addressing import service_address_from_env
from ..wireproto import Publisher, Puller, parse_address
from .buffer import FIFO, MODES, BufferShard
from .service import ParameterServer, ShardService, request_service


def _bind_puller(service: str) -> Puller:
    return Puller(*parse_address(service_address_from_env(service, os.environ)))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="python -m minisurreal.datasvc")
    sub = parser.add_subparsers(dest="role", required=True)
    shard = sub.add_parser("shard")
    shard.add_argument("--service", default="replay-0")
    shard.add_argument("--mode", choices=MODES, default=FIFO)
    shard.add_argument("--capacity", type=int, default=4096)
    ps = sub.add_parser("ps")
    ps.add_argument("--service", default="ps")
    ps.add_argument("--inbound", default="ps-in")
    ps.add_argument("--republish", type=float, default=0.5)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s", stream=sys.stdout)
    # default SIGTERM handling would skip socket cleanup; exit through SystemExit instead
    signal.signal(signal.SIGTERM, lambda *_: sys.exit(0))

    if args.role == "shard":
        svc = ShardService(BufferShard(args.mode, args.capacity), _bind_puller(args.service),
                           _bind_puller(request_service(args.service)))
        print(f"{args.service} serving ({args.mode}, capacity {args.capacity})", flush=True)
        try:
            svc.run()
        finally:
            svc.stop()
    else:
        host, port = parse_address(service_address_from_env(args.service, os.environ))
        server = ParameterServer(_bind_puller(args.inbound), Publisher(host, port), args.republish)
        print(f"{args.service} serving", flush=True)
        try:
            server.run()
        finally:
            server.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
