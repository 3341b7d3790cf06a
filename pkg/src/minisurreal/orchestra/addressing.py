"""Service address assignment and environment rendering."""

from __future__ import annotations

import socket
from dataclasses import dataclass, field

from .spec import ExperimentSpec, check

BASE_PORT = 7000
LOCAL_HOST = "127.0.0.1"
LOCAL = "local"
MANIFEST = "manifest"


class AllocationError(RuntimeError):
    pass


def env_prefix(service: str) -> str:
    return "SYMPH_" + service.upper().replace("-", "_")


def port_is_free(port: int, host: str = LOCAL_HOST) -> bool:
    s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        s.bind((host, port))
    except OSError:
        return False
    finally:
        s.close()
    return True


@dataclass
class AddressTable:
    entries: dict[str, tuple[str, int]] = field(default_factory=dict)

    def __getitem__(self, service: str) -> tuple[str, int]:
        return self.entries[service]

    def __len__(self):
        return len(self.entries)

    def address(self, service: str) -> str:
        host, port = self.entries[service]
        return f"{host}:{port}"

    def env(self) -> dict[str, str]:
        out = {}
        for service in sorted(self.entries):
            host, port = self.entries[service]
            prefix = env_prefix(service)
            out[f"{prefix}_HOST"] = host
            out[f"{prefix}_PORT"] = str(port)
        return out


def assign_addresses(spec: ExperimentSpec, backend: str = LOCAL, *, is_free=port_is_free,
                     base_port: int = BASE_PORT) -> AddressTable:
    """Give every bound service a host and port.

    Ports are handed out from ``base_port`` upward in lexicographic service
    order.  The local backend skips ports for which ``is_free`` is false;
    the manifest backend uses the bare sequence with the service name as
    host.
    """
    check(spec)
    if backend not in (LOCAL, MANIFEST):
        raise ValueError(f"unknown backend {backend!r}")
    table = AddressTable()
    port = base_port
    for service in spec.services():
        if backend == LOCAL:
            while port <= 65535 and not is_free(port):
                port += 1
        if port > 65535:
            raise AllocationError(f"no free port left for service {service!r}")
        table.entries[service] = (LOCAL_HOST if backend == LOCAL else service, port)
        port += 1
    return table


def service_address_from_env(service: str, environ) -> str:
    """Read a service's ``host:port`` back out of an injected environment."""
    prefix = env_prefix(service)
    try:
        return f"{environ[prefix + '_HOST']}:{environ[prefix + '_PORT']}"
    except KeyError:
        raise KeyError(f"{prefix}_HOST/{prefix}_PORT not set; is {service!r} bound in this experiment?") from None
