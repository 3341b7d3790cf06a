"""Experiment declaration, address assignment and launch backends."""

from .addressing import AddressTable, AllocationError, assign_addresses, env_prefix, service_address_from_env
from .local import (
    LocalExperiment,
    NameConflict,
    NotFound,
    ProcessStatus,
    Registry,
    kill_experiment,
    launch_local,
    list_experiments,
    list_processes,
    logs,
)
from .manifest import UnknownNodepoolError, colocation_key, emit_manifest
from .spec import (
    ExperimentParseError,
    ExperimentSpec,
    InvalidExperiment,
    ProcessGroup,
    ProcessSpec,
    ResourceClaim,
    Violation,
    check,
    dumps_experiment,
    load_experiment,
    loads_experiment,
    serialize_experiment,
    validate,
)
