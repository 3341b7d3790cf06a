"""Hardware descriptors, vendor machine types and cluster spec files."""

from .cluster import (
    ClusterSpec,
    ClusterSpecError,
    Nodepool,
    generate_cluster_spec,
    load_cluster_spec,
    loads_cluster_spec,
    write_cluster_spec,
)
from .machines import MachineDescriptor, MachineType, MappingError, map_machine_type, vendor_table, vendors
