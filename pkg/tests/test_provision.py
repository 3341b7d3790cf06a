import itertools
import json

import pytest

from minisurreal.provision import (
    ClusterSpecError,
    MachineDescriptor,
    MappingError,
    generate_cluster_spec,
    load_cluster_spec,
    loads_cluster_spec,
    map_machine_type,
    vendor_table,
    vendors,
)

SIZES = [1, 2, 4, 8, 16, 32, 64, 96]


def test_gce_examples():
    assert map_machine_type(MachineDescriptor(4, "standard"), "gce_like").identifier == "n1-standard-4"
    assert map_machine_type(MachineDescriptor(64, "highmem"), "gce_like").identifier == "n1-highmem-64"


def test_round_up_with_note():
    mt = map_machine_type(MachineDescriptor(3, "standard"), "gce_like")
    assert mt.identifier == "n1-standard-4"
    assert mt.note and "3" in mt.note and "4" in mt.note
    assert map_machine_type(MachineDescriptor(4), "gce_like").note is None


def test_aws_examples():
    assert map_machine_type(MachineDescriptor(1), "aws_like").identifier == "t2.small"
    assert map_machine_type(MachineDescriptor(96), "aws_like").identifier == "m5d.24xlarge"


def test_unmappable_lists_options():
    with pytest.raises(MappingError, match="96"):
        map_machine_type(MachineDescriptor(128), "gce_like")
    with pytest.raises(MappingError, match="unknown vendor"):
        map_machine_type(MachineDescriptor(4), "azure")


@pytest.mark.parametrize("vendor", ["gce_like", "aws_like"])
def test_total_and_pure_over_grid(vendor):
    for cpu, mem in itertools.product(SIZES, ["standard", "highmem"]):
        d = MachineDescriptor(cpu, mem)
        a, b = map_machine_type(d, vendor), map_machine_type(d, vendor)
        assert a == b and a.identifier and a.note is None


def test_vendor_tables_are_data_files():
    assert set(vendors()) >= {"gce_like", "aws_like"}
    assert vendor_table("gce_like")["sizes"] == SIZES


def test_descriptor_invariants():
    with pytest.raises(MappingError):
        MachineDescriptor(4, gpu=1)
    with pytest.raises(MappingError):
        MachineDescriptor(4, gpu_type="v100")
    with pytest.raises(MappingError):
        MachineDescriptor(4, gpu=1, gpu_type="a100")
    with pytest.raises(MappingError):
        MachineDescriptor(0)
    with pytest.raises(MappingError):
        MachineDescriptor(4, "lowmem")


def test_v100_pool(tmp_path):
    spec = generate_cluster_spec(
        "kuflexes", [("pool-0", MachineDescriptor(32, gpu=1, gpu_type="v100"), 0, 1)], "gce_like", out_dir=tmp_path)
    (pool,) = spec.nodepools
    assert pool.vendor_machine_type == "n1-standard-32"
    assert pool.accelerator == "v100x1"
    data = json.loads((tmp_path / "kuflexes.cluster").read_text())
    assert data["nodepools"][0]["accelerator"] == "v100x1"


def test_empty_cluster(tmp_path):
    spec = generate_cluster_spec("empty", [], out_dir=tmp_path)
    assert spec.nodepools == ()
    assert load_cluster_spec(tmp_path / "empty.cluster") == spec


def test_roundtrip_and_determinism(tmp_path):
    pools = [
        ("cpu-pool", MachineDescriptor(3), 0, 10),
        ("v100-nodepool", MachineDescriptor(8, "highmem", 1, "v100"), 0, 2),
    ]
    a = generate_cluster_spec("c", pools, "aws_like", out_dir=tmp_path / "a")
    b = generate_cluster_spec("c", pools, "aws_like", out_dir=tmp_path / "b")
    assert (tmp_path / "a" / "c.cluster").read_bytes() == (tmp_path / "b" / "c.cluster").read_bytes()
    assert load_cluster_spec(tmp_path / "a" / "c.cluster") == a == b


def test_duplicate_pool_rejected():
    d = MachineDescriptor(4)
    with pytest.raises(ClusterSpecError):
        generate_cluster_spec("c", [("p", d, 0, 1), ("p", d, 0, 1)])


def test_load_detects_inconsistent_machine_type():
    spec = generate_cluster_spec("c", [("p", MachineDescriptor(4), 0, 1)])
    data = spec.to_dict()
    data["nodepools"][0]["vendor_machine_type"] = "n1-standard-8"
    with pytest.raises(ClusterSpecError, match="does not match"):
        loads_cluster_spec(json.dumps(data))


def test_load_malformed():
    with pytest.raises(ClusterSpecError):
        loads_cluster_spec("{not json")
    with pytest.raises(ClusterSpecError):
        loads_cluster_spec('{"name": "c"}')
