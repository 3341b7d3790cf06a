"""Declare a two-process experiment, launch it locally, inspect it and tear it down."""

import sys
import tempfile
import time

from minisurreal.orchestra import ExperimentSpec, Registry, emit_manifest, launch_local, list_processes
from minisurreal.provision import MachineDescriptor, generate_cluster_spec

serve = "import os, time; print('replay on', os.environ['SYMPH_REPLAY_PORT'], flush=True); time.sleep(30)"
connect = "import os; print('learner sees', os.environ['SYMPH_REPLAY_HOST'], os.environ['SYMPH_REPLAY_PORT'])"

exp = ExperimentSpec("demo")
exp.new_process("replay", [sys.executable, "-c", serve]).bind("replay")
exp.new_process("learner", [sys.executable, "-c", connect]).connect("replay")

# The same declaration renders to deterministic manifests for a cluster
cluster = generate_cluster_spec("kuflexes", [("cpu", MachineDescriptor(4), 0, 8)])
for name in sorted(emit_manifest(exp, cluster)):
    print("manifest file:", name)

registry = Registry(tempfile.mkdtemp())
with launch_local(exp, registry=registry) as handle:
    handle.wait("learner", timeout=20)
    time.sleep(0.5)
    for proc, status in list_processes("demo", registry).items():
        print(proc, status, handle.logs(proc, 1))
print("registered after exit:", registry.names())
