import os
import sys
import time

import pytest

from minisurreal.orchestra import (
    ExperimentSpec,
    NameConflict,
    NotFound,
    Registry,
    kill_experiment,
    launch_local,
    list_experiments,
    list_processes,
    logs,
)
from minisurreal.orchestra.local import group_members

PY = sys.executable


def sleeper(name="cheetah", n=2):
    exp = ExperimentSpec(name)
    for i in range(n):
        exp.new_process(f"actor-{i}", [PY, "-c", f"print('actor-{i} running', flush=True); import time; time.sleep(60)"])
    return exp


def wait_for(pred, timeout=10.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if pred():
            return True
        time.sleep(0.02)
    return False


def test_two_processes_two_logs(surreal_home):
    handle = launch_local(sleeper())
    try:
        assert all(s.running for s in handle.statuses().values())
        assert len(list((handle.directory / "logs").iterdir())) == 2
        assert "cheetah" in list_experiments()
        assert wait_for(lambda: "actor-0 running" in logs("cheetah", "actor-0"))
    finally:
        handle.kill(grace=1.0)


def test_exit_code_isolated(surreal_home):
    exp = sleeper("codes", 1)
    exp.new_process("quitter", [PY, "-c", "import sys; sys.exit(3)"])
    with launch_local(exp) as handle:
        status = handle.wait("quitter", timeout=10)
        assert str(status) == "exited(3)"
        assert handle.status("actor-0").running


def test_name_conflict(surreal_home):
    with launch_local(sleeper("dup", 1)):
        with pytest.raises(NameConflict):
            launch_local(sleeper("dup", 1))


def test_kill_leaves_no_orphans(surreal_home):
    exp = ExperimentSpec("forky")
    # each process spawns a grandchild that would outlive a naive kill
    script = "import subprocess, sys, time; subprocess.Popen([sys.executable, '-c', 'import time; time.sleep(60)']); time.sleep(60)"
    for i in range(3):
        exp.new_process(f"p{i}", [PY, "-c", script])
    handle = launch_local(exp)
    state = handle.registry.read_state("forky")
    pgids = [rec["pgid"] for rec in state["processes"].values()]
    assert wait_for(lambda: all(len(group_members(g)) >= 3 for g in pgids))
    handle.kill(grace=2.0)
    assert all(group_members(g) == [] for g in pgids)
    assert "forky" not in list_experiments()


def test_sigterm_ignoring_child_is_killed(surreal_home):
    exp = ExperimentSpec("stubborn")
    exp.new_process("p", [PY, "-c", "import signal, time; signal.signal(signal.SIGTERM, signal.SIG_IGN); print('x', flush=True); time.sleep(60)"])
    handle = launch_local(exp)
    assert wait_for(lambda: logs("stubborn", "p") == ["x"])
    pgid = handle.registry.read_state("stubborn")["processes"]["p"]["pgid"]
    t0 = time.monotonic()
    kill_experiment("stubborn", grace=0.5)
    assert time.monotonic() - t0 < 5
    assert group_members(pgid) == []


def test_registry_counts(surreal_home):
    names = [f"exp-{i}" for i in range(5)]
    handles = [launch_local(sleeper(n, 1)) for n in names]
    for n in names[:2]:
        kill_experiment(n, grace=1.0)
    assert sorted(list_experiments()) == names[2:]
    for h in handles[2:]:
        h.kill(grace=1.0)
    assert list_experiments() == []


def test_unknown_lookups(surreal_home):
    with pytest.raises(NotFound):
        list_processes("ghost")
    with pytest.raises(NotFound):
        kill_experiment("ghost")
    with launch_local(sleeper("known", 1)):
        with pytest.raises(NotFound):
            logs("known", "nobody")


def test_spawn_failure_marks_degraded(surreal_home):
    exp = sleeper("partial", 1)
    exp.new_process("broken", ["/nonexistent/binary"])
    with launch_local(exp) as handle:
        assert handle.degraded
        assert handle.status("broken").state == "failed"
        assert handle.status("actor-0").running


def test_children_see_addresses(surreal_home):
    exp = ExperimentSpec("env")
    code = "import os; print(os.environ['SYMPH_REPLAY_PORT'], os.environ['SYMPH_PROCESS_NAME'], os.environ['SYMPH_EXPERIMENT_NAME'])"
    exp.new_process("replay", [PY, "-c", "import time; time.sleep(60)"]).bind("replay")
    exp.new_process("learner", [PY, "-c", code]).connect("replay")
    with launch_local(exp) as handle:
        handle.wait("learner", timeout=10)
        port = handle.registry.read_state("env")["addresses"]["replay"][1]
        assert logs("env", "learner") == [f"{port} learner env"]


def test_registry_root_from_env(surreal_home):
    assert Registry().root == surreal_home
    assert os.environ["SURREAL_HOME"] == str(surreal_home)
