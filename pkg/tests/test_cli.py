import json
import sys

import pytest

from minisurreal.cli import main, parse_int_list, parse_size
from minisurreal.orchestra import ExperimentSpec, serialize_experiment
from minisurreal.provision import load_cluster_spec


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, [json.loads(line) for line in out.splitlines() if line.startswith("{")], err


def two_process_spec(path, name="cli-demo"):
    exp = ExperimentSpec(name)
    sleeper = [sys.executable, "-c", "import time; time.sleep(60)"]
    exp.new_process("replay", sleeper).bind("replay")
    exp.new_process("actor", sleeper).connect("replay")
    return serialize_experiment(exp, path)


def test_provision_writes_named_cluster_file(capsys, tmp_path):
    code, out, _ = run(capsys, "provision", "--name", "kuflexes", "--pool", "cpu=32,gpu=1,gpu_type=v100",
                       "--out", str(tmp_path))
    assert code == 0
    path = tmp_path / "kuflexes.cluster"
    assert out[0]["path"] == str(path)
    spec = load_cluster_spec(path)
    assert spec.name == "kuflexes" and len(spec.nodepools) == 1


def test_provision_edge_cases(capsys, tmp_path):
    code, _, err = run(capsys, "provision", "--name", "c", "--pool", "name=a,cpu=4", "--pool", "name=a,cpu=8",
                       "--out", str(tmp_path))
    assert code == 1 and err.startswith("error: cluster_spec_error:") and err.count("\n") == 1
    code, out, _ = run(capsys, "provision", "--name", "empty", "--out", str(tmp_path))
    assert code == 0 and out[0]["nodepools"] == {}
    code, _, err = run(capsys, "provision", "--name", "c", "--pool", "cpu=lots", "--out", str(tmp_path))
    assert code == 1 and "usage_error" in err


def test_launch_ps_logs_kill_cycle(capsys, surreal_home, tmp_path):
    expfile = two_process_spec(tmp_path / "exp.yaml")
    code, out, _ = run(capsys, "launch", str(expfile))
    assert code == 0 and out[0]["experiment"] == "cli-demo"
    try:
        code, out, _ = run(capsys, "ps", "cli-demo")
        assert code == 0
        assert {r["process"]: r["state"] for r in out} == {"replay": "running", "actor": "running"}
        code, out, _ = run(capsys, "list")
        assert out == [{"experiment": "cli-demo"}]
        code, _, err = run(capsys, "launch", str(expfile))
        assert code == 1 and err.startswith("error: name_conflict:")
        assert run(capsys, "logs", "cli-demo", "actor")[0] == 0
    finally:
        code, _, _ = run(capsys, "kill", "cli-demo")
    assert code == 0
    assert run(capsys, "list")[1] == []
    code, _, err = run(capsys, "ps", "cli-demo")
    assert code == 1 and err.startswith("error: not_found:")


def test_manifest_backend(capsys, tmp_path):
    expfile = two_process_spec(tmp_path / "exp.yaml")
    code, _, err = run(capsys, "launch", str(expfile), "--backend", "manifest")
    assert code == 1 and "--cluster" in err
    run(capsys, "provision", "--name", "k", "--out", str(tmp_path))
    out_dir = tmp_path / "manifests"
    code, out, _ = run(capsys, "launch", str(expfile), "--backend", "manifest", "--cluster",
                       str(tmp_path / "k.cluster"), "--out", str(out_dir))
    assert code == 0 and len(out[0]["files"]) >= 2
    first = {p.name: p.read_bytes() for p in out_dir.iterdir()}
    run(capsys, "launch", str(expfile), "--backend", "manifest", "--cluster", str(tmp_path / "k.cluster"),
        "--out", str(out_dir))
    assert {p.name: p.read_bytes() for p in out_dir.iterdir()} == first


def test_train_argument_errors(capsys, surreal_home):
    code, _, err = run(capsys, "train", "ppo", "--actors", "0")
    assert code == 1 and err.startswith("error: usage_error:")
    code, _, err = run(capsys, "train", "es", "--env", "mujoco")
    assert code == 1 and "pendulum" in err and "pointmass2d" in err
    assert run(capsys, "no-such-command")[0] == 1


@pytest.mark.timeout(240)
def test_train_es_streams_one_line_per_iteration(capsys, surreal_home, tmp_path):
    code, out, err = run(capsys, "train", "es", "--env", "pointmass2d", "--actors", "8", "--iters", "50",
                         "--run-dir", str(tmp_path / "run"))
    assert code == 0, err
    iters = [r for r in out if "iter" in r]
    assert [r["iter"] for r in iters] == list(range(1, 51))
    assert out[-1]["event"] == "done" and out[-1]["checkpoint"].endswith("iter-000050.ckpt")


def test_size_and_list_parsing():
    assert parse_size("1MB") == 1 << 20
    assert parse_size("512k") == 512 << 10
    assert parse_size("100") == 100
    assert parse_int_list("1,3,5") == [1, 3, 5]
    for bad in ("", "0,1", "a"):
        with pytest.raises(ValueError):
            parse_int_list(bad)
