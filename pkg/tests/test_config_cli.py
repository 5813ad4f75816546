import json
import os
import subprocess
import sys

import numpy as np
import pytest
import yaml

from rewardlangevin import outputs
from rewardlangevin import sampler as smp
from rewardlangevin.config import ConfigError, DEFAULTS, load_config

HERE = os.path.dirname(__file__)


def run_cli(args, cwd=None, env_extra=None):
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run([sys.executable, "-m", "rewardlangevin.cli"] + args,
                          capture_output=True, text=True, cwd=cwd, env=env)


def test_defaults_load_and_build():
    cfg = load_config()
    backbone, bank, params, task, scfg = cfg.build()
    assert backbone.prior.dim == 2
    assert scfg.steps == 35
    assert task.mode == "editing"


def test_unknown_key_rejected_with_path():
    with pytest.raises(ConfigError, match="sampler"):
        load_config(None, ["sampler.lamda_kl=2"])
    with pytest.raises(ConfigError, match="backbone.schedule"):
        load_config(None, ["backbone.schedule.tbar=0.9"])


def test_override_types_parse_as_yaml():
    cfg = load_config(None, ["sampler.steps=10", "rewards.standardize=false",
                             "task.z0=[0.1, 0.2]"])
    assert cfg.data["sampler"]["steps"] == 10
    assert cfg.data["rewards"]["standardize"] is False
    assert cfg.data["task"]["z0"] == [0.1, 0.2]
    with pytest.raises(ConfigError):
        load_config(None, ["sampler.steps"])       # no '=value'


def test_seed_argument_wins():
    cfg = load_config(None, ["sampler.seed=3"], seed=9)
    assert cfg.data["sampler"]["seed"] == 9


def test_effective_round_trip(tmp_path):
    cfg = load_config(None, ["sampler.lambda_kl=4.5"])
    path = tmp_path / "echo.yaml"
    path.write_text(cfg.effective_yaml())
    again = load_config(str(path))
    assert again.effective() == cfg.effective()


def test_config_file_and_validation_errors(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("task:\n  z0: [1.0, 2.0, 3.0]\n")
    with pytest.raises(ConfigError, match="z0"):
        load_config(str(p)).build()
    p.write_text("rewards:\n  enabled: [warp]\n")
    with pytest.raises(ConfigError, match="warp"):
        load_config(str(p)).build()
    p.write_text(":\n -")
    with pytest.raises(ConfigError, match="YAML"):
        load_config(str(p))


def test_z0_file_loading(tmp_path):
    z0 = np.array([0.25, -0.75])
    f = tmp_path / "z0.npy"
    np.save(f, z0)
    cfg = load_config(None, [f"task.z0_file={f}", "task.z0=null"])
    _, _, _, task, _ = cfg.build()
    np.testing.assert_array_equal(task.z0, z0)


def test_free_subtrees_replace_wholesale():
    cfg = load_config(None, ['task.intent={"add": 0.2, "remove": 0.8}'])
    _, _, _, task, _ = cfg.build()
    assert task.intent.remove == pytest.approx(0.8)
    with pytest.raises(ConfigError, match="intent"):
        load_config(None, ['task.intent={"destroy": 1.0}']).build()


def test_snapshot_file_round_trip(tmp_path):
    b = load_config(None, ["output.snapshot_stride=2",
                           "sampler.steps=8"]).build()
    _, traj = smp.run(*b)
    path = tmp_path / "snaps.bin"
    outputs.write_snapshots(traj, str(path))
    data, stride = outputs.read_snapshots(str(path))
    assert stride == 2
    np.testing.assert_array_equal(data, traj.snapshots)
    path.write_bytes(b"XXXXXXXX" + path.read_bytes()[8:])
    with pytest.raises(ValueError, match="magic"):
        outputs.read_snapshots(str(path))


def test_trajectory_csv_matches_golden():
    """Frozen file format: any change to column layout or float formatting
    must be deliberate (regenerate with tests/data/make_golden.py)."""
    b = load_config(None, ["sampler.steps=5"], seed=123).build()
    _, traj = smp.run(*b)
    text = outputs.trajectory_csv_text(traj)
    with open(os.path.join(HERE, "data", "golden_trajectory.csv")) as fh:
        assert text == fh.read()


def test_cli_run_writes_artifacts(tmp_path):
    out = run_cli(["run", "--out-dir", str(tmp_path), "--seed", "4",
                   "--set", "output.snapshot_stride=1",
                   "--set", "output.plots=true"])
    assert out.returncode == 0, out.stderr
    for name in ("trajectory.csv", "summary.json", "snapshots.bin",
                 "rewards.svg", "weights.svg", "stepsize.svg"):
        assert (tmp_path / name).exists(), name
    doc = json.loads((tmp_path / "summary.json").read_text())
    assert doc["seed"] == 4 and not doc["diverged"]
    assert doc["config"]["sampler"]["seed"] == 4


def test_cli_out_dir_env_var(tmp_path):
    out = run_cli(["run"], env_extra={"REWARDLANGEVIN_OUT_DIR": str(tmp_path)})
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "trajectory.csv").exists()


def test_cli_print_config_parses():
    out = run_cli(["print-config", "--set", "sampler.rho=3.5"])
    assert out.returncode == 0, out.stderr
    doc = yaml.safe_load(out.stdout)
    assert doc["sampler"]["rho"] == 3.5


def test_cli_config_error_exit_code():
    out = run_cli(["run", "--set", "sampler.bogus=1"])
    assert out.returncode == 2
    assert "bogus" in out.stderr


def test_cli_sweep(tmp_path):
    out = run_cli(["sweep", "--out-dir", str(tmp_path),
                   "--grid", "sampler.lambda_kl=0,1.5",
                   "--seeds", "2", "--workers", "2"])
    assert out.returncode == 0, out.stderr
    lines = (tmp_path / "sweep.csv").read_text().strip().splitlines()
    assert lines[0].startswith("sampler.lambda_kl,seed,")
    assert len(lines) == 5


def test_cli_sweep_empty_grid():
    out = run_cli(["sweep"])
    assert out.returncode == 2
    assert "no sweep points" in out.stderr


def test_cli_verify_subset():
    out = run_cli(["verify", "--only", "policy"])
    assert out.returncode == 0, out.stderr
    records = [json.loads(l) for l in out.stdout.splitlines()]
    assert records and all(r["id"].startswith("policy") for r in records)
    out = run_cli(["verify", "--only", "no.such.check"])
    assert out.returncode == 2
