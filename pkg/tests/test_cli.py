from __future__ import annotations

import json
import subprocess
import sys

import pytest

from reinforced_walks.cli import DEFAULT_CONFIG, EXIT_BUDGET, EXIT_CONFIG, EXIT_FAIL, EXIT_OK, load_config, main

SMALL = """
seed = 7
replications = 20

[model]
n_walkers = 3
rho = 0.8
alpha = 0.4
q = 0.3

[model.schedule]
kind = "power"
c = 1.0
gamma = 0.75
offset = 2

[model.initial]
kind = "beta"
a = 1.0

[grid]
kind = "geometric"
base = 2
ratio = 3
count = 6
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(SMALL)
    return path


def test_print_config_round_trips(tmp_path, capsysbinary):
    assert main(["--print-config"]) == EXIT_OK
    path = tmp_path / "defaults.toml"
    path.write_bytes(capsysbinary.readouterr().out)
    assert load_config(path) == DEFAULT_CONFIG


def test_simulate_manifest_round_trip(tmp_path, small_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(small_cfg), "--out", str(a), "--threads", "1"]) == EXIT_OK
    assert main(["simulate", "--config", str(a / "manifest.json"), "--out", str(b), "--threads", "3"]) == EXIT_OK
    for name in ("snapshots.csv", "moments.csv", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    data = json.loads((a / "manifest.json").read_text())
    assert data["master_seed"] == 7 and data["replications"] == 20


def test_simulate_json_format(tmp_path, small_cfg):
    assert main(["simulate", "--config", str(small_cfg), "--out", str(tmp_path), "--format", "json"]) == EXIT_OK
    data = json.loads((tmp_path / "snapshots.json").read_text())
    assert len(data["snapshots"]) == 20 and len(data["moments"]) == len(data["steps"])


def test_zero_replications_is_config_error(tmp_path, small_cfg, capsys):
    assert main(["simulate", "--config", str(small_cfg), "--reps", "0", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "replications" in capsys.readouterr().err


@pytest.mark.parametrize(
    "text,needle",
    [
        ("bogus = 1\n", "unknown top-level"),
        ("[model]\nrho = 1.5\n", "rho"),
        ("[model.schedule]\nkind = \"power\"\nc = 1.0\ngamma = 0.75\noffset = 1\n", "offset"),
        ("seed = -3\n", "seed"),
        ("[grid]\nkind = \"spiral\"\n", "spiral"),
        ("not toml ===", "cannot parse"),
    ],
)
def test_invalid_config_messages(tmp_path, capsys, text, needle):
    path = tmp_path / "bad.toml"
    path.write_text(text)
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert needle in capsys.readouterr().err


def test_unknown_theorem(tmp_path, small_cfg, capsys):
    assert main(["verify", "--config", str(small_cfg), "--theorem", "riemann", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "unknown theorem" in capsys.readouterr().err


def test_inadmissible_theorem_is_config_error(tmp_path, small_cfg, capsys):
    # rho = 0.8 does not satisfy the rho = 1 hypothesis of the Z fluctuation theorem
    assert main(["verify", "--config", str(small_cfg), "--theorem", "fclt-z", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "rho = 1" in capsys.readouterr().err


def test_budget_exit_code(tmp_path):
    path = tmp_path / "big.toml"
    path.write_text('replications = 40000000\n[grid]\nkind = "steps"\nsteps = [0, 1, 2, 3]\n')
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path)]) == EXIT_BUDGET


def test_failing_check_exit_code(tmp_path):
    # a synchronization threshold no finite run can meet
    path = tmp_path / "sync.toml"
    path.write_text('replications = 50\n[verify]\nsync_threshold = 1e-300\n[grid]\nkind = "steps"\nsteps = [2, 10, 1000]\n')
    assert main(["verify", "--config", str(path), "--theorem", "sync", "--out", str(tmp_path)]) == EXIT_FAIL
    report = json.loads((tmp_path / "report-sync.json").read_text())
    assert report["passed"] is False


def test_sync_rate_passes(tmp_path):
    path = tmp_path / "rate.toml"
    path.write_text("seed = 3\nreplications = 1000\n[model]\nn_walkers = 8\n")
    assert main(["verify", "--config", str(path), "--theorem", "sync-rate", "--out", str(tmp_path)]) == EXIT_OK
    assert json.loads((tmp_path / "report-sync-rate.json").read_text())["passed"] is True


def test_urn_command(tmp_path):
    spec = tmp_path / "polya.toml"
    spec.write_text("[urn]\nbase_matrix = [[1, 0], [0, 1]]\ninitial_total = 2\n")
    assert main(["urn", "--spec", str(spec), "--horizon", "3", "--out", str(tmp_path)]) == EXIT_OK
    rows = (tmp_path / "urn_schedule.csv").read_text().splitlines()
    assert rows[0] == "n,r_n,rho,q"
    assert [float(r.split(",")[1]) for r in rows[1:]] == pytest.approx([1 / 3, 1 / 4, 1 / 5])
    bad = tmp_path / "bad.toml"
    bad.write_text("[urn]\nbase_matrix = [[2, 0], [0, 1]]\n")
    assert main(["urn", "--spec", str(bad), "--horizon", "3", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_graph_command(tmp_path):
    assert main(["graph", "--n-max", "500", "--seed", "2", "--out", str(tmp_path)]) == EXIT_OK
    rows = (tmp_path / "schedule.csv").read_text().splitlines()
    assert rows[0] == "n,max_degree,r_n" and rows[1].startswith("2,1,")
    assert float(rows[1].split(",")[2]) == pytest.approx(0.5 / 3)
    assert len((tmp_path / "degrees.csv").read_text().splitlines()) == 501


def test_oracle_command(tmp_path, small_cfg):
    assert main(["oracle", "--config", str(small_cfg), "--out", str(tmp_path)]) == EXIT_OK
    dist = (tmp_path / "distribution.csv").read_text().splitlines()
    assert dist[0] == "step,z1,z2,z3,probability"
    mom = (tmp_path / "moments_exact.csv").read_text().splitlines()
    assert mom[0].startswith("n,mean_zbar,var_zbar,mean_sq_sync") and len(mom) == 1 + 5


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "reinforced_walks.cli", "--print-config"], capture_output=True, text=True)
    assert out.returncode == 0 and "[model.schedule]" in out.stdout
