import csv
import json

import numpy as np
import pytest

from netmor import cli
from netmor.net import load_network


def run(*argv):
    assert cli.main([str(a) for a in argv]) == 0


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Generated diamond files with a 30 minute scenario to keep the runs short."""
    d = tmp_path_factory.mktemp("cli")
    run("--out", d / "gen", "generate", "diamond")
    scen = json.loads((d / "gen" / "diamond.scenario.json").read_text())
    scen["T_hours"] = 0.5
    (d / "gen" / "short.scenario.json").write_text(json.dumps(scen))
    return d


def test_generate_is_deterministic(tmp_path):
    for name in ("diamond", "large38"):
        run("generate", name, "--out", tmp_path / "a")
        run("generate", name, "--out", tmp_path / "b")
    a = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert a == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in a:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_generated_benchmarks(tmp_path):
    run("generate", "diamond", "--out", tmp_path)
    run("generate", "large38", "--out", tmp_path)
    dia = load_network(tmp_path / "diamond.network.json")
    assert len(dia.edges) == 7 and dia.total_length == pytest.approx(191_000.0)
    assert sorted(e.length / 1000 for e in dia.edges) == sorted([40, 38, 18, 15, 28, 27, 25])
    assert [e.diameter for e in dia.edges] == [1.3, 1.0, 1.0, 1.0, 1.3, 1.3, 1.0]
    big = load_network(tmp_path / "large38.network.json")
    assert len(big.edges) == 38 and len(big.boundary_nodes) == 6
    assert abs(big.total_length / 1_008_000.0 - 1.0) <= 0.05
    scen = json.loads((tmp_path / "large38_A.scenario.json").read_text())
    assert scen["friction"]["lambda"] == 0.008


def test_train_simulate_evaluate(workspace):
    g = workspace / "gen"
    net, scen = g / "diamond.network.json", g / "short.scenario.json"
    run("train", net, scen, "--n", 4, "--nc", 16, "--snapshots", 40, "--out", workspace / "tr")
    run("train", net, scen, "--n", 4, "--nc", 12, "--baseline", "deim", "--snapshots", 40,
        "--out", workspace / "trd")
    run("train", net, scen, "--n", 4, "--baseline", "blockpod", "--snapshots", 40, "--out", workspace / "trb")
    header = json.loads((workspace / "trb" / "basis.json").read_text())
    assert header["tag"] == "incompatible-baseline"
    run("simulate", net, scen, "--out", workspace / "fom", "--dump-matrices")
    assert (workspace / "fom" / "matrices" / "Q.mtx").exists()
    run("simulate", net, scen, "--model", "crom", "--basis", workspace / "tr" / "basis.json",
        "--rule", workspace / "tr" / "rule.json", "--out", workspace / "crom")
    run("simulate", net, scen, "--model", "deim", "--basis", workspace / "trd" / "basis.json",
        "--deim", workspace / "trd" / "deim.npz", "--out", workspace / "deim")
    summary = json.loads((workspace / "crom" / "summary.json").read_text())
    assert summary["completed"] and summary["max_mass_residual"] <= 1e-8
    mons = np.genfromtxt(workspace / "crom" / "monitors.csv", delimiter=",", names=True)
    assert set(mons.dtype.names) >= {"time", "H", "boundary_power", "dissipation", "min_density"}
    run("evaluate", workspace / "fom" / "trajectory.csv", workspace / "crom" / "trajectory.csv",
        "--network", net, "--scenario", scen, "--out", workspace / "ev")
    rows = list(csv.DictReader(open(workspace / "ev" / "evaluation.csv")))
    assert 0 < float(rows[0]["E_T"]) < 5e-2
    # the reference against itself
    run("evaluate", workspace / "fom" / "trajectory.csv", workspace / "fom" / "trajectory.csv",
        "--network", net, "--scenario", scen, "--out", workspace / "ev0")
    assert float(next(csv.DictReader(open(workspace / "ev0" / "evaluation.csv")))["E_T"]) == 0.0


def test_train_from_trajectory_csv(workspace):
    g = workspace / "gen"
    fom_csv = workspace / "fom" / "trajectory.csv"
    if not fom_csv.exists():
        pytest.skip("needs the simulate run above")
    run("train", g / "diamond.network.json", g / "short.scenario.json", "--n", 3,
        "--trajectory", fom_csv, "--snapshots", 30, "--out", workspace / "trc")
    assert (workspace / "trc" / "basis.npz").exists()


def _read_sweep(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_sweep_schema_and_determinism(workspace):
    g = workspace / "gen"
    camp = {"network": "diamond.network.json", "train": "short.scenario.json",
            "evaluate": ["short.scenario.json"], "snapshots": 40, "n1": [3, 4], "n_c": [12, 16],
            "models": ["rom", "crom", "deim", "blockpod"]}
    (g / "small.campaign.json").write_text(json.dumps(camp))
    run("sweep", g / "small.campaign.json", "--out", workspace / "sw1")
    run("--threads", 2, "sweep", g / "small.campaign.json", "--out", workspace / "sw2")
    a = _read_sweep(workspace / "sw1" / "sweep_short.csv")
    b = _read_sweep(workspace / "sw2" / "sweep_short.csv")
    assert a[0] == cli.SWEEP_COLUMNS
    wall = a[0].index("wall_seconds")
    strip = lambda rows: [r[:wall] + r[wall + 1:] for r in rows]
    assert strip(a) == strip(b)
    models = {r[0] for r in a[1:]}
    assert models == {"proj-compatible", "ROM", "CROM", "DEIM", "proj-blockpod", "BlockPOD"}
    for r in a[1:]:
        if r[0] in ("ROM", "CROM"):
            assert r[5] == "False"


def test_bad_input_reports_error(tmp_path, capsys):
    (tmp_path / "broken.json").write_text("{")
    code = cli.main(["simulate", str(tmp_path / "broken.json"), str(tmp_path / "broken.json"),
                     "--out", str(tmp_path)])
    assert code == 2
    assert "error" in capsys.readouterr().err
