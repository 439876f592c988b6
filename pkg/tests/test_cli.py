import json

import pytest

from pottsmeta.cli import main, parse_config, validate
from pottsmeta.meanfield import thresholds


def run_cli(capsys, *argv):
    code = main(list(argv))
    return code, json.loads(capsys.readouterr().out)


def test_thresholds(capsys):
    code, rep = run_cli(capsys, "thresholds", "--q", "3", "--d", "4")
    t = thresholds(3, 4)
    assert code == 0
    assert rep["beta_u"] == t.beta_u and rep["beta_c"] == t.beta_c and rep["beta_h"] == t.beta_h
    assert rep["manifest"]["command"] == "thresholds"


@pytest.mark.parametrize(
    "argv, fragment",
    [
        (["thresholds", "--q", "2"], "q must be ≥ 3"),
        (["simulate", "--n", "999", "--d", "3"], "d·n must be even"),
        (["simulate", "--eps", "0.1", "--monitor-eps", "0.05"], "monitor ε must exceed start ε"),
        (["simulate", "--phase", "ferro", "--beta", "1.0"], "ferro"),
    ],
)
def test_validation_errors(capsys, argv, fragment):
    code, rep = run_cli(capsys, *argv)
    assert code == 2 and rep["error"] == "validation"
    assert any(fragment in v for v in rep["violations"])


def test_validate_reports_all():
    cfg = parse_config(["simulate", "--q", "2", "--n", "999"])
    assert len(validate(cfg)) >= 2


def test_config_file_precedence(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# comment\nq = 4\nd = 5\nbeta = 1.1\n")
    cfg = parse_config(["fixed-points", "--config", str(cfg_file), "--beta", "1.7"])
    assert (cfg["q"], cfg["d"], cfg["beta"]) == (4, 5, 1.7)
    assert parse_config(["fixed-points"])["q"] == 3


def test_bad_config_file(tmp_path, capsys):
    f = tmp_path / "bad.cfg"
    f.write_text("q 3\n")
    code, rep = run_cli(capsys, "thresholds", "--config", str(f))
    assert code == 2 and rep["error"] == "config"


def test_outputs_identical_across_workers(tmp_path, capsys):
    outs = []
    for w in (1, 3):
        d = tmp_path / f"w{w}"
        argv = ["simulate", "--n", "200", "--beta", "0.5", "--eps", "0.05", "--monitor-eps", "0.3",
                "--sweeps", "20", "--trials", "3", "--seed", "11", "--trace-trial", "1",
                "--workers", str(w), "--out", str(d)]
        assert main(argv) == 0
        capsys.readouterr()
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    assert outs[0] == outs[1]
    assert set(outs[0]) == {"simulate.json", "trace.csv", "manifest.json"}
    header = outs[0]["trace.csv"].decode().splitlines()[0]
    assert header == "step,count_1,count_2,count_3,hamiltonian,member,escape"


def test_percolate_and_broadcast_csv(tmp_path, capsys):
    assert main(["percolate", "--n", "300", "--p", "0.8", "--trials", "2", "--out", str(tmp_path)]) == 0
    assert main(["broadcast", "--depth", "3", "--samples", "300", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    names = {p.name for p in tmp_path.iterdir()}
    assert {"percolate.json", "broadcast.json", "manifest.json"} <= names
    csvs = {p.name: p.read_text().splitlines()[0] for p in tmp_path.glob("*.csv")}
    assert "trial,c1,edges_c1,sum_sq_rest" in csvs.values()
    assert "depth,distance,stderr" in csvs.values()


def test_nishimori_and_identity(capsys):
    code, rep = run_cli(capsys, "nishimori", "--n", "2")
    assert code == 0 and rep["tv"] < 1e-12
    code, rep = run_cli(capsys, "identity-check", "--beta", "1.38")
    assert code == 0


def test_exact_partition(tmp_path, capsys):
    g = tmp_path / "k4.txt"
    from pottsmeta.rgraph import MultiGraph, write_graph

    write_graph(MultiGraph.from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]), g)
    code, rep = run_cli(capsys, "exact", "--graph", str(g), "--check", "partition")
    assert code == 0 and "log_z" in rep


def test_malformed_graph_file(tmp_path, capsys):
    f = tmp_path / "g.txt"
    f.write_text("4 3\n0 1 2\n")
    code, rep = run_cli(capsys, "exact", "--graph", str(f))
    assert code == 2 and "header" in rep["violations"][0]
