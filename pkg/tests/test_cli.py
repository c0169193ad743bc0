import json

import pytest

from csaloha.capture import load_table, save_table, synthetic_table
from csaloha.cli import main, parse_grid
from csaloha.output import read_table, strip_timestamp


def run(tmp_path, *argv):
    return main([*argv, "--out-dir", str(tmp_path), "--threads", "1"])


def test_parse_grid():
    assert parse_grid("0.5:1.0:0.25") == pytest.approx([0.5, 0.75, 1.0])
    assert parse_grid("1,2.5,4") == [1.0, 2.5, 4.0]


def test_estimate_capture_writes_valid_table(tmp_path, capsys):
    assert run(tmp_path, "estimate-capture", "--t-max", "3", "--t-sim", "5", "--seed", "4") == 0
    table = load_table(tmp_path / "capture_table.json")
    assert table.t_max == 3 and table.meta["T_sim"] == 5 and table.meta["seed"] == 4
    assert not list(tmp_path.glob(".*partial"))
    assert "wrote" in capsys.readouterr().out
    assert main(["validate-table", "--table", str(tmp_path / "capture_table.json")]) == 0


def test_estimate_capture_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(d, "estimate-capture", "--t-max", "3", "--t-sim", "6", "--seed", "2") == 0
    ta, tb = (strip_timestamp((d / "capture_table.json").read_text()) for d in (a, b))
    assert ta == tb


def test_analyze_collision(tmp_path):
    assert run(tmp_path, "analyze", "--table", "synthetic:collision", "--t-max", "64", "--beta", "3.2",
               "--ratio", "1.1") == 0
    header, rows = read_table(tmp_path / "analyze.tsv")
    assert header["command"] == "analyze"
    assert float(rows[0]["t"]) == pytest.approx(0.86397, abs=1e-4)
    _, trace = read_table(tmp_path / "analyze_trace.tsv")
    assert len(trace) == int(rows[0]["iterations"])


def test_analyze_from_file(tmp_path):
    path = tmp_path / "t.json"
    save_table(synthetic_table("perfect-mud", 40), path)
    assert run(tmp_path, "analyze", "--table", str(path), "--beta", "2", "--ratio", "1.5") == 0
    _, rows = read_table(tmp_path / "analyze.tsv")
    assert float(rows[0]["p_r"]) == pytest.approx(1 - 2.718281828459045 ** -3.0, abs=1e-9)


@pytest.mark.parametrize("cmd", [
    ["sweep", "--table", "synthetic:collision", "--t-max", "40", "--ratio-grid", "0.9,1.1", "--beta-grid", "1:4:0.5"],
    ["simulate", "--n-users", "200", "--ratio", "1.1", "--beta", "3", "--runs", "3", "--seed", "5"],
    ["analyze", "--table", "synthetic:singleton-prob:0.7", "--t-max", "40", "--beta", "2", "--ratio", "1"],
])
def test_data_outputs_byte_identical(tmp_path, cmd):
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        assert run(d, *cmd) == 0
        outs.append({p.name: strip_timestamp(p.read_text()) for p in sorted(d.iterdir())})
    assert outs[0] == outs[1] and outs[0]


def test_sweep_outputs(tmp_path):
    assert run(tmp_path, "sweep", "--table", "synthetic:collision", "--t-max", "40", "--ratio-grid", "0.9:1.1:0.1",
               "--beta-grid", "1:4:0.5") == 0
    _, summary = read_table(tmp_path / "sweep_summary.tsv")
    _, long = read_table(tmp_path / "sweep_long.tsv")
    assert len(summary) == 3 and len(long) == 3 * 7
    assert all(float(r["t_star"]) <= 1 for r in summary)


def test_simulate_example_graph(tmp_path):
    assert run(tmp_path, "simulate", "--graph", "example", "--oracle", "synthetic:collision") == 0
    _, rows = read_table(tmp_path / "simulate_runs.tsv")
    assert rows[0]["order"] == "1,2,0" and rows[0]["recovered"] == "3"
    _, summary = read_table(tmp_path / "simulate_summary.tsv")
    assert summary[0]["runs"] == "1"


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"table": "synthetic:collision", "t_max": 64, "beta": 1.0, "ratio": 1.1}))
    assert run(tmp_path, "analyze", "--config", str(cfg), "--beta", "3.2") == 0
    _, rows = read_table(tmp_path / "analyze.tsv")
    assert float(rows[0]["beta"]) == 3.2


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("CSALOHA_OUT_DIR", str(tmp_path))
    assert main(["analyze", "--table", "synthetic:collision", "--t-max", "30", "--threads", "1"]) == 0
    assert (tmp_path / "analyze.tsv").exists()


@pytest.mark.parametrize("cmd", [
    ["analyze"],
    ["analyze", "--table", "synthetic:nonsense"],
    ["simulate", "--beta", "0"],
    ["simulate", "--n-users", "10", "--beta", "20"],
    ["estimate-capture", "--t-max", "0"],
    ["estimate-capture", "--t-max", "200"],
    ["validate-table"],
])
def test_bad_input_exit_code(tmp_path, cmd, capsys):
    assert run(tmp_path, *cmd) == 2
    assert "error" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert run(tmp_path, "analyze", "--config", str(tmp_path / "nope.json")) == 2


def test_validate_table_rejects_bad_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": 1, "t_max": 2, "rows": [{"t_A": 1, "probs": [0.5, 0.6]}]}))
    assert main(["validate-table", "--table", str(bad)]) == 1
    assert "invalid" in capsys.readouterr().err


def test_analyze_rejects_malformed_table_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(tmp_path, "analyze", "--table", str(bad)) == 2


def test_simulate_phy_oracle(tmp_path):
    sc = tmp_path / "sc.json"
    sc.write_text(json.dumps({"snr_db": 10.0}))
    assert run(tmp_path, "simulate", "--oracle", f"phy:{sc}", "--ratio", "0.1", "--beta", "3", "--runs", "1") == 0
    _, rows = read_table(tmp_path / "simulate_runs.tsv")
    assert rows[0]["n_users"] == "128" and int(rows[0]["recovered"]) > 0
