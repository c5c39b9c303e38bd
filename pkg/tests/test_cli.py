import csv
import os

import pytest

from netselect import cli
from netselect.environment import TracePair, write_trace_csv

SMALL = """\
name: small
horizon_slots: 40
networks:
  - {id: 1, bandwidth_mbps: 4}
  - {id: 2, bandwidth_mbps: 7}
  - {id: 3, bandwidth_mbps: 22}
device_groups:
  - {name: all, count: 6, policy: smart_exp3}
"""


def test_ne_output(capsys):
    assert cli.main(["ne", "4,7,22", "20"]) == 0
    assert capsys.readouterr().out.split() == ["(2,4,14)"]
    assert cli.main(["ne", "11,11,11", "20"]) == 0
    assert sorted(capsys.readouterr().out.split()) == ["(6,7,7)", "(7,6,7)", "(7,7,6)"]
    assert cli.main(["ne", "5", "3"]) == 0
    assert capsys.readouterr().out.split() == ["(3)"]


def test_ne_bad_input(capsys):
    assert cli.main(["ne", "4,x", "3"]) == 2
    assert cli.main(["ne", "4,0", "3"]) == 2


def test_bounds_output(capsys):
    assert cli.main(["bounds", "--k", "3", "--beta", "0.1", "--td", "1", "--T", "1200"]) == 0
    out = capsys.readouterr().out
    assert "switch_bound 669.584178" in out
    assert cli.main(["bounds", "--k", "3", "--beta", "0.1", "--td", "1", "--T", "1200", "--gamma", "0.5",
                     "--l", "40", "--gmax", "1200", "--mu-d", "2", "--mu-g", "0.8"]) == 0
    assert "regret_bound 19516.690242" in capsys.readouterr().out
    assert cli.main(["bounds", "--k", "3", "--beta", "0"]) == 2


def test_bounds_check(tmp_path, capsys):
    p = tmp_path / "small.scenario"
    p.write_text(SMALL.replace("smart_exp3", "smart_exp3_no_reset"))
    assert cli.main(["bounds", "--k", "3", "--beta", "0.1", "--check", str(p), "--seeds", "2"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 2


def test_missing_scenario(tmp_path, capsys):
    missing = tmp_path / "absent.scenario"
    assert cli.main(["run", str(missing), "--out", str(tmp_path)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_bad_scenario_line(tmp_path, capsys):
    p = tmp_path / "bad.scenario"
    p.write_text(SMALL.replace("count: 6", "count: -6"))
    assert cli.main(["run", str(p), "--out", str(tmp_path)]) == 2
    assert "line 8" in capsys.readouterr().err


def test_usage_error():
    with pytest.raises(SystemExit) as e:
        cli.main(["run"])
    assert e.value.code == 2


def _tree(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


def test_run_outputs_deterministic(tmp_path, capsys):
    p = tmp_path / "small.scenario"
    p.write_text(SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", str(p), "--out", str(a), "--seeds", "3"]) == 0
    assert cli.main(["run", str(p), "--out", str(b), "--seeds", "3", "--par", "2"]) == 0
    ta, tb = _tree(a), _tree(b)
    assert ta == tb
    assert {"small/summary.csv", "small/distance_to_ne.gp", "small/smart_exp3/run_0.csv",
            "small/smart_exp3/distance_to_ne.dat"} <= set(ta)
    rows = list(csv.DictReader(open(a / "small" / "summary.csv")))
    assert [r["seed"] for r in rows] == ["0", "1", "2"]
    assert set(cli.SUMMARY_FIELDS) == set(rows[0])


def test_run_policy_comparison(tmp_path, capsys):
    p = tmp_path / "small.scenario"
    p.write_text(SMALL)
    assert cli.main(["run", str(p), "--out", str(tmp_path), "--seeds", "2",
                     "--policy", "exp3", "--policy", "greedy"]) == 0
    out = capsys.readouterr().out
    assert "small exp3:" in out and "small greedy:" in out and "median switches" in out


def test_env_default_out(tmp_path, monkeypatch, capsys):
    p = tmp_path / "small.scenario"
    p.write_text(SMALL)
    monkeypatch.setenv("NETSELECT_OUT", str(tmp_path / "envout"))
    assert cli.main(["run", str(p), "--seeds", "1"]) == 0
    assert (tmp_path / "envout" / "small" / "summary.csv").exists()


def test_trace_command(tmp_path, capsys):
    t = tmp_path / "alt.csv"
    write_trace_csv(TracePair([10.0] * 10 + [2.0] * 10, [2.0] * 10 + [10.0] * 10), t)
    assert cli.main(["trace", str(t), "--policy", "greedy", "--seeds", "2", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "cumulative download" in out and "switching cost" in out
    assert (tmp_path / "alt" / "greedy" / "summary.csv").exists()
    rows = cli.cmd_trace(str(t), "greedy", 1)
    assert rows[0]["download_mb"] > 0 and rows[0]["switching_cost_mb"] >= 0


def test_trace_errors(tmp_path, capsys):
    e = tmp_path / "empty.csv"
    e.write_text("slot,wifi_mbps,cellular_mbps\n")
    assert cli.main(["trace", str(e)]) == 2
    b = tmp_path / "bad.csv"
    b.write_text("slot,wifi_mbps,cellular_mbps\n0,1,2\n1,oops,2\n")
    assert cli.main(["trace", str(b)]) == 2
    assert "line 3" in capsys.readouterr().err
