import json
import os

import pytest

from splitchain.cli import main

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def test_params_paper_defaults(capsys):
    rc = main(["params", "--eps-c", "0.0003"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "[1700, 2300]" in out
    assert "good citizens >= 1137" in out


def test_params_infeasible_exit_code(capsys):
    rc = main(["params", "--alpha", "0.7", "--mean", "2000"])
    assert rc == 2


def test_params_search(capsys):
    rc = main(["params", "--alpha", "0.8", "--gamma", "0.8", "--search"])
    out = capsys.readouterr().out
    assert rc == 0
    mean = int(out.splitlines()[0].split(":")[1])
    assert abs(mean - 820) / 820 <= 0.15


def test_run_audit_report_cycle(tmp_path, capsys):
    out_dir = str(tmp_path / "run")
    rc = main(["run", "--config", os.path.join(CONFIGS, "honest.cfg"),
               "--blocks", "4", "--out-dir", out_dir])
    out = capsys.readouterr().out
    assert rc == 0
    summary = json.loads(out.strip().splitlines()[-1])
    assert summary["blocks"] == 4
    assert summary["empty_fraction"] == 0

    rc = main(["audit", os.path.join(out_dir, "chain.dump")])
    verdict = json.loads(capsys.readouterr().out.strip())
    assert rc == 0 and verdict["ok"]

    report_dir = str(tmp_path / "rep")
    rc = main(["report", os.path.join(out_dir, "metrics.jsonl"),
               "--label", "honest", "--out-dir", report_dir])
    capsys.readouterr()
    assert rc == 0
    assert os.path.exists(os.path.join(report_dir, "summary.tsv"))
    assert os.path.exists(os.path.join(report_dir, "timeline.png"))


def test_run_malformed_config_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[protocol]\nblocks = banana\n")
    rc = main(["run", "--config", str(bad), "--out-dir", str(tmp_path / "o")])
    err = capsys.readouterr().err
    assert rc == 2
    assert "blocks" in err


def test_run_missing_config_exit_2(tmp_path, capsys):
    rc = main(["run", "--config", str(tmp_path / "nope.cfg"),
               "--out-dir", str(tmp_path / "o")])
    assert rc == 2


def test_audit_tampered_exit_3(tmp_path, capsys):
    out_dir = str(tmp_path / "run")
    main(["run", "--config", os.path.join(CONFIGS, "honest.cfg"),
          "--blocks", "3", "--out-dir", out_dir])
    capsys.readouterr()
    dump = os.path.join(out_dir, "chain.dump")
    lines = open(dump).read().splitlines()
    obj = json.loads(lines[2])
    obj["txs"][0]["amount"] += 5
    lines[2] = json.dumps(obj, separators=(",", ":"))
    open(dump, "w").write("\n".join(lines) + "\n")
    rc = main(["audit", dump])
    verdict = json.loads(capsys.readouterr().out.strip())
    assert rc == 3
    assert not verdict["ok"]


def test_mc_experiments_pass(capsys):
    for name, trials in [("safe_sample", 200_000), ("read_spotcheck", 10_000),
                         ("write_spotcheck", 10_000),
                         ("honest_proposer_coverage", 10_000)]:
        rc = main(["mc", "--experiment", name, "--trials", str(trials),
                   "--seed", "1"])
        out = capsys.readouterr().out
        assert rc == 0, out
        assert "PASS" in out


def test_env_override(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SPLITCHAIN_BLOCKS", "2")
    monkeypatch.setenv("SPLITCHAIN_TX_RATE", "30")
    out_dir = str(tmp_path / "env")
    rc = main(["run", "--config", os.path.join(CONFIGS, "honest.cfg"),
               "--out-dir", out_dir])
    out = capsys.readouterr().out
    assert rc == 0
    assert json.loads(out.strip())["blocks"] == 2
