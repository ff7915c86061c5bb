import json
import socket
import subprocess
import sys

import pytest

from feedtune.cli import main, parse_seeds


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class TestParsing:
    def test_seed_forms(self):
        assert parse_seeds("0-3") == [0, 1, 2, 3]
        assert parse_seeds("0,3,7") == [0, 3, 7]
        assert parse_seeds("1-2,5") == [1, 2, 5]

    def test_unknown_flag(self, capsys):
        assert main(["run", "--frobnicate"]) == 2

    def test_missing_subcommand(self, capsys):
        assert main([]) == 2


class TestRun:
    def test_usage_error(self, capsys):
        assert main(["run", "--scenario", "toy", "--method", "pps", "--budget", "-5"]) == 2
        assert "query budget" in capsys.readouterr().err

    def test_run_prints_summary(self, tmp_path, capsys):
        code = main(["run", "--scenario", "toy", "--method", "pps", "--budget", "40", "--seeds", "0-1",
                     "--out", str(tmp_path)])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert set(out) == {"final_support", "final_holdout"}
        assert (tmp_path / "trace_seed1.csv").exists()

    def test_config_file_and_flag_precedence(self, tmp_path, capsys):
        cfg = tmp_path / "exp.toml"
        cfg.write_text('scenario = "toy"\nmethod = "rs"\nquery_budget = 30\nseeds = [0]\n')
        assert main(["run", "--config", str(cfg), "--method", "pps", "--out", str(tmp_path / "o")]) == 0
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert summary["spec"]["method"] == "pps"
        assert summary["spec"]["query_budget"] == 30

    def test_json_config(self, tmp_path, capsys):
        cfg = tmp_path / "exp.json"
        cfg.write_text(json.dumps({"scenario": "toy", "method": "ini", "seeds": "0,1"}))
        assert main(["run", "--config", str(cfg)]) == 0

    def test_config_accepts_flag_spellings(self, tmp_path, capsys):
        cfg = tmp_path / "exp.toml"
        cfg.write_text('scenario = "toy"\nmethod = "pps"\nbudget = 30\nlr = 0.2\nseeds = "0"\n')
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        spec = json.loads((tmp_path / "o" / "summary.json").read_text())["spec"]
        assert spec["query_budget"] == 30 and spec["learning_rate"] == 0.2

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "exp.toml"
        cfg.write_text('scenario = "toy"\nbudgett = 30\n')
        assert main(["run", "--config", str(cfg)]) == 2

    def test_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "exp.toml"
        cfg.write_text("scenario = \n")
        assert main(["run", "--config", str(cfg)]) == 2

    def test_runtime_failure(self, capsys):
        code = main(["run", "--scenario", "toy", "--method", "pps", "--connect", f"127.0.0.1:{free_port()}"])
        assert code == 3


class TestCompareCommand:
    def test_table(self, tmp_path, capsys):
        table = tmp_path / "cmp.csv"
        code = main(["compare", "--scenario", "toy", "--methods", "rs,pps", "--budget", "40", "--seeds", "0-2",
                     "--table", str(table)])
        assert code == 0
        assert table.read_text().splitlines()[0] == "queries,rs_mean,rs_std,pps_mean,pps_std"

    def test_needs_methods(self, capsys):
        assert main(["compare", "--scenario", "toy"]) == 2


class TestDiagnose:
    def test_quick(self, capsys):
        assert main(["diagnose", "--quick"]) == 0
        res = json.loads(capsys.readouterr().out)
        assert all(res["checks"].values())


class TestServeConnect:
    def test_two_processes(self, capsys):
        port = free_port()
        holder = subprocess.Popen(
            [sys.executable, "-m", "feedtune.cli", "serve", "--scenario", "toy", "--budget", "40",
             "--bind", f"127.0.0.1:{port}"],
            stdout=subprocess.PIPE, text=True,
        )
        try:
            assert holder.stdout.readline().startswith("listening on")
            code = main(["run", "--scenario", "toy", "--method", "pps", "--budget", "40",
                         "--connect", f"127.0.0.1:{port}"])
            assert code == 0
            report = json.loads(holder.stdout.readline())
        finally:
            holder.wait(timeout=30)
        assert holder.returncode == 0
        assert report["queries_answered"] <= 40
        assert 0.0 <= report["final_holdout"][0] <= 1.0
