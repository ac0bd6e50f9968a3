"""Command-line client, exercised in process through main(argv)."""

import json

import pytest

from mdpmc.cli import main
from mdpmc.formats import parse_model, write_model
from mdpmc.gen import gen_hard_mn, gen_pi_trap


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture()
def chain_path(tmp_path):
    p = tmp_path / "chain.model"
    p.write_text(write_model(gen_hard_mn(5)))
    return str(p)


class TestCheck:
    def test_exact_pi(self, capsys, chain_path):
        code, out, err = run(
            capsys,
            "check", chain_path,
            "--objective", "reach:min:goal",
            "--algorithm", "pi", "--evaluator", "exact",
        )
        assert code == 0, err
        assert "value: 1/3" in out
        assert "status: exact" in out

    def test_ovi_prints_bounds(self, capsys, tmp_path):
        p = tmp_path / "trap.model"
        p.write_text(write_model(gen_pi_trap("1/10")))
        code, out, err = run(
            capsys,
            "check", str(p),
            "--objective", "reach:max:goal",
            "--algorithm", "ovi", "--epsilon", "1e-6",
        )
        assert code == 0, err
        assert "status: certified" in out
        assert "bounds: [" in out

    def test_json_output(self, capsys, chain_path):
        code, out, _ = run(
            capsys,
            "check", chain_path,
            "--objective", "reach:max:goal",
            "--algorithm", "lp[field=rational]",
            "--json",
        )
        assert code == 0
        body = json.loads(out)
        assert body["value"] == "2/3"

    def test_option_flag_merges(self, capsys, chain_path):
        code, out, _ = run(
            capsys,
            "check", chain_path,
            "--objective", "reach:min:goal",
            "--algorithm", "topo",
            "--option", "backend=pi",
        )
        assert code == 0
        assert "value: 1/3" in out

    def test_bad_option_fails_client_side(self, capsys, chain_path):
        code, _, err = run(
            capsys,
            "check", chain_path,
            "--objective", "reach:min:goal",
            "--option", "bogus=1",
        )
        assert code == 1
        assert "error:" in err

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(
            capsys,
            "check", str(tmp_path / "nope.model"),
            "--objective", "reach:min:goal",
        )
        assert code == 1
        assert "error:" in err

    def test_timeout_reports_as_such(self, capsys, tmp_path):
        p = tmp_path / "big.model"
        p.write_text(write_model(gen_hard_mn(20)))
        code, _, err = run(
            capsys,
            "check", str(p),
            "--objective", "reach:min:goal",
            "--algorithm", "vi[epsilon=1e-20]",
            "--timeout", "0.05",
        )
        assert code == 1
        assert err.startswith("timeout:")


class TestGenerate:
    def test_to_stdout(self, capsys):
        code, out, _ = run(capsys, "generate", "hard-mn", "--param", "n=3")
        assert code == 0
        assert parse_model(out).num_states == 7

    def test_to_file(self, capsys, tmp_path):
        target = tmp_path / "out.model"
        code, out, _ = run(
            capsys, "generate", "pi-trap", "--param", "delta=1/100", "--out", str(target)
        )
        assert code == 0
        assert "wrote" in out
        assert parse_model(target.read_text()).num_states == 5

    def test_unknown_family(self, capsys):
        code, _, err = run(capsys, "generate", "spiral")
        assert code == 1
        assert "error:" in err

    def test_bad_param_syntax(self, capsys):
        code, _, err = run(capsys, "generate", "hard-mn", "--param", "n")
        assert code == 1
        assert "error:" in err


class TestBenchAndHardness:
    def test_end_to_end(self, capsys, tmp_path):
        (tmp_path / "m.model").write_text(write_model(gen_hard_mn(3)))
        suite = tmp_path / "suite.txt"
        suite.write_text(
            "m.model reach:min:goal pi[evaluator=exact] 1/3\n"
            "m.model reach:max:goal vi[epsilon=1e-6] 2/3\n"
        )
        out_csv = tmp_path / "results.csv"
        code, _, err = run(
            capsys, "bench", str(suite), "--timeout", "30", "--out", str(out_csv)
        )
        assert code == 0, err
        lines = out_csv.read_text().strip().split("\n")
        assert lines[0].startswith("model,objective")
        assert len(lines) == 3
        assert all(",correct," in line for line in lines[1:])

        code, out, err = run(
            capsys, "hardness", str(out_csv), "--floor-ms", "0"
        )
        assert code == 0, err
        for line in out.strip().splitlines():
            assert "solve=" in line and "build=" in line

    def test_csv_to_stdout(self, capsys, tmp_path):
        (tmp_path / "m.model").write_text(write_model(gen_hard_mn(2)))
        suite = tmp_path / "s.txt"
        suite.write_text("m.model reach:min:goal pi -\n")
        code, out, _ = run(capsys, "bench", str(suite))
        assert code == 0
        assert out.startswith("model,objective")
        assert ",no-reference," in out

    def test_suite_parse_error(self, capsys, tmp_path):
        suite = tmp_path / "bad.txt"
        suite.write_text("too few\n")
        code, _, err = run(capsys, "bench", str(suite))
        assert code == 1
        assert "error:" in err


class TestServerFlag:
    def test_unreachable_server_reports_cleanly(self, capsys, chain_path):
        code, _, err = run(
            capsys,
            "check", chain_path,
            "--objective", "reach:min:goal",
            "--server", "http://127.0.0.1:1",
        )
        assert code == 1
        assert "cannot reach the service" in err
