import json
import math

import numpy as np
import pytest

from lipagg.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestMechanismCommand:
    def test_worked_example(self, capsys):
        code, out, _ = run(
            capsys, "mechanism", "--family", "lip", "--prior", "0.1,0.2,0.7",
            "--eps", "0.6931",
        )
        assert code == 0
        rows = [[float(v) for v in line.split(",")] for line in out.strip().splitlines()]
        np.testing.assert_allclose(
            rows,
            [[0.55, 0.10, 0.35], [0.05, 0.60, 0.35], [0.05, 0.10, 0.85]],
            atol=5e-5,
        )

    def test_out_file(self, capsys, tmp_path):
        path = tmp_path / "mech.csv"
        code, out, _ = run(
            capsys, "mechanism", "--family", "ldp", "--d", "3", "--eps", "1.0",
            "--out", str(path),
        )
        assert code == 0 and out == ""
        assert len(path.read_text().strip().splitlines()) == 3


class TestAuditCommand:
    def test_identity_zero_posterior_report(self, capsys):
        code, out, _ = run(capsys, "audit", "--prior", "0.5,0.5", "--mech", "identity")
        assert code == 0
        payload = json.loads(out)
        assert payload["lip_eps"] == "inf"

    def test_family_channel(self, capsys):
        code, out, _ = run(
            capsys, "audit", "--prior", "0.4,0.6", "--family", "lip", "--eps", "1.0"
        )
        assert code == 0
        assert json.loads(out)["lip_eps"] == pytest.approx(1.0, abs=1e-9)


class TestSweepCommand:
    def test_multi_family_ordering(self, capsys, tmp_path):
        path = tmp_path / "curve.csv"
        code, _, err = run(
            capsys, "sweep", "--family", "ldp", "--family", "lip",
            "--eps", "0.5:2.0:0.5", "--n", "150", "--d", "3",
            "--seed", "7", "--trials", "60", "--out", str(path),
        )
        assert code == 0
        assert "seed=7" in err
        lines = path.read_text().strip().splitlines()
        header = lines[0].split(",")
        lip_col = header.index("lip_root_avg_mse")
        ldp_col = header.index("ldp_root_avg_mse")
        for line in lines[1:]:
            cells = line.split(",")
            assert float(cells[lip_col]) <= float(cells[ldp_col]) + 1e-9

    def test_single_family_schema(self, capsys, tmp_path):
        path = tmp_path / "curve.csv"
        code, _, _ = run(
            capsys, "sweep", "--family", "lip", "--eps", "1.0:2.0:1.0",
            "--n", "50", "--d", "2", "--seed", "3", "--trials", "40",
            "--out", str(path),
        )
        assert code == 0
        header = path.read_text().splitlines()[0]
        assert header == "epsilon,analytic_mse,empirical_mse,root_avg_mse,trials"

    def test_byte_identical_reruns(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = [
            "sweep", "--family", "lip", "--eps", "0.5:1.5:0.5", "--n", "80",
            "--d", "2", "--seed", "21", "--trials", "50",
        ]
        assert run(capsys, *args, "--out", str(a))[0] == 0
        assert run(capsys, *args, "--out", str(b))[0] == 0
        assert a.read_bytes() == b.read_bytes()


class TestSimulateCommand:
    def test_json_point(self, capsys):
        code, out, err = run(
            capsys, "simulate", "--family", "lip", "--eps", "1.0", "--n", "60",
            "--d", "2", "--seed", "9", "--trials", "40",
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["trials"] == 40
        assert payload["root_avg_mse"] == pytest.approx(
            math.sqrt(payload["analytic_mse"] / 60), rel=1e-6
        )

    def test_env_seed_fallback(self, capsys, monkeypatch):
        monkeypatch.setenv("LIPAGG_SEED", "123")
        code, _, err = run(
            capsys, "simulate", "--family", "lip", "--eps", "1.0", "--n", "30",
            "--d", "2", "--trials", "20",
        )
        assert code == 0
        assert "seed=123" in err


class TestSolveCommand:
    def test_latent_from_dataset(self, capsys, tmp_path):
        data = tmp_path / "d.csv"
        data.write_text(
            "user,x,g\n" + "\n".join(
                f"u{i},{x},{g}"
                for i, (x, g) in enumerate(
                    [("0", "0")] * 6 + [("1", "1")] * 6 + [("0", "1")] * 4 + [("1", "0")] * 4
                )
            ) + "\n"
        )
        code, out, _ = run(
            capsys, "solve", "--model", "latent", "--dataset", str(data),
            "--eps", "0.6931", "--seed", "1",
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["feasible"] is True
        assert len(payload["mechanism"]) == 2

    def test_bp_lip_box(self, capsys):
        code, out, _ = run(
            capsys, "solve", "--model", "bp_lip", "--low", "0.0,0.5",
            "--high", "0.5,1.0", "--eps", "0.6931", "--seed", "1",
        )
        assert code == 0
        mech = np.array(json.loads(out)["mechanism"])
        np.testing.assert_allclose(mech, [[0.6, 0.4], [0.2, 0.8]], atol=1e-4)


class TestAggregateCommand:
    def test_histogram_over_dataset(self, capsys, tmp_path):
        data = tmp_path / "d.csv"
        rows = [f"u{i},{'a' if i % 3 else 'b'}" for i in range(30)]
        data.write_text("user,x\n" + "\n".join(rows) + "\n")
        code, out, _ = run(
            capsys, "aggregate", "--dataset", str(data), "--family", "lip",
            "--eps", "2.0", "--seed", "4", "--application", "histogram",
        )
        assert code == 0
        payload = json.loads(out)
        assert sum(payload["truth"]) == 30
        assert sum(payload["estimate"]) == pytest.approx(30, rel=1e-6)


class TestExitCodes:
    def test_usage_error(self, capsys):
        code, _, err = run(capsys, "mechanism", "--family", "lip")
        assert code == 1
        assert "usage error" in err

    def test_unknown_subcommand(self, capsys):
        assert run(capsys, "frobnicate")[0] == 1

    def test_runtime_error(self, capsys):
        code, _, err = run(
            capsys, "aggregate", "--dataset", "/nonexistent/file.csv",
            "--family", "lip", "--eps", "1.0", "--seed", "0",
        )
        assert code == 2
        assert "error" in err


class TestConfigFile:
    def test_defaults_from_config(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("eps=1.0\nd=3\nprior=0.2,0.3,0.5\n")
        code, out, _ = run(
            capsys, "mechanism", "--family", "lip", "--config", str(cfg)
        )
        assert code == 0
        assert len(out.strip().splitlines()) == 3
