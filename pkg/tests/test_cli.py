import json
import subprocess
import sys

import numpy as np
import pytest

from mgfid.cli import EXIT_CONFIG, EXIT_GUARD, EXIT_OK, build_target, main
from mgfid.matchgate import format_circuit, random_matchgate_circuit
from mgfid.superop import read_superop_csv
from mgfid.tomography import parse_matrix


def run(args, tmp_path, name="out"):
    out = tmp_path / name
    code = main(list(args) + ["--out", str(out)])
    return code, out


def read_json(path):
    return json.loads(path.read_text())


@pytest.fixture
def circuit_file(tmp_path):
    p = tmp_path / "u.mgc"
    p.write_text(format_circuit(random_matchgate_circuit(2, seed=5)))
    return p


class TestSuperop:
    def test_fsim_count(self, tmp_path, capsys):
        code, out = run(["superop", "--fsim", "0.7", "0.3"], tmp_path)
        assert code == EXIT_OK
        rep = read_json(out / "report.json")
        assert rep["nonzeros"] == 94 and rep["construction"] == "brute_force"
        assert "nonzeros: 94" in capsys.readouterr().out

    def test_identity(self, tmp_path):
        code, out = run(["superop", "--identity", "-n", "2"], tmp_path)
        assert code == EXIT_OK
        sup = read_superop_csv((out / "superop.csv").read_text(), 2)
        assert np.array_equal(sup.to_dense(), np.eye(16))

    def test_compare_euler(self, tmp_path):
        code, out = run(["superop", "--haar", "-n", "3", "--seed", "7", "--compare-euler"], tmp_path)
        assert code == EXIT_OK
        assert read_json(out / "report.json")["euler_max_difference"] < 1e-8

    def test_circuit_file(self, tmp_path, circuit_file):
        code, out = run(["superop", "--circuit", str(circuit_file)], tmp_path)
        assert code == EXIT_OK
        assert read_json(out / "report.json")["n_qubits"] == 2

    def test_fsim_colon_source(self, tmp_path):
        code, out = run(["superop", "--circuit", "fsim:0.7:0.0"], tmp_path)
        assert code == EXIT_OK and read_json(out / "report.json")["nonzeros"] == 36

    def test_size_guard(self, tmp_path):
        code, out = run(["superop", "--haar", "-n", "9"], tmp_path)
        assert code == EXIT_GUARD and not out.exists()


class TestBenchmark:
    def test_noiseless_intervals_contain_one(self, tmp_path):
        code, out = run(["benchmark", "-n", "2", "--eps", "0.1", "--runs", "3"], tmp_path)
        assert code == EXIT_OK
        rows = (out / "runs.csv").read_text().splitlines()
        assert rows[0].startswith("run,F_e_oracle,Y_tilde,lower,upper")
        for line in rows[1:]:
            vals = line.split(",")
            assert float(vals[3]) <= 1.0 <= float(vals[4])

    def test_shot_log(self, tmp_path):
        code, out = run(["benchmark", "-n", "2", "--eps", "0.2", "--shot-log", "--noise", "depolarizing:0.1"], tmp_path)
        assert code == EXIT_OK
        log = (out / "shots_run000.csv").read_text().splitlines()
        assert log[0] == "mu,nu,I,J,lambda,A,phi_re,phi_im,B"
        rep = read_json(out / "report.json")
        assert len(log) - 1 == pytest.approx(rep["mean_total_shots"])

    def test_alpha_auto(self, tmp_path):
        code, _ = run(["benchmark", "--circuit", "xy", "-n", "2", "--eps", "0.2", "--alpha", "auto"], tmp_path)
        assert code == EXIT_OK

    def test_byte_identical(self, tmp_path):
        args = ["benchmark", "-n", "2", "--eps", "0.2", "--noise", "amp:0.05", "--runs", "2", "--seed", "3"]
        _, a = run(args, tmp_path, "a")
        _, b = run(args, tmp_path, "b")
        for name in ("runs.csv", "report.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    @pytest.mark.parametrize(
        "extra",
        [
            ["--eps", "2"],
            ["--delta", "0"],
            ["--noise", "bogus:1"],
            ["--runs", "0"],
            ["--alpha", "x"],
            ["--alpha", "0.99"],
            ["--circuit", "missing.mgc"],
            ["--haar", "--identity"],
        ],
    )
    def test_config_errors_leave_nothing(self, tmp_path, extra):
        code, out = run(["benchmark", "-n", "2", "--eps", "0.2"] + extra, tmp_path)
        assert code == EXIT_CONFIG
        assert not out.exists()

    def test_shot_cap_guard(self, tmp_path):
        code, out = run(["benchmark", "-n", "2", "--eps", "0.2", "--shot-cap", "5"], tmp_path)
        assert code == EXIT_GUARD and not out.exists()

    def test_out_is_file(self, tmp_path):
        f = tmp_path / "file"
        f.write_text("x")
        assert main(["benchmark", "-n", "2", "--eps", "0.2", "--out", str(f)]) == EXIT_CONFIG
        assert f.read_text() == "x"


class TestOtherCommands:
    def test_tomography(self, tmp_path, circuit_file):
        code, out = run(["tomography", "--circuit", str(circuit_file), "--shots", "200"], tmp_path)
        assert code == EXIT_OK
        r = parse_matrix((out / "R_tilde.txt").read_text())
        assert r.shape == (4, 4) and np.allclose(r @ r.T, np.eye(4), atol=1e-12)
        rep = read_json(out / "report.json")
        assert rep["shots_per_entry"] == 200 and rep["total_shots"] == 3200

    def test_tomography_rejects_non_matchgate(self, tmp_path):
        code, _ = run(["tomography", "--fsim", "0.3", "0.2"], tmp_path)
        assert code == EXIT_CONFIG

    def test_euler(self, tmp_path):
        code, out = run(["euler", "--haar", "-n", "4", "--seed", "1"], tmp_path)
        assert code == EXIT_OK
        rep = read_json(out / "report.json")
        assert rep["round_trip_residual"] < 1e-9 and rep["dim"] == 8
        assert (out / "angles.txt").read_text().startswith("# dim 8\n")

    def test_sandwich(self, tmp_path, circuit_file):
        (tmp_path / "h1.clf").write_text("H 1\nCNOT 1 2\n")
        (tmp_path / "h2.clf").write_text("S 2\nX 1\n")
        code, out = run(
            [
                "sandwich",
                "--circuit",
                str(circuit_file),
                "--v1",
                str(tmp_path / "h1.clf"),
                "--v2",
                str(tmp_path / "h2.clf"),
                "--eps",
                "0.1",
                "--noise",
                "depolarizing:0.1",
            ],
            tmp_path,
        )
        assert code == EXIT_OK
        rep = read_json(out / "report.json")
        assert rep["max_entry_deviation"] < 1e-9
        lo, hi = rep["F_e_interval"]
        assert lo <= rep["F_e_oracle"] <= hi

    def test_sandwich_missing_clifford(self, tmp_path, circuit_file):
        code, out = run(["sandwich", "--circuit", str(circuit_file), "--v1", "nope.clf"], tmp_path)
        assert code == EXIT_CONFIG and not out.exists()

    def test_n_mismatch(self, tmp_path, circuit_file):
        code, _ = run(["superop", "--circuit", str(circuit_file), "-n", "3"], tmp_path)
        assert code == EXIT_CONFIG

    def test_build_target_seeded(self):
        a = build_target("givens", 3, seed=4, run=1)
        b = build_target("givens", 3, seed=4, run=1)
        c = build_target("givens", 3, seed=4, run=2)
        assert np.array_equal(a.rotation, b.rotation)
        assert not np.array_equal(a.rotation, c.rotation)


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "mgfid", "superop", "--identity", "-n", "1"], capture_output=True, text=True
    )
    assert proc.returncode == 0 and "nonzeros: 4" in proc.stdout
