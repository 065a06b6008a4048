"""Command-line surface: subcommand wiring, exit codes, determinism,
config merging and the output-directory environment variable."""

import filecmp
import json

import numpy as np
import pytest

from slevolve import cli


def run(args):
    return cli.main(args)


class TestBetasCommand:
    def test_writes_sum_and_provenance(self, tmp_path):
        out = tmp_path / "betas.json"
        rc = run(["betas", "--m", "3", "--a", "1", "--alphas", "1,2,2",
                  "--A", "1.0", "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert abs(doc["sum_betas"]) <= 1e-10
        assert doc["case"] == "d"
        assert doc["version"]
        assert doc["config"]["A"] == 1.0

    def test_deterministic_bytes(self, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        for out in (a, b):
            run(["betas", "--m", "3", "--a", "1", "--alphas", "1,2,2",
                 "--A", "0.7", "--out", str(out)])
        da = json.loads(a.read_text())
        db = json.loads(b.read_text())
        da["config"].pop("out")
        db["config"].pop("out")
        assert da == db

    def test_validation_exit_code(self, tmp_path):
        rc = run(["betas", "--m", "3", "--a", "1", "--alphas", "1,2,2.5",
                  "--A", "1.0", "--out", str(tmp_path / "x.json")])
        assert rc == 2

    def test_unknown_flag_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            run(["betas", "--m", "3", "--what", "1"])
        assert exc.value.code == 2


class TestSearchCommand:
    def test_finds_denominator_seven(self, tmp_path, capsys):
        out = tmp_path / "sols.json"
        scan = tmp_path / "scan.csv"
        rc = run(["search", "--m", "3", "--a", "1", "--family", "sym",
                  "--bmax", "8", "--grid", "48", "--verify",
                  "--out", str(out), "--scan-csv", str(scan), "--jobs", "2"])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["count"] >= 1
        found = {(tuple(s["int_angles"]), s["denom"]) for s in doc["solutions"]}
        assert ((-8, 4, 4), 7) in found
        sol = next(s for s in doc["solutions"] if s["denom"] == 7)
        assert sol["verification"]["max_defect"] <= 1e-6
        assert sol["topology"]
        header = scan.read_text().splitlines()[0]
        assert header.startswith("alpha1,alpha2,alpha3,A,beta1")
        # progress goes to stderr, not stdout
        captured = capsys.readouterr()
        assert "found" in captured.err

    def test_data_stream_clean(self, tmp_path, capsys):
        out = tmp_path / "sols.json"
        run(["search", "--m", "2", "--a", "1", "--alphas", "1.3,1.3",
             "--bmax", "2", "--grid", "8", "--out", str(out)])
        captured = capsys.readouterr()
        assert captured.out == ""  # data only in files


class TestMeshAndVerify:
    def test_round_trip_and_threshold(self, tmp_path):
        mesh = tmp_path / "link.json"
        rc = run(["mesh", "--kind", "link", "--alphas", "1.2,2,3",
                  "--A", "0.4", "--resolution", "12x12",
                  "--out", str(mesh), "--with-residuals"])
        assert rc == 0
        rc = run(["verify", "--mesh", str(mesh), "--threshold", "1e-6",
                  "--out", str(tmp_path / "rep.json")])
        assert rc == 0
        rep = json.loads((tmp_path / "rep.json").read_text())
        assert rep["max_imOmega_residual"] <= 1e-6

    def test_threshold_failure_is_exit_three(self, tmp_path):
        mesh = tmp_path / "link.json"
        run(["mesh", "--kind", "link", "--alphas", "1.2,2,3", "--A", "0.4",
             "--resolution", "8x8", "--out", str(mesh)])
        rc = run(["verify", "--mesh", str(mesh), "--threshold", "1e-30"])
        assert rc == 3

    def test_centred_mesh_formats(self, tmp_path):
        for fmt in ("json", "csv", "obj", "ply"):
            out = tmp_path / f"m.{fmt}"
            rc = run(["mesh", "--kind", "centred", "--m", "3", "--a", "1",
                      "--alphas", "1,2,2", "--A", "1.0", "--c", "1.0",
                      "--t-end", "1.0", "--resolution", "4x8",
                      "--format", fmt, "--out", str(out)])
            assert rc == 0 and out.exists()


class TestEvolveCommand:
    def test_data_file_input(self, tmp_path):
        from slevolve import evodata
        doc = evodata.example_quadric(3, 1, 1.0).to_json_dict()
        data_path = tmp_path / "data.json"
        data_path.write_text(json.dumps(doc))
        summary = tmp_path / "s.json"
        rc = run(["evolve", "--data", str(data_path), "--w0", "1,1j,1",
                  "--t-end", "1.0", "--summary", str(summary)])
        assert rc == 0
        doc = json.loads(summary.read_text())
        assert doc["max_omega_residual"] <= 1e-8

    def test_escape_reported(self, tmp_path):
        summary = tmp_path / "s.json"
        rc = run(["evolve", "--m", "3", "--a", "3", "--c", "1.0",
                  "--w0", "1,1,1", "--t-end", "30", "--out",
                  str(tmp_path / "t.csv"), "--summary", str(summary)])
        assert rc == 0
        doc = json.loads(summary.read_text())
        assert doc["escaped"] is True
        header = (tmp_path / "t.csv").read_text().splitlines()[0]
        assert header.split(",")[0] == "t"
        assert header.split(",")[-1] == "res_omega"


class TestConfigAndEnv:
    def test_config_file_merged_flags_override(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"alphas": "1,2,2", "A": 0.5, "m": 3,
                                   "a": 1}))
        out = tmp_path / "b.json"
        rc = run(["betas", "--config", str(cfg), "--A", "1.0",
                  "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["config"]["A"] == 1.0  # flag wins
        assert doc["config"]["alphas"] == "1,2,2"

    def test_outdir_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SLEVOLVE_OUTDIR", str(tmp_path))
        rc = run(["limits", "--m", "3", "--a", "1", "--alphas", "1,2,2",
                  "--out", "lim.json"])
        assert rc == 0
        assert (tmp_path / "lim.json").exists()

    def test_limits_values(self, tmp_path):
        out = tmp_path / "lim.json"
        run(["limits", "--m", "3", "--a", "1", "--alphas", "1,2,2",
             "--out", str(out)])
        doc = json.loads(out.read_text())
        assert doc["k"] == 1 and doc["l"] == 2
        assert doc["sum_squares_large_A"] == pytest.approx(
            2 * np.pi ** 2, abs=1e-10)


class TestOtherCommands:
    def test_crosssection(self, tmp_path):
        rc = run(["crosssection", "--alphas", "1.2,2,3",
                  "--out", str(tmp_path / "cs.csv"),
                  "--summary", str(tmp_path / "cs.json")])
        assert rc == 0
        doc = json.loads((tmp_path / "cs.json").read_text())
        assert max(doc["max_constraint_residuals"]) <= 1e-10
        header = (tmp_path / "cs.csv").read_text().splitlines()[0]
        assert header == "s,x1,x2,x3"

    def test_affine_summary(self, tmp_path):
        rc = run(["affine", "--m", "3", "--a", "2", "--alphas", "1,1.3",
                  "--A", "0.5", "--t-end", "4",
                  "--summary", str(tmp_path / "a.json")])
        assert rc == 0
        doc = json.loads((tmp_path / "a.json").read_text())
        assert doc["case"] == "b"
        assert doc["beta_closed_form_defect"] <= 1e-7

    def test_report(self, tmp_path):
        rc = run(["report", "--m", "3", "--a", "1", "--family", "sym",
                  "--A", "1.0", "--out", str(tmp_path / "r.json")])
        assert rc == 0
        doc = json.loads((tmp_path / "r.json").read_text())
        assert doc["case"] == "d"
        assert doc["conservation_drift"] <= 1e-8
        assert abs(doc["betas"]["sum_betas"]) <= 1e-10
