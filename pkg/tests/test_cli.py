import json
import os

import numpy as np

from dhlab import cli


def run_cli(args, capsys):
    rc = cli.main(args)
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


class TestConfigResolution:
    def test_unknown_keys_rejected_all_at_once(self, tmp_path, capsys):
        rc, _, err = run_cli(["simulate", "--T", "1", "--bogus", "1",
                              "--wrong", "2", "--out", str(tmp_path)], capsys)
        assert rc == 2
        blob = json.loads(err)
        assert blob["code"] == "config-error"
        assert blob["context"]["keys"] == ["bogus", "wrong"]

    def test_missing_required_keys_listed(self, tmp_path, capsys):
        rc, _, err = run_cli(["variance-sweep", "--out", str(tmp_path)],
                             capsys)
        assert rc == 2
        blob = json.loads(err)
        assert set(blob["context"]["keys"]) == {"model", "T", "reps", "point"}

    def test_unknown_command(self, capsys):
        rc, _, err = run_cli(["frobnicate"], capsys)
        assert rc == 2
        assert "frobnicate" in json.loads(err)["message"]

    def test_config_file_with_flag_override(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\nT=1.0\ndt=0.01\nburn_in=0\n")
        rc, _, _ = run_cli(["simulate", "--config", str(cfg), "--T", "2.0",
                            "--out", str(tmp_path)], capsys)
        assert rc == 0
        manifest = json.load(open(tmp_path / "simulate_paper-sim_T2_s0_manifest.json"))
        assert manifest["params"]["T"] == 2.0
        assert manifest["params"]["dt"] == 0.01

    def test_grid_parsing(self):
        assert np.allclose(cli.parse_grid("log:-2:-1:3"),
                           [1e-2, 10 ** -1.5, 1e-1])
        assert np.allclose(cli.parse_grid("-1:1:0.5"),
                           [-1.0, -0.5, 0.0, 0.5, 1.0])
        assert np.allclose(cli.parse_grid("0.3,0.7"), [0.3, 0.7])


class TestCommands:
    def test_simulate_writes_path_and_manifest(self, tmp_path, capsys):
        rc, out, _ = run_cli(["simulate", "--T", "0.5", "--dt", "0.01",
                              "--burn_in", "0", "--seed", "12",
                              "--out", str(tmp_path)], capsys)
        assert rc == 0
        files = os.listdir(tmp_path)
        assert any(f.endswith("_path.csv") for f in files)
        assert any(f.endswith("_manifest.json") for f in files)

    def test_inverse_beta_recovers_constant(self, tmp_path, capsys):
        rc, _, _ = run_cli(["inverse-beta", "--density", "gaussian-eta",
                            "--eta", "0.5", "--grid", "-3:3:1.0",
                            "--out", str(tmp_path)], capsys)
        assert rc == 0
        csv_path = next(p for p in os.listdir(tmp_path)
                        if p.endswith(".csv"))
        rows = open(tmp_path / csv_path).read().splitlines()[1:]
        betas = np.array([float(r.split(",")[2]) for r in rows])
        assert len(betas) == 49
        assert np.max(np.abs(betas - 0.5)) < 1e-7

    def test_estimate_command(self, tmp_path, capsys):
        rc, _, _ = run_cli(["estimate", "--point", "0,1;0,0", "--T", "2",
                            "--dt", "0.01", "--burn_in", "0.5",
                            "--out", str(tmp_path)], capsys)
        assert rc == 0
        csv_path = next(p for p in os.listdir(tmp_path)
                        if p.endswith(".csv") and "estimate" in p)
        lines = open(tmp_path / csv_path).read().splitlines()
        assert lines[0] == "x0,y0,h1,h2,T,value,n_samples"
        assert len(lines) == 3

    def test_prior_build_and_verify(self, tmp_path, capsys):
        rc, _, _ = run_cli(["prior-build", "--variant", "y0_nonzero",
                            "--T", "1e5", "--out", str(tmp_path)], capsys)
        assert rc == 0
        blob = json.load(open(next(tmp_path.glob("*_prior.json"))))
        assert blob["margins"]["positivity_margin"] > 1.0

        rc, _, _ = run_cli(["prior-verify", "--h2_ladder", "0.2,0.1",
                            "--out", str(tmp_path)], capsys)
        assert rc == 0
        lemma = json.load(open(next(tmp_path.glob("*_lemma.json"))))
        assert lemma["passed"]

    def test_girsanov_check_smoke(self, tmp_path, capsys):
        rc, _, _ = run_cli(["girsanov-check", "--T", "2", "--reps", "10",
                            "--dt", "0.01", "--T_cal", "1e4",
                            "--out", str(tmp_path)], capsys)
        assert rc == 0
        blob = json.load(open(next(tmp_path.glob("*_girsanov.json"))))
        assert blob["mean_i_t"] > 0.0

    def test_covariance_lag_smoke(self, tmp_path, capsys):
        rc, _, _ = run_cli(["covariance-lag", "--T", "5", "--reps", "2",
                            "--lags", "0,1", "--dt", "0.01",
                            "--out", str(tmp_path)], capsys)
        assert rc == 0

    def test_rate_sweep_smoke(self, tmp_path, capsys):
        rc, _, _ = run_cli(["rate-sweep", "--point", "0,1.5",
                            "--T_grid", "5,10", "--reps", "2",
                            "--dt", "0.01", "--burn_in", "1",
                            "--out", str(tmp_path)], capsys)
        assert rc == 0


class TestManifestRoundTrip:
    def test_rerun_duplicates_artifacts(self, tmp_path, capsys):
        out1 = tmp_path / "run1"
        out2 = tmp_path / "run2"
        rc, _, _ = run_cli(["variance-sweep", "--model", "paper-sim",
                            "--T", "1", "--reps", "3", "--point", "0,1.5",
                            "--h1_grid", "0.2,0.3", "--h2_grid", "0.2",
                            "--dt", "0.01", "--burn_in", "0.5",
                            "--seed", "77", "--out", str(out1)], capsys)
        assert rc == 0
        manifest_path = next(out1.glob("*_manifest.json"))
        rc, _, _ = run_cli(["--from-manifest", str(manifest_path),
                            "--out", str(out2)], capsys)
        assert rc == 0

        m1 = json.load(open(manifest_path))
        m2 = json.load(open(next(out2.glob("*_manifest.json"))))
        assert m1["artifacts"] == m2["artifacts"]
        for name in m1["artifacts"]:
            b1 = open(out1 / name, "rb").read()
            b2 = open(out2 / name, "rb").read()
            assert b1 == b2

    def test_outputs_do_not_mutate_inputs(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("T=0.5\ndt=0.01\nburn_in=0\n")
        before = cfg.read_bytes()
        run_cli(["simulate", "--config", str(cfg), "--out",
                 str(tmp_path / "o")], capsys)
        assert cfg.read_bytes() == before
