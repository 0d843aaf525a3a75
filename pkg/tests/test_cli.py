import json

import numpy as np

from tensorreg.cli import main
from tensorreg.layer import Gradients
from tensorreg.verify import run_checks

TINY = {
    "spec": {
        "weight_shape": [4, 3],
        "output_dim": 1,
        "true_rank": 2,
        "n_train": 120,
        "n_test": 40,
        "seed": 0,
    },
    "train": {
        "epochs": 6,
        "batch_size": 40,
        "lr_initial": 1e-3,
        "lr_decay_factor": 0.1,
        "lr_decay_epochs": [4],
        "scheme": "bernoulli",
        "seed": 0,
    },
    "thetas": [1.0],
    "objective": "both",
}


def write_config(tmp_path, cfg):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    rows = path.read_text().splitlines()
    header = rows[0].split(",")
    data = np.array([[float(v) for v in row.split(",")] for row in rows[1:]])
    return header, data


class TestSynth:
    def test_theta_one_both_objectives_match(self, tmp_path):
        cfg = write_config(tmp_path, TINY)
        out = tmp_path / "runs"
        code = main(["synth", "--config", cfg, "--out", str(out)])
        assert code == 0
        _, s = read_csv(out / "curve_theta1_stochastic.csv")
        _, d = read_csv(out / "curve_theta1_deterministic.csv")
        np.testing.assert_allclose(s[:, 1], d[:, 1], rtol=1e-8)  # objective
        np.testing.assert_allclose(s[:, 3], d[:, 3], rtol=1e-8)  # test mse

    def test_outputs_and_manifest(self, tmp_path):
        cfg = dict(TINY, thetas=[0.5], objective="stochastic")
        out = tmp_path / "runs"
        code = main(["synth", "--config", write_config(tmp_path, cfg), "--out", str(out)])
        assert code == 0
        assert (out / "config_resolved.json").exists()
        assert (out / "curve_theta0.5_stochastic.csv").exists()
        assert (out / "model_theta0.5_stochastic.txt").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 0
        (run,) = manifest["runs"]
        assert run["theta"] == 0.5
        assert np.isfinite(run["final_test_mse"])

    def test_reproducible_outputs(self, tmp_path):
        cfg = write_config(tmp_path, dict(TINY, objective="deterministic"))
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["synth", "--config", cfg, "--out", str(out_a)]) == 0
        assert main(["synth", "--config", cfg, "--out", str(out_b)]) == 0
        name = "curve_theta1_deterministic.csv"
        _, a = read_csv(out_a / name)
        _, b = read_csv(out_b / name)
        # identical except the wall-clock column
        np.testing.assert_array_equal(a[:, :4], b[:, :4])
        assert (out_a / "manifest.json").read_text() == (
            out_b / "manifest.json"
        ).read_text()

    def test_flag_overrides(self, tmp_path):
        cfg = write_config(tmp_path, TINY)
        out = tmp_path / "runs"
        code = main(
            [
                "synth",
                "--config",
                cfg,
                "--out",
                str(out),
                "--theta",
                "0.8",
                "--objective",
                "deterministic",
                "--seed",
                "7",
            ]
        )
        assert code == 0
        resolved = json.loads((out / "config_resolved.json").read_text())
        assert resolved["thetas"] == [0.8]
        assert resolved["objective"] == "deterministic"
        assert resolved["spec"]["seed"] == 7
        assert resolved["train"]["seed"] == 7
        assert not (out / "curve_theta0.8_stochastic.csv").exists()

    def test_unknown_config_key_exits_2(self, tmp_path):
        cfg = dict(TINY, momentum=0.9)
        code = main(
            ["synth", "--config", write_config(tmp_path, cfg), "--out", str(tmp_path / "o")]
        )
        assert code == 2

    def test_unknown_nested_key_exits_2(self, tmp_path):
        cfg = json.loads(json.dumps(TINY))
        cfg["train"]["weight_decay"] = 1e-4
        code = main(
            ["synth", "--config", write_config(tmp_path, cfg), "--out", str(tmp_path / "o")]
        )
        assert code == 2

    def test_divergence_exits_3(self, tmp_path):
        cfg = json.loads(json.dumps(TINY))
        cfg["train"]["lr_initial"] = 100.0
        cfg["objective"] = "deterministic"
        code = main(
            ["synth", "--config", write_config(tmp_path, cfg), "--out", str(tmp_path / "o")]
        )
        assert code == 3

    def test_bad_json_exits_2(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        code = main(["synth", "--config", str(path), "--out", str(tmp_path / "o")])
        assert code == 2


class TestVerify:
    def test_all_checks_pass(self, capsys):
        assert main(["verify"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out
        assert "checks passed" in out

    def test_filter_selects_gradient_checks(self, capsys):
        assert main(["verify", "--filter", "grad"]) == 0
        out = capsys.readouterr().out
        assert "grad-fd-cp" in out
        assert "unfold-index-map" not in out

    def test_filter_without_match_exits_2(self):
        assert main(["verify", "--filter", "nonexistent"]) == 2

    def test_injected_sign_flip_fails_named_check(self):
        def flip(grads):
            return Gradients(
                [-g for g in grads.factors], grads.core, grads.bias
            )

        results = {r.name: r for r in run_checks("grad", corrupt_gradients=flip)}
        assert not results["grad-fd-cp"].ok
        assert not results["grad-fd-tucker"].ok
        clean = {r.name: r for r in run_checks("grad")}
        assert clean["grad-fd-cp"].ok
        assert clean["grad-fd-tucker"].ok


class TestInspect:
    def test_roundtrip_report(self, tmp_path, capsys):
        cfg = dict(TINY, thetas=[1.0], objective="deterministic")
        out = tmp_path / "runs"
        assert main(["synth", "--config", write_config(tmp_path, cfg), "--out", str(out)]) == 0
        capsys.readouterr()
        ckpt = out / "model_theta1_deterministic.txt"
        assert main(["inspect", str(ckpt)]) == 0
        report = capsys.readouterr().out
        assert "decomposition: kruskal" in report
        assert "weight shape:  (4, 3, 1)" in report
        # keep rate 1 makes the dropout penalty exactly zero
        assert "dropout penalty at rate 1: 0" in report

    def test_zero_weight_checkpoint(self, tmp_path, capsys):
        from tensorreg.decomp import KruskalTensor
        from tensorreg.io import save_model
        from tensorreg.layer import TensorRegressionLayer

        model = TensorRegressionLayer(
            KruskalTensor([np.zeros((3, 2)), np.zeros((2, 2))]), np.zeros(2)
        )
        path = tmp_path / "zero.txt"
        save_model(path, model)
        assert main(["inspect", str(path)]) == 0
        report = capsys.readouterr().out
        assert "column norms: 0 0" in report

    def test_malformed_checkpoint_exits_2(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("garbage\n")
        assert main(["inspect", str(path)]) == 2

    def test_missing_file_exits_2(self, tmp_path):
        assert main(["inspect", str(tmp_path / "missing.txt")]) == 2


class TestPresets:
    def test_paper_preset_resolves_to_full_grid(self):
        import argparse

        from tensorreg.cli import _resolve_config

        args = argparse.Namespace(
            preset="paper", config=None, seed=None, theta=None, objective=None
        )
        cfg = _resolve_config(args)
        assert cfg["thetas"] == [1.0, 0.7, 0.4, 0.1]
        assert cfg["objective"] == "both"  # 4 rates x 2 objectives = 8 runs
        assert cfg["spec"]["weight_shape"] == [25, 25, 25]
        assert cfg["spec"]["true_rank"] == 15
        assert cfg["train"]["epochs"] == 500
        assert cfg["train"]["lr_initial"] == 1e-4
        assert cfg["train"]["lr_decay_epochs"] == [200, 400]

    def test_desk_preset_is_default(self):
        import argparse

        from tensorreg.cli import _resolve_config

        args = argparse.Namespace(
            preset="desk", config=None, seed=None, theta=None, objective=None
        )
        cfg = _resolve_config(args)
        assert cfg["spec"]["weight_shape"] == [10, 10, 10]
        assert cfg["train"]["epochs"] == 150


class TestUsage:
    def test_unknown_subcommand_exits_2(self):
        assert main(["frobnicate"]) == 2

    def test_bad_flag_value_exits_2(self):
        assert main(["synth", "--theta", "lots"]) == 2
