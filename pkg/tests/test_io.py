import io as stdio

import numpy as np
import pytest

from tensorreg.decomp import KruskalTensor, SketchSpec, TuckerTensor
from tensorreg.errors import ConfigError
from tensorreg.io import (
    load_dataset,
    load_model,
    load_tensor,
    read_decomposition,
    read_tensor,
    save_dataset,
    save_model,
    save_tensor,
    write_curve_csv,
    write_decomposition,
    write_tensor,
)
from tensorreg.layer import forward, init_model
from tensorreg.training import LossCurve


def roundtrip_tensor(t):
    buf = stdio.StringIO()
    write_tensor(buf, t)
    buf.seek(0)
    return read_tensor(buf)


class TestTensorFormat:
    def test_roundtrip_exact(self):
        t = np.random.default_rng(0).standard_normal((2, 3, 4))
        assert np.array_equal(roundtrip_tensor(t), t)

    def test_scalar_tensor(self):
        t = np.array(3.141592653589793)
        got = roundtrip_tensor(t)
        assert got.shape == ()
        assert got == t

    def test_seventeen_digit_header(self):
        buf = stdio.StringIO()
        write_tensor(buf, np.array([0.1, 2.0]))
        lines = buf.getvalue().splitlines()
        assert lines[0] == "2"
        assert lines[1] == "0.10000000000000001 2"

    def test_file_roundtrip(self, tmp_path):
        t = np.random.default_rng(1).standard_normal((3, 2))
        path = tmp_path / "t.txt"
        save_tensor(path, t)
        assert np.array_equal(load_tensor(path), t)

    def test_truncated_file_rejected(self):
        with pytest.raises(ConfigError):
            read_tensor(stdio.StringIO("2 2\n"))


class TestDecompositionFormat:
    def test_kruskal_roundtrip(self):
        rng = np.random.default_rng(2)
        kt = KruskalTensor(
            [rng.standard_normal((d, 3)) for d in (2, 4)], rng.standard_normal(3)
        )
        buf = stdio.StringIO()
        write_decomposition(buf, kt)
        buf.seek(0)
        got = read_decomposition(buf)
        assert isinstance(got, KruskalTensor)
        assert np.array_equal(got.weights, kt.weights)
        for a, b in zip(got.factors, kt.factors):
            assert np.array_equal(a, b)

    def test_kruskal_without_weights(self):
        kt = KruskalTensor([np.ones((2, 2)), np.ones((3, 2))])
        buf = stdio.StringIO()
        write_decomposition(buf, kt)
        assert buf.getvalue().splitlines()[1] == "none"
        buf.seek(0)
        assert read_decomposition(buf).weights is None

    def test_tucker_roundtrip(self):
        rng = np.random.default_rng(3)
        tt = TuckerTensor(
            rng.standard_normal((2, 2, 3)),
            [rng.standard_normal((d, r)) for d, r in zip((3, 2, 4), (2, 2, 3))],
        )
        buf = stdio.StringIO()
        write_decomposition(buf, tt)
        buf.seek(0)
        got = read_decomposition(buf)
        assert isinstance(got, TuckerTensor)
        assert np.array_equal(got.core, tt.core)
        for a, b in zip(got.factors, tt.factors):
            assert np.array_equal(a, b)

    def test_unknown_tag_rejected(self):
        with pytest.raises(ConfigError):
            read_decomposition(stdio.StringIO("ring 3\n"))


class TestCheckpoint:
    def test_model_roundtrip(self, tmp_path):
        rng = np.random.default_rng(4)
        model = init_model(
            (4, 3),
            2,
            3,
            sketch=SketchSpec("bernoulli", 0.5, tie_modes=True),
            rng=rng,
        )
        model.bias[:] = rng.standard_normal(2)
        path = tmp_path / "model.txt"
        save_model(path, model)
        got = load_model(path)
        assert got.sketch == model.sketch
        assert got.scale_mode == model.scale_mode
        x = rng.standard_normal((5, 4, 3))
        np.testing.assert_array_equal(forward(got, x), forward(model, x))

    def test_tucker_model_roundtrip(self, tmp_path):
        rng = np.random.default_rng(5)
        model = init_model((3, 2), 2, (2, 2, 2), "tucker", rng=rng)
        path = tmp_path / "model.txt"
        save_model(path, model)
        got = load_model(path)
        x = rng.standard_normal((4, 3, 2))
        np.testing.assert_array_equal(forward(got, x), forward(model, x))

    def test_malformed_header_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("nonsense\n")
        with pytest.raises(ConfigError):
            load_model(path)

    def test_header_shape_mismatch_rejected(self, tmp_path):
        rng = np.random.default_rng(6)
        model = init_model((3, 2), 2, 2, rng=rng)
        path = tmp_path / "model.txt"
        save_model(path, model)
        text = path.read_text().splitlines()
        text[0] = text[0].replace("shape=3,2,2", "shape=3,3,2")
        path.write_text("\n".join(text) + "\n")
        with pytest.raises(ConfigError):
            load_model(path)


class TestCurveCsv:
    def test_header_and_formatting(self):
        curve = LossCurve()
        curve.append(0, 1.5, 1.25, 2.0, 0.1)
        curve.append(1, 0.1, 0.0625, 1.0, 0.2)
        buf = stdio.StringIO()
        write_curve_csv(buf, curve)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "epoch,objective,train_loss,test_mse,seconds"
        assert lines[1].startswith("0,1.5,1.25,2,")
        assert len(lines) == 3

    def test_values_round_trip_through_text(self):
        curve = LossCurve()
        curve.append(0, 1 / 3, 2 / 7, 0.1, 0.5)
        buf = stdio.StringIO()
        write_curve_csv(buf, curve)
        fields = buf.getvalue().splitlines()[1].split(",")
        assert float(fields[1]) == 1 / 3
        assert float(fields[2]) == 2 / 7
        assert float(fields[3]) == 0.1


class TestDataset:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((6, 3, 2))
        y = rng.standard_normal((6, 1))
        path = tmp_path / "data.txt"
        save_dataset(path, x, y)
        gx, gy = load_dataset(path)
        assert np.array_equal(gx, x)
        assert np.array_equal(gy, y)
