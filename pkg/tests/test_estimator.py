import numpy as np
import pytest
from sklearn.base import clone

from tensorreg.errors import ShapeError
from tensorreg.estimator import TensorRegressor
from tensorreg.training import SyntheticSpec, generate_synthetic


@pytest.fixture(scope="module")
def small_problem():
    spec = SyntheticSpec(
        weight_shape=(6, 5), output_dim=1, true_rank=2, n_train=600, n_test=200, seed=0
    )
    (xt, yt), (xe, ye), _ = generate_synthetic(spec)
    return xt, yt.ravel(), xe, ye.ravel()


def make_estimator(**kw):
    base = dict(rank=2, epochs=60, batch_size=50, lr=5e-3, random_state=0)
    base.update(kw)
    return TensorRegressor(**base)


class TestFitPredict:
    def test_fit_learns_low_rank_weight(self, small_problem):
        xt, yt, xe, ye = small_problem
        est = make_estimator().fit(xt, yt)
        score = est.score(xe, ye)
        assert score > 0.9

    def test_predict_shape_matches_targets(self, small_problem):
        xt, yt, xe, _ = small_problem
        est = make_estimator().fit(xt, yt)
        assert est.predict(xe).shape == (len(xe),)
        est2d = make_estimator().fit(xt, yt.reshape(-1, 1))
        assert est2d.predict(xe).shape == (len(xe), 1)

    def test_flat_input_with_input_shape(self, small_problem):
        xt, yt, xe, ye = small_problem
        est = make_estimator(input_shape=(6, 5)).fit(xt.reshape(len(xt), -1), yt)
        pred_flat = est.predict(xe.reshape(len(xe), -1))
        pred_full = est.predict(xe)
        np.testing.assert_allclose(pred_flat, pred_full)

    def test_refit_reproducible(self, small_problem):
        xt, yt, xe, _ = small_problem
        a = make_estimator().fit(xt, yt).predict(xe)
        b = make_estimator().fit(xt, yt).predict(xe)
        np.testing.assert_array_equal(a, b)

    def test_tucker_decomposition(self, small_problem):
        xt, yt, xe, ye = small_problem
        est = make_estimator(rank=2, decomposition="tucker").fit(xt, yt)
        assert est.score(xe, ye) > 0.8

    def test_rank_dropout_training(self, small_problem):
        xt, yt, xe, ye = small_problem
        est = make_estimator(scheme="bernoulli", rate=0.7, epochs=80).fit(xt, yt)
        assert est.score(xe, ye) > 0.5

    def test_deterministic_objective(self, small_problem):
        xt, yt, xe, ye = small_problem
        est = make_estimator(
            scheme="bernoulli", rate=0.7, objective="deterministic", epochs=80
        ).fit(xt, yt)
        assert est.score(xe, ye) > 0.5

    def test_wrong_predict_shape_rejected(self, small_problem):
        xt, yt, _, _ = small_problem
        est = make_estimator().fit(xt, yt)
        with pytest.raises(ShapeError):
            est.predict(np.zeros((3, 5, 6)))

    def test_target_length_mismatch(self, small_problem):
        xt, yt, _, _ = small_problem
        with pytest.raises(ShapeError):
            make_estimator().fit(xt, yt[:-1])


class TestSklearnProtocol:
    def test_get_params_round_trip(self):
        est = make_estimator(rate=0.4, scheme="bernoulli")
        params = est.get_params()
        assert params["rate"] == 0.4
        rebuilt = TensorRegressor(**params)
        assert rebuilt.get_params() == params

    def test_clone_preserves_params(self):
        est = make_estimator(rank=3, lr=1e-3, lr_decay_epochs=(5,))
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_set_params(self):
        est = make_estimator()
        est.set_params(rate=0.25, scheme="replacement")
        assert est.rate == 0.25
        assert est.scheme == "replacement"

    def test_curve_recorded(self, small_problem):
        xt, yt, _, _ = small_problem
        est = make_estimator(epochs=5).fit(xt, yt)
        assert len(est.curve_) == 5
        assert np.isnan(est.curve_.test_mse).all()  # no validation data
        assert np.all(np.isfinite(est.curve_.objective))
