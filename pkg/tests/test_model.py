import numpy as np
import pytest

from sfdalab.errors import ConfigError, DivergenceError, InvalidInputError, ShapeError
from sfdalab.model import (
    MlpModel,
    backward,
    flatten_grads,
    forward,
    get_flat_params,
    init_model,
    load_checkpoint,
    predict_labels,
    save_checkpoint,
    set_flat_params,
    sgd_step,
)
from sfdalab.numerics import finite_diff_grad, max_relative_error
from sfdalab.objectives import attract_disperse_loss, cross_entropy_loss


def tiny_model():
    # hand-set 1-wide layers so the forward value can be checked by hand
    return MlpModel(
        W1=np.array([[2.0]]), b1=np.array([0.5]),
        W2=np.array([[-1.0]]), b2=np.array([1.0]),
        Wc=np.array([[1.0, -1.0]]), bc=np.array([0.0, 0.5]),
    )


class TestInitModel:
    def test_deterministic(self):
        a = init_model(2, 15, 15, 2, seed=0)
        b = init_model(2, 15, 15, 2, seed=0)
        for k in a.params():
            np.testing.assert_array_equal(a.params()[k], b.params()[k])

    def test_seeds_differ(self):
        a = init_model(2, 15, 15, 2, seed=0)
        b = init_model(2, 15, 15, 2, seed=1)
        assert not np.array_equal(a.W1, b.W1)

    def test_param_count(self):
        assert init_model(2, 15, 15, 2, seed=0).n_params() == 317

    def test_biases_zero(self):
        m = init_model(3, 4, 5, 6, seed=2)
        assert np.all(m.b1 == 0) and np.all(m.b2 == 0) and np.all(m.bc == 0)

    def test_glorot_range(self):
        m = init_model(50, 30, 20, 10, seed=3)
        a = np.sqrt(6.0 / (50 + 30))
        assert np.all(np.abs(m.W1) <= a)

    def test_zero_dim_rejected(self):
        with pytest.raises(ConfigError):
            init_model(0, 5, 5, 2, seed=0)


class TestForward:
    def test_zero_weights_uniform(self):
        m = init_model(2, 3, 3, 4, seed=0)
        set_flat_params(m, np.zeros(m.n_params()))
        P = forward(m, [[0.3, -0.7], [5.0, 2.0]]).P
        np.testing.assert_allclose(P, 0.25, atol=1e-15)

    def test_hand_computed_value(self):
        m = tiny_model()
        # x=1.5: pre1=3.5, relu passes, feature=-3.5+1=-2.5,
        # logits=(-2.5, 3.0), p0 = 1/(1+e^{5.5})
        cache = forward(m, [[1.5]])
        assert cache.pre1[0, 0] == 3.5
        assert cache.features[0, 0] == -2.5
        np.testing.assert_allclose(cache.logits[0], [-2.5, 3.0])
        np.testing.assert_allclose(cache.P[0, 0], 1.0 / (1.0 + np.exp(5.5)), rtol=1e-14)

    def test_hand_computed_relu_clips(self):
        m = tiny_model()
        # x=-1: pre1=-1.5 clipped to 0, feature=1, logits=(1, -0.5)
        cache = forward(m, [[-1.0]])
        assert cache.hidden[0, 0] == 0.0
        np.testing.assert_allclose(cache.logits[0], [1.0, -0.5])

    def test_row_permutation(self):
        m = init_model(2, 5, 5, 3, seed=4)
        rng = np.random.Generator(np.random.PCG64(0))
        X = rng.normal(size=(7, 2))
        perm = rng.permutation(7)
        np.testing.assert_array_equal(forward(m, X).P[perm], forward(m, X[perm]).P)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            forward(init_model(2, 3, 3, 2, seed=0), [[1.0, 2.0, 3.0]])


class TestBackward:
    def test_zero_upstream_zero_grads(self):
        m = init_model(2, 4, 4, 3, seed=1)
        cache = forward(m, [[0.1, 0.2], [0.5, -0.5]])
        grads = backward(m, cache, np.zeros_like(cache.P))
        for g in grads.values():
            assert np.all(g == 0)

    def test_relu_subgradient_at_zero_is_zero(self):
        m = tiny_model()
        m.b1[0] = -2.0 * 0.7  # pre1 exactly 0 for x=0.7
        cache = forward(m, [[0.7]])
        assert cache.pre1[0, 0] == 0.0
        grads = backward(m, cache, np.array([[1.0, -1.0]]))
        assert np.all(grads["W1"] == 0) and np.all(grads["b1"] == 0)

    def test_stale_cache_rejected(self):
        m = init_model(2, 4, 4, 3, seed=1)
        cache = forward(m, [[0.1, 0.2]])
        other = init_model(2, 4, 5, 3, seed=1)
        with pytest.raises(ShapeError):
            backward(other, cache, np.zeros_like(cache.P))

    def _check_through_model(self, loss_of_P, seed):
        m = init_model(2, 5, 6, 3, seed=seed)
        rng = np.random.Generator(np.random.PCG64(seed + 100))
        X = rng.normal(size=(6, 2))
        cache = forward(m, X)
        res = loss_of_P(cache.P)
        analytic = flatten_grads(backward(m, cache, res.grad))
        probe = m.clone()

        def f(flat):
            set_flat_params(probe, flat)
            return loss_of_P(forward(probe, X).P).value

        numeric = finite_diff_grad(f, get_flat_params(m), h=1e-5)
        assert max_relative_error(analytic, numeric) <= 1e-4

    def test_cross_entropy_through_model_matches_oracle(self):
        labels = np.array([0, 1, 2, 0, 1, 2])
        for seed in range(3):
            self._check_through_model(lambda P: cross_entropy_loss(P, labels), seed)

    def test_attract_disperse_through_model_matches_oracle(self):
        rng = np.random.Generator(np.random.PCG64(9))
        nbr = rng.dirichlet(np.ones(3), size=(6, 2))
        for seed in range(3):
            self._check_through_model(
                lambda P: attract_disperse_loss(P, nbr, lam=0.7), seed)

    def test_cross_entropy_softmax_composition(self):
        # chained through the softmax VJP the logit gradient is (P - onehot)/bs
        m = init_model(2, 4, 4, 3, seed=5)
        X = np.array([[0.2, -0.4], [1.0, 0.3]])
        cache = forward(m, X)
        labels = np.array([2, 0])
        res = cross_entropy_loss(cache.P, labels)
        from sfdalab.model import softmax_vjp

        dlogits = softmax_vjp(cache.P, res.grad)
        onehot = np.zeros_like(cache.P)
        onehot[np.arange(2), labels] = 1.0
        np.testing.assert_allclose(dlogits, (cache.P - onehot) / 2.0, atol=1e-12)


class TestSgdStep:
    def test_vanilla_step(self):
        m = init_model(1, 2, 2, 2, seed=0)
        before = get_flat_params(m).copy()
        g = {k: np.ones_like(v) for k, v in m.params().items()}
        sgd_step(m, g, lr=0.1, momentum=0.0)
        np.testing.assert_allclose(get_flat_params(m), before - 0.1, atol=1e-15)

    def test_zero_grad_noop(self):
        m = init_model(1, 2, 2, 2, seed=0)
        before = get_flat_params(m).copy()
        sgd_step(m, {k: np.zeros_like(v) for k, v in m.params().items()},
                 lr=0.1, momentum=0.9)
        np.testing.assert_array_equal(get_flat_params(m), before)

    def test_momentum_two_steps(self):
        # v1 = g, v2 = 0.9 g + g -> total displacement lr*g*(1 + 1.9)
        m = init_model(1, 2, 2, 2, seed=0)
        before = get_flat_params(m).copy()
        g = {k: np.full_like(v, 2.0) for k, v in m.params().items()}
        sgd_step(m, g, lr=0.1, momentum=0.9)
        sgd_step(m, g, lr=0.1, momentum=0.9)
        np.testing.assert_allclose(get_flat_params(m), before - 0.1 * 2.0 * 2.9, atol=1e-12)

    def test_bad_lr_rejected(self):
        m = init_model(1, 2, 2, 2, seed=0)
        g = {k: np.zeros_like(v) for k, v in m.params().items()}
        with pytest.raises(ConfigError):
            sgd_step(m, g, lr=0.0, momentum=0.0)
        with pytest.raises(ConfigError):
            sgd_step(m, g, lr=0.1, momentum=1.0)

    def test_non_finite_grads_rejected(self):
        m = init_model(1, 2, 2, 2, seed=0)
        g = {k: np.zeros_like(v) for k, v in m.params().items()}
        g["W1"][0, 0] = np.nan
        with pytest.raises(DivergenceError):
            sgd_step(m, g, lr=0.1, momentum=0.0)

    def test_reset_velocity(self):
        m = init_model(1, 2, 2, 2, seed=0)
        g = {k: np.ones_like(v) for k, v in m.params().items()}
        sgd_step(m, g, lr=0.1, momentum=0.9)
        m.reset_velocity()
        assert all(np.all(v == 0) for v in m.velocity.values())


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        m = init_model(2, 15, 15, 2, seed=7)
        p = tmp_path / "ckpt.json"
        save_checkpoint(m, p)
        m2 = load_checkpoint(p)
        np.testing.assert_array_equal(get_flat_params(m), get_flat_params(m2))
        assert (m2.d_in, m2.h1, m2.h_feat, m2.n_classes) == (2, 15, 15, 2)
        assert m2.seed == 7

    def test_loaded_model_has_fresh_momentum(self, tmp_path):
        m = init_model(2, 3, 3, 2, seed=0)
        g = {k: np.ones_like(v) for k, v in m.params().items()}
        sgd_step(m, g, lr=0.1, momentum=0.9)
        p = tmp_path / "ckpt.json"
        save_checkpoint(m, p)
        m2 = load_checkpoint(p)
        assert all(np.all(v == 0) for v in m2.velocity.values())

    def test_version_field_checked(self, tmp_path):
        m = init_model(2, 3, 3, 2, seed=0)
        p = tmp_path / "ckpt.json"
        save_checkpoint(m, p)
        import json

        doc = json.loads(p.read_text())
        assert doc["format_version"] == 1
        doc["format_version"] = 99
        p.write_text(json.dumps(doc))
        with pytest.raises(InvalidInputError):
            load_checkpoint(p)


class TestFlatParams:
    def test_round_trip(self):
        m = init_model(3, 4, 5, 2, seed=1)
        flat = get_flat_params(m)
        m2 = init_model(3, 4, 5, 2, seed=9)
        set_flat_params(m2, flat)
        np.testing.assert_array_equal(get_flat_params(m2), flat)

    def test_wrong_length_rejected(self):
        m = init_model(3, 4, 5, 2, seed=1)
        with pytest.raises(ShapeError):
            set_flat_params(m, np.zeros(m.n_params() - 1))

    def test_predict_labels_matches_argmax(self):
        m = init_model(2, 4, 4, 3, seed=2)
        rng = np.random.Generator(np.random.PCG64(3))
        X = rng.normal(size=(10, 2))
        np.testing.assert_array_equal(predict_labels(m, X),
                                      np.argmax(forward(m, X).P, axis=1))
