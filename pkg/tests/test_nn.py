import math

import numpy as np
import pytest

from omada import nn


def linear_net(w, b=None):
    """Single affine layer with explicit parameters."""
    w = np.asarray(w, dtype=np.float64)
    if b is None:
        b = np.zeros((1, w.shape[1]))
    spec = nn.MlpSpec((w.shape[0], w.shape[1]))
    return nn.Mlp(spec, [np.ascontiguousarray(w)], [nn.as_matrix(b)])


class TestForward:
    def test_identity_linear_net(self, backend):
        net = linear_net(np.eye(2))
        out, _ = nn.forward(net, [1.0, 2.0])
        np.testing.assert_array_equal(out, [[1.0, 2.0]])

    def test_zero_net_maps_to_zero(self, backend):
        spec = nn.MlpSpec((3, 4, 2), activation="relu")
        net = nn.Mlp(spec, [np.zeros((3, 4)), np.zeros((4, 2))],
                     [np.zeros((1, 4)), np.zeros((1, 2))])
        out, _ = nn.forward(net, [[5.0, -1.0, 2.0]])
        np.testing.assert_array_equal(out, [[0.0, 0.0]])

    def test_two_layer_tanh_matches_hand_evaluation(self, backend):
        net = nn.init_mlp(nn.MlpSpec((2, 2, 2)), nn.make_rng(0))
        x = np.array([[1.0, 0.0]])
        out, _ = nn.forward(net, x)
        w1, w2 = net.weights
        b1, b2 = net.biases
        expected = np.tanh(x @ w1 + b1) @ w2 + b2
        np.testing.assert_allclose(out, expected, rtol=0, atol=1e-15)

    def test_wrong_input_width_raises(self):
        net = linear_net(np.eye(2))
        with pytest.raises(nn.ShapeError):
            nn.forward(net, [[1.0, 2.0, 3.0]])

    def test_eval_forward_is_bit_reproducible(self, backend):
        rng = nn.make_rng(3)
        net = nn.init_mlp(nn.MlpSpec((3, 8, 2), activation="relu"), rng)
        x = rng.standard_normal((4, 3))
        a, _ = nn.forward(net, x)
        b, _ = nn.forward(net, x)
        assert np.array_equal(a, b)

    def test_train_forward_reproducible_given_seed(self):
        net = nn.init_mlp(nn.MlpSpec((3, 8, 2), dropout_rate=0.4), nn.make_rng(1))
        x = nn.make_rng(2).standard_normal((6, 3))
        a, _ = nn.forward(net, x, mode="train", rng=nn.make_rng(7))
        b, _ = nn.forward(net, x, mode="train", rng=nn.make_rng(7))
        assert np.array_equal(a, b)

    def test_train_dropout_needs_rng(self):
        net = nn.init_mlp(nn.MlpSpec((2, 4, 2), dropout_rate=0.5), nn.make_rng(0))
        with pytest.raises(ValueError):
            nn.forward(net, [[1.0, 2.0]], mode="train")

    def test_dropout_train_mean_approximates_eval(self):
        # Inverted scaling: with one hidden layer the stochastic expectation
        # equals the eval output exactly, so the 10k-sample mean should land
        # within 3 standard errors.
        net = nn.init_mlp(nn.MlpSpec((2, 8, 2), dropout_rate=0.3), nn.make_rng(5))
        x = np.array([[0.4, -1.2]])
        eval_out, _ = nn.forward(net, x)
        rng = nn.make_rng(99)
        draws = np.vstack([
            nn.forward(net, x, mode="train", rng=rng)[0] for _ in range(10_000)
        ])
        se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - eval_out[0]) <= 3.0 * se)


class TestSoftmax:
    def test_symmetry(self):
        np.testing.assert_allclose(nn.softmax([0.0, 0.0]), [[0.5, 0.5]], atol=1e-15)

    def test_large_logits_do_not_overflow(self):
        out = nn.softmax([1000.0, 0.0])
        assert np.isfinite(out).all()
        np.testing.assert_allclose(out, [[1.0, 0.0]], atol=1e-12)

    def test_hand_evaluated_two_logits(self):
        e = math.e
        np.testing.assert_allclose(
            nn.softmax([1.0, 0.0]), [[e / (e + 1), 1 / (e + 1)]], rtol=1e-12)

    def test_rows_sum_to_one_for_random_extreme_logits(self):
        rng = nn.make_rng(11)
        logits = rng.uniform(-1e3, 1e3, size=(200, 6))
        sums = nn.softmax(logits).sum(axis=1)
        np.testing.assert_allclose(sums, 1.0, rtol=0, atol=1e-12)


class TestSoftCrossEntropy:
    def test_matching_one_hot_is_zero(self):
        assert nn.soft_cross_entropy([1.0, 0.0], [1.0, 0.0]) <= 1e-11

    def test_uniform_pair_gives_ln2(self):
        got = nn.soft_cross_entropy([0.5, 0.5], [0.5, 0.5])
        assert abs(got - math.log(2)) < 1e-12

    def test_hand_value_against_one_hot(self):
        got = nn.soft_cross_entropy([0.7311, 0.2689], [1.0, 0.0])
        assert abs(got - (-math.log(0.7311))) < 1e-12

    def test_gibbs_inequality_on_random_simplex_pairs(self):
        rng = nn.make_rng(13)
        for _ in range(300):
            c = int(rng.integers(2, 8))
            p = rng.dirichlet(np.ones(c), size=4)
            t = rng.dirichlet(np.ones(c), size=4)
            ce = nn.soft_cross_entropy(p, t)
            ent = float(nn.shannon_entropy(t).mean())
            assert ce - ent >= -1e-10


class TestShannonEntropy:
    def test_one_hot_is_zero(self):
        assert nn.shannon_entropy([1.0, 0.0, 0.0, 0.0])[0] == 0.0

    def test_uniform_is_log_c(self):
        got = nn.shannon_entropy(np.full((1, 4), 0.25))[0]
        assert abs(got - math.log(4)) < 1e-12

    def test_hand_value(self):
        got = nn.shannon_entropy([0.5, 0.25, 0.25])[0]
        assert abs(got - 1.5 * math.log(2)) < 1e-12


class TestBackward:
    def test_zero_loss_grad_gives_zero_gradients(self, backend):
        net = nn.init_mlp(nn.MlpSpec((3, 5, 2)), nn.make_rng(0))
        x = nn.make_rng(1).standard_normal((4, 3))
        _, cache = nn.forward(net, x)
        grads = nn.backward(net, cache, np.zeros((4, 2)))
        for g in grads.parameters():
            assert np.array_equal(g, np.zeros_like(g))

    def test_linear_net_weight_grad_is_xT_loss_grad(self, backend):
        rng = nn.make_rng(2)
        w = rng.standard_normal((3, 2))
        net = linear_net(w)
        x = rng.standard_normal((5, 3))
        _, cache = nn.forward(net, x)
        loss_grad = rng.standard_normal((5, 2))
        grads = nn.backward(net, cache, loss_grad)
        np.testing.assert_allclose(grads.weights[0], x.T @ loss_grad, rtol=1e-12)

    def test_mismatched_cache_raises(self):
        net_a = nn.init_mlp(nn.MlpSpec((3, 5, 2)), nn.make_rng(0))
        net_b = nn.init_mlp(nn.MlpSpec((3, 2)), nn.make_rng(0))
        _, cache = nn.forward(net_a, np.zeros((1, 3)))
        with pytest.raises(nn.ShapeError):
            nn.backward(net_b, cache, np.zeros((1, 2)))

    def test_matches_independent_finite_differences(self, backend):
        # Independent oracle: central differences computed right here, not
        # via grad_check.
        rng = nn.make_rng(4)
        net = nn.init_mlp(nn.MlpSpec((3, 6, 4, 2), activation="tanh"), rng)
        x = rng.standard_normal((3, 3))
        t = rng.dirichlet(np.ones(2), size=3)

        out, cache = nn.forward(net, x)
        _, dout = nn.softmax_cross_entropy(out, t)
        analytic = nn.backward(net, cache, dout).parameters()

        h = 1e-5
        for p, g in zip(net.parameters(), analytic):
            flat = p.reshape(-1)
            for i in range(0, flat.size, 7):  # spot-check a subset
                orig = flat[i]
                flat[i] = orig + h
                lp, _ = nn.softmax_cross_entropy(nn.forward(net, x)[0], t)
                flat[i] = orig - h
                lm, _ = nn.softmax_cross_entropy(nn.forward(net, x)[0], t)
                flat[i] = orig
                numeric = (lp - lm) / (2 * h)
                assert abs(g.reshape(-1)[i] - numeric) / max(1, abs(numeric)) < 1e-6


class TestSgd:
    def test_zero_lr_leaves_parameters_unchanged(self):
        net = nn.init_mlp(nn.MlpSpec((2, 3)), nn.make_rng(0))
        before = [p.copy() for p in net.parameters()]
        grads = [np.ones_like(p) for p in net.parameters()]
        nn.sgd_update(net, grads, lr=0.0)
        for b, a in zip(before, net.parameters()):
            assert np.array_equal(b, a)

    def test_plain_step_hand_value(self):
        net = linear_net(np.array([[1.0]]))
        grads = [np.array([[0.5]]), np.array([[0.0]])]
        nn.sgd_update(net, grads, lr=0.1, momentum=0.0, weight_decay=0.0)
        assert net.weights[0][0, 0] == pytest.approx(0.95, abs=1e-15)

    def test_momentum_default_is_09(self):
        import inspect

        sig = inspect.signature(nn.sgd_update)
        assert sig.parameters["momentum"].default == 0.9

    def test_momentum_accumulates_velocity(self):
        net = linear_net(np.array([[0.0]]))
        grads = [np.array([[1.0]]), np.array([[0.0]])]
        state = nn.sgd_update(net, grads, lr=0.1, momentum=0.9)
        # v1 = 1 -> w = -0.1; v2 = 0.9 + 1 = 1.9 -> w = -0.29
        nn.sgd_update(net, grads, lr=0.1, momentum=0.9, state=state)
        assert net.weights[0][0, 0] == pytest.approx(-0.29, abs=1e-15)

    def test_weight_decay_is_l2(self):
        net = linear_net(np.array([[2.0]]))
        grads = [np.array([[0.0]]), np.array([[0.0]])]
        nn.sgd_update(net, grads, lr=0.1, momentum=0.0, weight_decay=0.5)
        assert net.weights[0][0, 0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0, abs=1e-15)


class TestGradCheck:
    def test_linear_with_squared_error_is_nearly_exact(self, backend):
        rng = nn.make_rng(6)
        net = linear_net(rng.standard_normal((3, 2)))
        err = nn.grad_check(net, rng.standard_normal((4, 3)),
                            rng.standard_normal((4, 2)), loss="squared_error")
        assert err < 1e-8

    def test_three_layer_tanh_soft_ce(self, backend):
        rng = nn.make_rng(7)
        net = nn.init_mlp(nn.MlpSpec((4, 8, 8, 3)), rng)
        x = rng.standard_normal((5, 4))
        t = rng.dirichlet(np.ones(3), size=5)
        assert nn.grad_check(net, x, t, loss="soft_ce") < 1e-4

    def test_deterministic_with_dropout_spec_in_eval(self):
        rng = nn.make_rng(8)
        net = nn.init_mlp(nn.MlpSpec((3, 6, 2), dropout_rate=0.5), rng)
        x = rng.standard_normal((2, 3))
        t = rng.dirichlet(np.ones(2), size=2)
        assert nn.grad_check(net, x, t) == nn.grad_check(net, x, t)

    def test_h_out_of_range_rejected(self):
        net = linear_net(np.eye(2))
        with pytest.raises(ValueError):
            nn.grad_check(net, [[1.0, 0.0]], [[1.0, 0.0]], h=1e-2)


class TestSpecValidation:
    def test_too_few_layer_sizes(self):
        with pytest.raises(ValueError):
            nn.MlpSpec((4,))

    def test_bad_dropout(self):
        with pytest.raises(ValueError):
            nn.MlpSpec((2, 2), dropout_rate=1.0)

    def test_bad_activation(self):
        with pytest.raises(ValueError):
            nn.MlpSpec((2, 2), activation="gelu")

    def test_mlp_shape_check(self):
        spec = nn.MlpSpec((2, 3))
        with pytest.raises(nn.ShapeError):
            nn.Mlp(spec, [np.zeros((2, 4))], [np.zeros((1, 4))])


class TestBackendParity:
    def test_forward_backward_agree_across_backends(self):
        from omada import backends

        names = backends.available_backends()
        if len(names) < 2:
            pytest.skip("only one backend built")
        rng = nn.make_rng(10)
        net = nn.init_mlp(nn.MlpSpec((3, 16, 5), activation="relu"), rng)
        x = rng.standard_normal((8, 3))
        g = rng.standard_normal((8, 5))
        results = {}
        for name in names:
            with backends.use_backend(name):
                out, cache = nn.forward(net, x)
                grads = nn.backward(net, cache, g)
                results[name] = (out, grads)
        a, b = (results[n] for n in names[:2])
        np.testing.assert_allclose(a[0], b[0], rtol=0, atol=1e-12)
        for ga, gb in zip(a[1].parameters(), b[1].parameters()):
            np.testing.assert_allclose(ga, gb, rtol=0, atol=1e-10)
        np.testing.assert_allclose(a[1].input, b[1].input, rtol=0, atol=1e-12)
