import numpy as np
import numpy.testing as npt
import pytest

from distillbound import model
from distillbound.seeds import substream


class TestSymmetricInit:
    def test_paired_halves(self):
        params = model.init_symmetric(8, 3, substream(0, "init"))
        half = 4
        npt.assert_array_equal(params.out_signs[:half], -params.out_signs[half:])
        npt.assert_array_equal(params.init_weights[:half],
                               params.init_weights[half:])
        npt.assert_array_equal(params.weights, params.init_weights)
        assert np.all(np.abs(params.out_signs) == 1.0)

    def test_zero_function_at_init(self):
        rng = np.random.default_rng(42)
        for m in (2, 6, 64):
            params = model.init_symmetric(m, 5, substream(m, "init"))
            xs = rng.normal(size=(50, 5))
            fs = model.forward_batch(params, xs)
            assert np.max(np.abs(fs)) <= 1e-9 * np.sqrt(m)

    def test_rejects_odd_width(self):
        with pytest.raises(ValueError):
            model.init_symmetric(3, 4, substream(0, "init"))

    def test_deterministic_under_seed(self):
        a = model.init_symmetric(6, 4, substream(9, "init"))
        b = model.init_symmetric(6, 4, substream(9, "init"))
        npt.assert_array_equal(a.weights, b.weights)
        npt.assert_array_equal(a.out_signs, b.out_signs)


class TestForward:
    def test_hand_computed_two_neurons(self):
        # f(x) = (1/sqrt(2)) * (relu(w0.x) - relu(w1.x))
        params = model.NetworkParams(
            out_signs=np.array([1.0, -1.0]),
            weights=np.array([[1.0, 0.0], [0.0, 1.0]]),
            init_weights=np.array([[1.0, 0.0], [0.0, 1.0]]))
        x = np.array([3.0, 1.0])
        expect = (3.0 - 1.0) / np.sqrt(2.0)
        npt.assert_allclose(model.forward(params, x), expect, rtol=1e-15)
        x2 = np.array([-1.0, 2.0])
        npt.assert_allclose(model.forward(params, x2), -2.0 / np.sqrt(2.0),
                            rtol=1e-15)

    def test_batch_agrees_with_single(self):
        params = model.init_symmetric(10, 4, substream(1, "init"))
        params.weights = params.weights + 0.3 * np.random.default_rng(2).normal(
            size=params.weights.shape)
        xs = np.random.default_rng(3).normal(size=(20, 4))
        batch = model.forward_batch(params, xs)
        singles = np.array([model.forward(params, x) for x in xs])
        # one-row and batched matmuls may take different BLAS kernels, so
        # demand agreement to a few ulps rather than bit equality
        npt.assert_allclose(batch, singles, rtol=1e-14, atol=1e-15)

    def test_positive_homogeneity_in_input(self):
        params = model.init_symmetric(8, 3, substream(4, "init"))
        # asymmetric perturbation; a shared constant would keep the paired
        # halves equal and the function identically zero
        params.weights = params.weights + np.random.default_rng(40).normal(
            size=params.weights.shape)
        x = np.array([0.4, 0.7, 0.9])
        f1 = model.forward(params, x)
        assert abs(f1) > 1e-3  # keep the scale test away from a zero crossing
        f3 = model.forward(params, 3.0 * x)
        npt.assert_allclose(f3, 3.0 * f1, rtol=1e-12)

    def test_rejects_wrong_input_dim(self):
        params = model.init_symmetric(4, 3, substream(0, "init"))
        with pytest.raises(ValueError):
            model.forward_batch(params, np.zeros((2, 5)))


class TestFrozenForward:
    def test_linear_in_eval_weights(self):
        params = model.init_symmetric(12, 5, substream(6, "init"))
        rng = np.random.default_rng(7)
        xs = rng.normal(size=(9, 5))
        bits = model.activation_pattern(params, xs)
        v1 = rng.normal(size=params.weights.shape)
        v2 = rng.normal(size=params.weights.shape)
        f1 = model.forward_frozen(bits, v1, params.out_signs, xs)
        f2 = model.forward_frozen(bits, v2, params.out_signs, xs)
        f12 = model.forward_frozen(bits, 2.0 * v1 - 0.5 * v2,
                                   params.out_signs, xs)
        npt.assert_allclose(f12, 2.0 * f1 - 0.5 * f2, rtol=1e-12, atol=1e-12)

    def test_matches_forward_with_own_pattern(self):
        params = model.init_symmetric(8, 4, substream(8, "init"))
        params.weights = params.weights + np.random.default_rng(9).normal(
            size=params.weights.shape)
        xs = np.random.default_rng(10).normal(size=(15, 4))
        bits = model.activation_pattern(params, xs)
        frozen = model.forward_frozen(bits, params.weights, params.out_signs, xs)
        npt.assert_array_equal(frozen, model.forward_batch(params, xs))

    def test_rejects_pattern_shape_mismatch(self):
        params = model.init_symmetric(4, 3, substream(0, "init"))
        xs = np.zeros((2, 3))
        with pytest.raises(ValueError):
            model.forward_frozen(np.ones((3, 4), dtype=bool), params.weights,
                                 params.out_signs, xs)


class TestOutputGrad:
    def test_finite_difference(self):
        rng = np.random.default_rng(13)
        params = model.init_symmetric(10, 4, substream(13, "init"))
        params.weights = params.weights + rng.normal(size=params.weights.shape)
        hits = 0
        for _ in range(30):
            x = rng.normal(size=4)
            # keep away from activation kinks so the FD quotient is smooth
            if np.min(np.abs(params.weights @ x)) < 1e-3:
                continue
            hits += 1
            grad = model.output_grad(params, x)
            h = 1e-6
            for j in (0, 5, 9):
                for k in (0, 3):
                    w_plus = params.copy()
                    w_plus.weights[j, k] += h
                    w_minus = params.copy()
                    w_minus.weights[j, k] -= h
                    num = (model.forward(w_plus, x) - model.forward(w_minus, x)) / (2 * h)
                    npt.assert_allclose(grad[j, k], num, rtol=1e-6, atol=1e-9)
        assert hits >= 20

    def test_frobenius_norm_at_most_input_norm(self):
        rng = np.random.default_rng(14)
        params = model.init_symmetric(16, 6, substream(14, "init"))
        params.weights = params.weights + rng.normal(size=params.weights.shape)
        for _ in range(100):
            x = rng.normal(size=6)
            g = model.output_grad(params, x)
            assert np.linalg.norm(g) <= np.linalg.norm(x) * (1.0 + 1e-12)

    def test_inactive_rows_are_zero(self):
        params = model.NetworkParams(
            out_signs=np.array([1.0, -1.0]),
            weights=np.array([[1.0, 0.0], [-1.0, 0.0]]),
            init_weights=np.array([[1.0, 0.0], [-1.0, 0.0]]))
        g = model.output_grad(params, np.array([1.0, 0.0]))
        npt.assert_array_equal(g[1], 0.0)
        npt.assert_allclose(g[0], np.array([1.0, 0.0]) / np.sqrt(2.0))


class TestFlipSets:
    def test_detects_flipped_neuron(self):
        params = model.init_symmetric(4, 2, substream(20, "init"))
        params.weights = params.init_weights.copy()
        x = np.array([1.0, 0.0])
        assert model.flip_set(params, x).size == 0
        # force neuron 0 to the opposite side of the x hyperplane
        params.weights[0, 0] = -params.init_weights[0, 0] - 1.0
        flips = model.flip_set(params, x)
        npt.assert_array_equal(flips, [0])

    def test_counts_match_flip_set(self):
        rng = np.random.default_rng(21)
        params = model.init_symmetric(30, 5, substream(21, "init"))
        params.weights = params.init_weights + 0.8 * rng.normal(
            size=params.weights.shape)
        xs = rng.normal(size=(12, 5))
        counts = model.flip_counts(params.weights, params.init_weights, xs)
        for i, x in enumerate(xs):
            assert counts[i] == model.flip_set(params, x).size

    def test_strict_inequality_on_boundary(self):
        # preactivation exactly 0 on both sides: strict > means no flip
        params = model.NetworkParams(
            out_signs=np.array([1.0, -1.0]),
            weights=np.array([[0.0, 1.0], [0.0, 1.0]]),
            init_weights=np.array([[0.0, -1.0], [0.0, -1.0]]))
        x = np.array([1.0, 0.0])
        assert model.flip_set(params, x).size == 0


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        params = model.init_symmetric(6, 3, substream(33, "init"))
        params.weights = params.weights + np.random.default_rng(34).normal(
            size=params.weights.shape)
        path = tmp_path / "ck.npz"
        model.save_checkpoint(params, path)
        back = model.load_checkpoint(path)
        npt.assert_array_equal(back.weights, params.weights)
        npt.assert_array_equal(back.init_weights, params.init_weights)
        npt.assert_array_equal(back.out_signs, params.out_signs)
