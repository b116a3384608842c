"""Layer math: loop-reference convolutions, finite-difference gradient
checks for every differentiable piece, Adam behavior, serialization."""

import math

import numpy as np
import pytest

from specgad import nn


rng = np.random.default_rng(20240)


def projection_loss(layer, x_tensor, coeffs):
    """loss = sum(coeffs * layer(x)); runs backward and routes the input
    gradient into x_tensor.grad so grad_check can perturb inputs too."""

    def loss_fn():
        y = layer.forward(x_tensor.data)
        gx = layer.backward(coeffs)
        x_tensor.grad += gx
        return float((coeffs * y).sum())

    return loss_fn


def check_layer(layer, x_shape, tol=1e-4, train=False):
    layer.training = train
    x = nn.Tensor(rng.standard_normal(x_shape))
    y = layer.forward(x.data)
    coeffs = rng.standard_normal(y.shape)
    err = nn.grad_check(projection_loss(layer, x, coeffs),
                        [x] + layer.params())
    assert err < tol, f"{type(layer).__name__}: {err}"


class TestConvForward:
    def test_one_tap_identity(self):
        x = np.array([[[1.0, 2.0, 3.0, 4.0]]])
        w = np.array([[[1.0]]])
        out = nn.conv1d_forward(x, w, np.zeros(1), 1, 0)
        assert np.array_equal(out, x)

    def test_padded_box_sum(self):
        x = np.ones((1, 1, 3))
        w = np.ones((1, 1, 3))
        out = nn.conv1d_forward(x, w, np.zeros(1), 1, 1)
        assert np.array_equal(out[0, 0], [2.0, 3.0, 2.0])

    def test_matches_nested_loop_reference(self):
        for _ in range(3):
            b_n, cin, cout, length, k, s, p = 2, 3, 4, 11, 3, 2, 1
            x = rng.standard_normal((b_n, cin, length))
            w = rng.standard_normal((cout, cin, k))
            b = rng.standard_normal(cout)
            ref = np.zeros((b_n, cout, (length + 2 * p - k) // s + 1))
            xp = np.pad(x, ((0, 0), (0, 0), (p, p)))
            for bi in range(b_n):
                for co in range(cout):
                    for j in range(ref.shape[2]):
                        acc = b[co]
                        for ci in range(cin):
                            for t in range(k):
                                acc += w[co, ci, t] * xp[bi, ci, j * s + t]
                        ref[bi, co, j] = acc
            out = nn.conv1d_forward(x, w, b, s, p)
            assert np.abs(out - ref).max() < 1e-12

    def test_channel_mismatch(self):
        with pytest.raises(ValueError):
            nn.conv1d_forward(np.zeros((1, 2, 8)), np.zeros((3, 4, 3)), None)


class TestConvBackward:
    def test_zero_grad_out(self):
        x = rng.standard_normal((2, 3, 8))
        w = rng.standard_normal((4, 3, 3))
        gx, gw, gb = nn.conv1d_backward(np.zeros((2, 4, 8)), x, w, 1, 1)
        assert not gx.any() and not gw.any() and not gb.any()

    def test_linearity_in_grad_out(self):
        x = rng.standard_normal((2, 3, 8))
        w = rng.standard_normal((4, 3, 3))
        gy = rng.standard_normal((2, 4, 8))
        g1 = nn.conv1d_backward(gy, x, w, 1, 1)
        g2 = nn.conv1d_backward(2 * gy, x, w, 1, 1)
        for a, b in zip(g1, g2):
            assert np.allclose(2 * a, b)

    @pytest.mark.parametrize("shape,k,s,p", [
        ((2, 3, 9), 3, 2, 1), ((1, 2, 12), 5, 1, 2), ((3, 1, 7), 3, 3, 0),
    ])
    def test_gradients(self, shape, k, s, p):
        layer = nn.Conv1d(shape[1], 4, k, stride=s, padding=p, rng=rng)
        check_layer(layer, shape)


class TestConvTransposed:
    def test_one_tap_identity(self):
        layer = nn.ConvTranspose1d(1, 1, 1, stride=1, padding=0)
        layer.weight.data[...] = 1.0
        x = rng.standard_normal((1, 1, 5))
        assert np.allclose(layer.forward(x), x)

    def test_adjoint_of_conv(self):
        # forward of the transposed conv = input-gradient of conv1d with
        # the same weight array, zero-extended by the stride remainder
        for length, k, s, p in [(12, 3, 2, 1), (11, 3, 2, 1), (9, 7, 2, 3)]:
            x = rng.standard_normal((2, 3, length))
            w = rng.standard_normal((4, 3, k))
            y = nn.conv1d_forward(x, w, None, s, p)
            gy = rng.standard_normal(y.shape)
            gx, _, _ = nn.conv1d_backward(gy, x, w, s, p)
            r = (length + 2 * p - k) % s
            yt = nn.conv1d_transposed_forward(gy, w, None, s, p,
                                              output_padding=r)
            assert np.abs(gx - yt).max() < 1e-12

    def test_invalid_geometry(self):
        with pytest.raises(ValueError):
            nn.conv1d_transposed_forward(
                np.zeros((1, 1, 1)), np.zeros((1, 1, 1)), None,
                stride=1, padding=3)

    @pytest.mark.parametrize("shape,k,s,p,op", [
        ((2, 3, 5), 3, 2, 1, 0), ((1, 2, 6), 3, 2, 1, 1), ((2, 4, 4), 7, 2, 3, 1),
    ])
    def test_gradients(self, shape, k, s, p, op):
        layer = nn.ConvTranspose1d(shape[1], 3, k, stride=s, padding=p,
                                   output_padding=op, rng=rng)
        check_layer(layer, shape)


class TestBatchNorm:
    def test_train_statistics(self):
        layer = nn.BatchNorm1d(3)
        layer.training = True
        x = rng.standard_normal((4, 3, 16)) * 3.0 + 1.5
        y = layer.forward(x)
        assert np.abs(y.mean(axis=(0, 2))).max() < 1e-6
        assert np.abs(y.var(axis=(0, 2)) - 1.0).max() < 1e-4

    def test_constant_channel_maps_to_zero(self):
        layer = nn.BatchNorm1d(1)
        layer.training = True
        y = layer.forward(np.full((2, 1, 4), 7.0))
        assert np.abs(y).max() < 1e-2  # eps-limited

    def test_eval_identity_with_unit_stats(self):
        layer = nn.BatchNorm1d(2, eps=0.0)
        x = rng.standard_normal((3, 2, 5))
        assert np.allclose(layer.forward(x), x)

    def test_eval_deterministic(self):
        layer = nn.BatchNorm1d(2)
        layer.running_mean[:] = [0.3, -0.2]
        layer.running_var[:] = [1.5, 0.7]
        x = rng.standard_normal((2, 2, 6))
        assert np.array_equal(layer.forward(x), layer.forward(x))

    def test_needs_two_values(self):
        layer = nn.BatchNorm1d(1)
        layer.training = True
        with pytest.raises(ValueError):
            layer.forward(np.zeros((1, 1, 1)))

    @pytest.mark.parametrize("shape", [(2, 3, 4), (4, 1, 5), (3, 2, 2)])
    def test_gradients_train_mode(self, shape):
        layer = nn.BatchNorm1d(shape[1])
        check_layer(layer, shape, train=True)


class TestLayerNorm:
    def test_two_point(self):
        layer = nn.LayerNorm(2, eps=1e-12)
        assert np.allclose(layer.forward(np.array([[0.0, 2.0]])), [[-1, 1]])

    def test_constant_to_zeros(self):
        layer = nn.LayerNorm(4)
        assert np.abs(layer.forward(np.full((2, 4), 3.0))).max() < 1e-2

    @pytest.mark.parametrize("shape", [(3, 6), (2, 3, 5), (1, 9)])
    def test_gradients(self, shape):
        layer = nn.LayerNorm(shape[-1])
        check_layer(layer, shape)


class TestActivationsLinear:
    def test_relu_values(self):
        layer = nn.ReLU()
        assert np.array_equal(layer.forward(np.array([-1.0, 0.0, 2.0])),
                              [0.0, 0.0, 2.0])

    def test_sigmoid_center_and_range(self):
        layer = nn.Sigmoid()
        assert layer.forward(np.array([0.0]))[0] == 0.5
        out = layer.forward(np.array([-800.0, 800.0]))
        assert (out > 0).all() and (out < 1).all()

    def test_linear_identity(self):
        layer = nn.Linear(3, 3)
        layer.weight.data[...] = np.eye(3)
        layer.bias.data[...] = 0.0
        x = rng.standard_normal((2, 3))
        assert np.allclose(layer.forward(x), x)

    @pytest.mark.parametrize("shape", [(2, 3), (4, 5), (1, 7)])
    def test_linear_gradients(self, shape):
        layer = nn.Linear(shape[1], 4, rng=rng)
        check_layer(layer, shape, tol=1e-7)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_relu_gradients_away_from_kink(self, seed):
        local = np.random.default_rng(seed)
        layer = nn.ReLU()
        x = nn.Tensor(np.sign(local.standard_normal((2, 5)))
                      * local.uniform(0.01, 1.0, (2, 5)))
        coeffs = local.standard_normal((2, 5))
        err = nn.grad_check(projection_loss(layer, x, coeffs), [x])
        assert err < 1e-4

    @pytest.mark.parametrize("shape", [(2, 4), (3, 3), (5, 1)])
    def test_sigmoid_gradients(self, shape):
        layer = nn.Sigmoid()
        check_layer(layer, shape)


class TestLosses:
    def test_bce_half(self):
        loss, _ = nn.bce_loss(np.array([0.5]), np.array([1.0]))
        assert abs(loss - math.log(2.0)) < 1e-12

    def test_bce_perfect_prediction_hits_clamp_floor(self):
        loss, _ = nn.bce_loss(np.array([1.0, 0.0]), np.array([1.0, 0.0]))
        assert loss <= 1e-6 * abs(math.log(1e-7))

    def test_bce_target_validation(self):
        with pytest.raises(ValueError):
            nn.bce_loss(np.array([0.5]), np.array([1.5]))

    def test_bce_gradient_via_sigmoid_composite(self):
        for seed in range(3):
            local = np.random.default_rng(seed)
            z = nn.Tensor(local.uniform(-2.0, 2.0, 6))
            target = (local.uniform(0, 1, 6) > 0.5).astype(float)
            sig_layer = nn.Sigmoid()

            def loss_fn():
                p = sig_layer.forward(z.data)
                loss, gp = nn.bce_loss(p, target)
                z.grad += sig_layer.backward(gp)
                return loss

            assert nn.grad_check(loss_fn, [z]) < 1e-4

    def test_mse_values(self):
        assert nn.mse_loss(np.array([1.0, 2.0]), np.array([1.0, 2.0]))[0] == 0
        loss, grad = nn.mse_loss(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
        assert loss == 1.0
        assert np.allclose(grad, [-1.0, -1.0])

    def test_mse_gradient(self):
        for seed in range(3):
            local = np.random.default_rng(seed)
            pred = nn.Tensor(local.standard_normal(5))
            target = local.standard_normal(5)

            def loss_fn():
                loss, g = nn.mse_loss(pred.data, target)
                pred.grad += g
                return loss

            assert nn.grad_check(loss_fn, [pred]) < 1e-7


class TestAdam:
    def test_first_step_is_signed_lr(self):
        p = nn.Tensor(np.zeros(3))
        opt = nn.Adam([p], lr=0.01)
        p.grad[:] = [0.5, -2.0, 1e-3]
        opt.step()
        assert np.allclose(p.data, [-0.01, 0.01, -0.01], atol=1e-4)

    def test_zero_gradient_no_move(self):
        p = nn.Tensor(np.array([1.0, -1.0]))
        opt = nn.Adam([p])
        opt.step()
        assert np.array_equal(p.data, [1.0, -1.0])
        assert opt.t == 1

    def test_quadratic_convergence(self):
        p = nn.Tensor(np.zeros(1))
        opt = nn.Adam([p], lr=0.1)
        for _ in range(5000):
            p.zero_grad()
            p.grad[:] = 2.0 * (p.data - 3.0)
            opt.step()
            if abs(p.data[0] - 3.0) < 1e-6:
                break
        assert abs(p.data[0] - 3.0) < 1e-6

    def test_deterministic(self):
        runs = []
        for _ in range(2):
            p = nn.Tensor(np.array([0.2, -0.4]))
            opt = nn.Adam([p], lr=0.05)
            for i in range(20):
                p.zero_grad()
                p.grad[:] = np.sin(p.data + i)
                opt.step()
            runs.append(p.data.copy())
        assert np.array_equal(runs[0], runs[1])


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        arrays = {
            "a.weight": rng.standard_normal((3, 4)),
            "b.running_var": rng.uniform(0, 2, 7),
        }
        path = tmp_path / "ck.npz"
        nn.save_params(path, arrays, {"note": "x"})
        back, meta = nn.load_params(path)
        assert meta["note"] == "x"
        for k, v in arrays.items():
            assert np.array_equal(back[k], v)
            assert back[k].dtype == v.dtype

    def test_version_checked(self, tmp_path):
        path = tmp_path / "ck.npz"
        nn.save_params(path, {"x": np.zeros(2)})
        import json

        import numpy as np_

        data = dict(np_.load(path))
        data["__meta__"] = np_.frombuffer(
            json.dumps({"checkpoint_version": 999}).encode(), dtype=np_.uint8)
        np_.savez(path, **data)
        with pytest.raises(ValueError, match="version"):
            nn.load_params(path)
