"""Tensor engine: layer semantics, reverse-mode gradients, optimizer."""

import numpy as np
import pytest

from tomoforge.nn import (Add, AdamW, BatchNorm2d, Conv2d, LeakyReLU, Network,
                          NonFiniteError, Param, Sgd, Tensor4, build_denoiser,
                          load_checkpoint, parameter_count, save_checkpoint)

H = 1e-6          # central-difference step (double precision)
FD_ATOL = 1e-6    # below this both values count as zero


def agree(fd, an, tol):
    """Finite-difference agreement with an absolute floor for zeros."""
    return abs(fd - an) <= FD_ATOL or abs(fd - an) <= tol * max(abs(fd), abs(an))


def fd_input_grad(forward, x, r):
    """Central finite differences of sum(r * forward(x)) w.r.t. x."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += H
        xm = x.copy()
        xm[idx] -= H
        g[idx] = (np.sum(r * forward(xp)) - np.sum(r * forward(xm))) / (2 * H)
    return g


def assert_grads_match(fd, analytic, tol):
    assert fd.shape == analytic.shape
    for idx in np.ndindex(fd.shape):
        assert agree(fd[idx], analytic[idx], tol), (
            f"gradient mismatch at {idx}: fd={fd[idx]!r} analytic={analytic[idx]!r}")


def check_param_fd(loss, param, analytic, tol, rng=None, sample=None):
    flat = param.ravel()
    gflat = analytic.ravel()
    indices = range(flat.size)
    if sample is not None and flat.size > sample:
        indices = rng.choice(flat.size, size=sample, replace=False)
    for idx in indices:
        old = flat[idx]
        flat[idx] = old + H
        f1 = loss()
        flat[idx] = old - H
        f2 = loss()
        flat[idx] = old
        fd = (f1 - f2) / (2 * H)
        assert agree(fd, gflat[idx], tol), (
            f"param gradient mismatch at flat index {idx}: "
            f"fd={fd!r} analytic={gflat[idx]!r}")


class TestConv2d:
    def test_identity_kernel_preserves_input(self):
        conv = Conv2d(1, 1, dtype=np.float64)
        conv.weight.value[:] = 0.0
        conv.weight.value[0, 0, 1, 1] = 1.0
        conv.bias.value[:] = 0.0
        x = np.random.default_rng(0).standard_normal((1, 1, 9, 9))
        assert np.array_equal(conv.forward(x), x)

    def test_ones_kernel_on_constant_input(self):
        conv = Conv2d(1, 2, dtype=np.float64)
        conv.weight.value[:] = 1.0
        conv.bias.value[:] = np.array([0.5, -1.0])
        c = 3.0
        y = conv.forward(np.full((1, 1, 6, 6), c))
        # interior pixels see all nine taps
        assert np.allclose(y[0, 0, 1:-1, 1:-1], 9 * c + 0.5)
        assert np.allclose(y[0, 1, 1:-1, 1:-1], 9 * c - 1.0)
        # corners see four taps
        assert y[0, 0, 0, 0] == pytest.approx(4 * c + 0.5)

    @pytest.mark.parametrize("batch", [1, 2], ids=["fast-path", "general-path"])
    def test_gradients_match_finite_differences(self, batch):
        rng = np.random.default_rng(1)
        conv = Conv2d(2, 3, rng=rng, dtype=np.float64)
        x = rng.standard_normal((batch, 2, 5, 6))
        r = rng.standard_normal((batch, 3, 5, 6))
        conv.forward(x)
        gx = conv.backward(r)
        assert_grads_match(fd_input_grad(conv.forward, x, r), gx, 1e-5)

        def loss():
            return float(np.sum(r * conv.forward(x)))

        conv.forward(x)
        conv.backward(r)
        check_param_fd(loss, conv.weight.value, conv.weight.grad, 1e-5)
        check_param_fd(loss, conv.bias.value, conv.bias.grad, 1e-5)

    def test_zero_upstream_gradient_gives_zero_gradients(self):
        conv = Conv2d(2, 2, dtype=np.float64)
        x = np.random.default_rng(2).standard_normal((1, 2, 4, 4))
        conv.forward(x)
        gx = conv.backward(np.zeros((1, 2, 4, 4)))
        assert np.all(gx == 0.0)
        assert np.all(conv.weight.grad == 0.0)
        assert np.all(conv.bias.grad == 0.0)

    def test_impulse_upstream_stamps_kernel(self):
        # d(sum g*y)/dx for a single-pixel upstream impulse reproduces the
        # kernel around that pixel: gx[c, i0+p-1, j0+q-1] = w[o0, c, p, q].
        rng = np.random.default_rng(3)
        conv = Conv2d(2, 3, rng=rng, dtype=np.float64)
        x = rng.standard_normal((1, 2, 7, 7))
        conv.forward(x)
        gy = np.zeros((1, 3, 7, 7))
        o0, i0, j0 = 1, 3, 4
        gy[0, o0, i0, j0] = 1.0
        gx = conv.backward(gy)
        for c in range(2):
            patch = gx[0, c, i0 - 1:i0 + 2, j0 - 1:j0 + 2]
            assert np.allclose(patch, conv.weight.value[o0, c])
        mask = np.ones((1, 2, 7, 7), dtype=bool)
        mask[:, :, i0 - 1:i0 + 2, j0 - 1:j0 + 2] = False
        assert np.all(gx[mask] == 0.0)

    def test_backward_before_forward_is_an_error(self):
        conv = Conv2d(1, 1)
        with pytest.raises(RuntimeError, match="before forward"):
            conv.backward(np.zeros((1, 1, 4, 4)))

    def test_channel_mismatch_rejected(self):
        conv = Conv2d(3, 1)
        with pytest.raises(ValueError, match="conv expects"):
            conv.forward(np.zeros((1, 2, 4, 4)))


class TestBatchNorm:
    def test_constant_channel_maps_to_zero(self):
        bn = BatchNorm2d(2, dtype=np.float64)
        x = np.stack([np.full((4, 4), 7.0), np.full((4, 4), -3.0)])[None]
        y = bn.forward(x)
        assert np.allclose(y, 0.0)

    def test_normalizes_mean_and_variance(self):
        bn = BatchNorm2d(3, dtype=np.float64)
        x = np.random.default_rng(4).standard_normal((2, 3, 8, 8)) * 5 + 2
        y = bn.forward(x)
        assert np.abs(y.mean(axis=(0, 2, 3))).max() <= 1e-6
        assert np.abs(y.var(axis=(0, 2, 3)) - 1.0).max() <= 1e-4

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(5)
        bn = BatchNorm2d(2, dtype=np.float64)
        bn.gamma.value[:] = rng.standard_normal(2)
        bn.beta.value[:] = rng.standard_normal(2)
        x = rng.standard_normal((1, 2, 4, 5))
        r = rng.standard_normal((1, 2, 4, 5))
        bn.forward(x)
        gx = bn.backward(r)
        assert_grads_match(fd_input_grad(bn.forward, x, r), gx, 1e-4)

        def loss():
            return float(np.sum(r * bn.forward(x)))

        bn.forward(x)
        bn.backward(r)
        check_param_fd(loss, bn.gamma.value, bn.gamma.grad, 1e-4)
        check_param_fd(loss, bn.beta.value, bn.beta.grad, 1e-4)

    def test_single_element_channel_rejected(self):
        bn = BatchNorm2d(1)
        with pytest.raises(ValueError, match="at least 2"):
            bn.forward(np.zeros((1, 1, 1, 1)))

    def test_backward_before_forward_is_an_error(self):
        bn = BatchNorm2d(1)
        with pytest.raises(RuntimeError, match="before forward"):
            bn.backward(np.zeros((1, 1, 4, 4)))


class TestLeakyReLU:
    def test_positive_passthrough(self):
        act = LeakyReLU(0.01)
        assert act.forward(np.array([[[[5.0]]]]))[0, 0, 0, 0] == 5.0

    def test_negative_scaled_by_slope(self):
        act = LeakyReLU(0.01)
        assert act.forward(np.array([[[[-1.0]]]]))[0, 0, 0, 0] == pytest.approx(-0.01)

    def test_derivative_off_zero_matches_finite_differences(self):
        act = LeakyReLU(0.01)
        rng = np.random.default_rng(6)
        x = rng.standard_normal((1, 2, 4, 4))
        x[np.abs(x) < 1e-3] = 0.25  # keep away from the kink
        r = rng.standard_normal(x.shape)
        act.forward(x)
        gx = act.backward(r)
        assert_grads_match(fd_input_grad(act.forward, x, r), gx, 1e-6)

    def test_subgradient_at_exact_zero_is_slope(self):
        act = LeakyReLU(0.01)
        x = np.zeros((1, 1, 2, 2))
        assert np.all(act.forward(x) == 0.0)
        gy = np.full((1, 1, 2, 2), 2.0)
        assert np.allclose(act.backward(gy), 0.02)

    def test_backward_before_forward_is_an_error(self):
        with pytest.raises(RuntimeError, match="before forward"):
            LeakyReLU().backward(np.zeros((1, 1, 2, 2)))


class TestAdd:
    def test_forward_and_backward(self):
        add = Add()
        a = np.arange(8.0).reshape(1, 2, 2, 2)
        b = np.ones((1, 2, 2, 2))
        assert np.array_equal(add.forward(a, b), a + b)
        ga, gb = add.backward(np.full((1, 2, 2, 2), 3.0))
        assert np.all(ga == 3.0) and np.all(gb == 3.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            Add().forward(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 3)))

    def test_backward_before_forward_is_an_error(self):
        with pytest.raises(RuntimeError, match="before forward"):
            Add().backward(np.zeros((1, 1, 2, 2)))


class TestNetwork:
    def test_zeroed_final_conv_gives_zero_output(self):
        net = build_denoiser(mid_blocks=2, features=4, seed=0, dtype=np.float64)
        final = net.layers[-1]
        final.weight.value[:] = 0.0
        final.bias.value[:] = 0.0
        x = np.random.default_rng(7).standard_normal((1, 1, 16, 16))
        assert np.all(net.forward(x) == 0.0)

    def test_shape_preserved(self):
        net = build_denoiser(seed=0)
        x = np.random.default_rng(8).standard_normal((1, 1, 64, 64)).astype(np.float32)
        assert net.forward(x).shape == (1, 1, 64, 64)

    def test_parameter_count_matches_arithmetic(self):
        features, blocks = 64, 28
        net = build_denoiser(mid_blocks=blocks, features=features, seed=0)
        convs = sum(1 for l in net.layers if isinstance(l, Conv2d))
        assert convs == 30
        expected = (features * 1 * 9 + features                     # first conv
                    + blocks * (features * features * 9 + features)  # mid convs
                    + blocks * 2 * features                          # BN affine
                    + 1 * features * 9 + 1)                          # last conv
        assert parameter_count(net) == expected == 1_038_785

    def test_composed_toy_network_gradients(self):
        # 3 conv layers, 8 channels, 16x16, double precision.
        rng = np.random.default_rng(9)
        net = build_denoiser(mid_blocks=1, features=8, seed=3, dtype=np.float64)
        x = rng.standard_normal((1, 1, 16, 16))
        r = rng.standard_normal((1, 1, 16, 16))
        net.forward(x)
        gx = net.backward(r)

        def forward_only(xv):
            return net.forward(xv)

        fd = fd_input_grad(forward_only, x, r)
        net.forward(x)
        net.backward(r)
        assert_grads_match(fd, gx, 1e-4)

        def loss():
            return float(np.sum(r * net.forward(x)))

        net.forward(x)
        net.backward(r)
        for p in net.parameters():
            check_param_fd(loss, p.value, p.grad, 1e-4, rng=rng, sample=10)

    def test_tensor4_round_trip(self):
        net = build_denoiser(mid_blocks=1, features=4, seed=1)
        img = np.random.default_rng(10).standard_normal((12, 12))
        out = net.forward(Tensor4.from_image(img))
        assert isinstance(out, Tensor4)
        assert out.to_image().shape == (12, 12)
        with pytest.raises(ValueError, match="4-D"):
            Tensor4(np.zeros((3, 3)))

    def test_non_finite_parameter_aborts_with_layer_diagnostic(self):
        net = build_denoiser(mid_blocks=1, features=4, seed=2)
        net.layers[2].weight.value[0, 0, 0, 0] = np.nan
        x = np.random.default_rng(11).standard_normal((1, 1, 8, 8)).astype(np.float32)
        with pytest.raises(NonFiniteError, match="layer 2"):
            net.forward(x)

    def test_non_finite_gradient_aborts(self):
        net = build_denoiser(mid_blocks=1, features=4, seed=2)
        x = np.random.default_rng(12).standard_normal((1, 1, 8, 8)).astype(np.float32)
        net.forward(x)
        with pytest.raises(NonFiniteError):
            net.backward(np.full((1, 1, 8, 8), np.inf, dtype=np.float32))

    def test_initialization_is_deterministic(self):
        a = build_denoiser(mid_blocks=2, features=8, seed=42)
        b = build_denoiser(mid_blocks=2, features=8, seed=42)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert np.array_equal(pa.value, pb.value)
        c = build_denoiser(mid_blocks=2, features=8, seed=43)
        assert not all(np.array_equal(pa.value, pc.value)
                       for pa, pc in zip(a.parameters(), c.parameters()))

    def test_checkpoint_round_trip(self, tmp_path):
        net = build_denoiser(mid_blocks=1, features=4, seed=5)
        path = tmp_path / "weights.bin"
        save_checkpoint(net, path, seed=5)
        clone = build_denoiser(mid_blocks=1, features=4, seed=99)
        manifest = load_checkpoint(clone, path)
        assert manifest["seed"] == 5
        for pa, pb in zip(net.parameters(), clone.parameters()):
            assert np.array_equal(pa.value, pb.value)
        other = build_denoiser(mid_blocks=2, features=4, seed=0)
        with pytest.raises(ValueError, match="layout"):
            load_checkpoint(other, path)


class TestOptimizers:
    def test_zero_gradient_without_decay_keeps_parameters(self):
        p = Param(np.array([1.0, -2.0], dtype=np.float32))
        p.grad = np.zeros(2, dtype=np.float32)
        opt = AdamW([p], lr=1e-3, weight_decay=0.0)
        opt.step()
        assert np.array_equal(p.value, np.array([1.0, -2.0], dtype=np.float32))

    def test_first_step_magnitude_is_learning_rate(self):
        # Bias-corrected first AdamW step is lr * sign(g) for |g| >> eps.
        for g in (4.2, -0.3):
            p = Param(np.array([1.0]))
            p.grad = np.array([g])
            opt = AdamW([p], lr=1e-3, weight_decay=0.0)
            opt.step()
            delta = float(p.value[0]) - 1.0
            assert delta == pytest.approx(-1e-3 * np.sign(g), rel=1e-3)

    def test_defaults_follow_training_setup(self):
        opt = AdamW([Param(np.zeros(1))])
        assert opt.lr == 1e-3
        assert (opt.beta1, opt.beta2) == (0.9, 0.999)
        assert opt.eps == 1e-8
        assert opt.weight_decay == 1e-2

    def test_decoupled_decay_shrinks_parameters(self):
        p = Param(np.array([10.0]))
        p.grad = np.zeros(1)
        opt = AdamW([p], lr=0.1, weight_decay=0.5)
        opt.step()
        assert p.value[0] == pytest.approx(10.0 * (1 - 0.1 * 0.5))

    def test_moment_state_tracks_parameters(self):
        p = Param(np.zeros((3, 4)))
        opt = AdamW([p])
        assert opt._m[0].shape == (3, 4)
        assert opt._v[0].shape == (3, 4)
        assert opt.step_count == 0
        p.grad = np.ones((3, 4))
        opt.step()
        assert opt.step_count == 1

    def test_shape_mismatch_rejected(self):
        p = Param(np.zeros(3))
        p.grad = np.zeros(4)
        with pytest.raises(ValueError, match="shape"):
            AdamW([p]).step()
        with pytest.raises(ValueError, match="shape"):
            Sgd([p]).step()

    def test_sgd_is_plain_descent(self):
        p = Param(np.array([2.0]))
        p.grad = np.array([0.5])
        Sgd([p], lr=0.1).step()
        assert p.value[0] == pytest.approx(2.0 - 0.05)
