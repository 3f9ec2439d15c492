import numpy as np
import pytest

from contrailseg.gradcheck import check_network
from contrailseg.nn import (
    AdamState,
    NetConfig,
    UNet,
    adam_step,
    conv2d_backward,
    conv2d_forward,
    init_params,
    load_checkpoint,
    maxpool2_backward,
    maxpool2_forward,
    save_checkpoint,
    sigmoid,
    upsample2_backward,
    upsample2_forward,
    zero_params,
)

SMALL = NetConfig(in_channels=3, base_width=4, depth=2, seed=0)


def loop_conv(x, w, b, pad):
    """Direct nested-loop cross-correlation on (C, N, H, W)."""
    c, n, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho, wo = h + 2 * pad - k + 1, wd + 2 * pad - k + 1
    y = np.zeros((o, n, ho, wo))
    for oc in range(o):
        for bi in range(n):
            for i in range(ho):
                for j in range(wo):
                    y[oc, bi, i, j] = np.sum(xp[:, bi, i : i + k, j : j + k] * w[oc]) + b[oc]
    return y


class TestPrimitives:
    def test_identity_kernel(self):
        x = np.random.default_rng(0).standard_normal((2, 3, 5, 6))
        w = np.zeros((2, 2, 3, 3))
        w[0, 0, 1, 1] = w[1, 1, 1, 1] = 1.0
        y, _ = conv2d_forward(x, w, np.zeros(2), 1)
        np.testing.assert_array_equal(y, x)

    def test_conv_matches_loops(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((3, 2, 5, 4))
        w = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        y, _ = conv2d_forward(x, w, b, 1)
        np.testing.assert_allclose(y, loop_conv(x, w, b, 1), atol=1e-12)

    def test_conv_gradient_closed_form(self):
        # L = sum(y * r) is linear: dL/dw[o,c,i,j] = sum r[o] * shifted x[c], dL/db = sum r
        rng = np.random.default_rng(2)
        x = rng.standard_normal((2, 2, 4, 4))
        w = rng.standard_normal((3, 2, 3, 3))
        r = rng.standard_normal((3, 2, 4, 4))
        y, cols = conv2d_forward(x, w, np.zeros(3), 1)
        dx, dw, db = conv2d_backward(r, cols, x.shape, w, 1)
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        for o in range(3):
            for c in range(2):
                for i in range(3):
                    for j in range(3):
                        ref = np.sum(r[o] * xp[c, :, i : i + 4, j : j + 4])
                        assert dw[o, c, i, j] == pytest.approx(ref, abs=1e-12)
        np.testing.assert_allclose(db, r.sum(axis=(1, 2, 3)))
        # dx via the adjoint identity <conv(x), r> = <x, dx>
        e = np.zeros_like(x)
        e[1, 0, 2, 3] = 1.0
        ye, _ = conv2d_forward(e, w, np.zeros(3), 1)
        assert np.sum(ye * r) == pytest.approx(dx[1, 0, 2, 3], abs=1e-12)

    def test_pool_and_upsample_adjoint(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 1, 4, 6))
        y, idx = maxpool2_forward(x)
        np.testing.assert_array_equal(y, x.reshape(2, 1, 2, 2, 3, 2).max(axis=(3, 5)))
        dy = rng.standard_normal(y.shape)
        dx = maxpool2_backward(dy, idx)
        assert np.sum(dx) == pytest.approx(np.sum(dy))
        assert np.count_nonzero(dx) == dy.size
        u = upsample2_forward(y)
        assert u.shape == x.shape
        du = rng.standard_normal(u.shape)
        assert np.sum(u * du) == pytest.approx(np.sum(y * upsample2_backward(du)))

    def test_sigmoid_stable(self):
        z = np.array([-1000.0, -1.0, 0.0, 1.0, 1000.0])
        s = sigmoid(z)
        assert np.all(np.isfinite(s))
        np.testing.assert_allclose(s, [0.0, 1 / (1 + np.e), 0.5, 1 / (1 + np.exp(-1)), 1.0])


class TestNetwork:
    def test_zero_weights_give_half(self):
        net = zero_params(SMALL)
        probs, _ = net.forward(np.random.default_rng(0).uniform(size=(2, 3, 8, 8)).astype(np.float32))
        assert probs.shape == (2, 1, 8, 8)
        assert np.all(probs == 0.5)

    @pytest.mark.parametrize("cfg", [SMALL, NetConfig(), NetConfig(in_channels=1, base_width=2, depth=1)])
    def test_shape_contract(self, cfg):
        s = 2**cfg.depth * 3
        x = np.zeros((1, cfg.in_channels, s, 2 * s), dtype=np.float32)
        assert init_params(cfg).forward(x)[0].shape == (1, 1, s, 2 * s)

    def test_deterministic_forward(self):
        x = np.random.default_rng(1).uniform(size=(1, 3, 16, 16)).astype(np.float32)
        a = init_params(SMALL).forward(x)[0]
        b = init_params(SMALL).forward(x)[0]
        assert a.tobytes() == b.tobytes()

    def test_input_validation(self):
        net = init_params(SMALL)
        with pytest.raises(ValueError):
            net.forward(np.zeros((1, 3, 10, 8), dtype=np.float32))
        with pytest.raises(ValueError):
            net.forward(np.zeros((1, 2, 8, 8), dtype=np.float32))
        with pytest.raises(ValueError):
            net.forward(np.zeros((3, 8, 8), dtype=np.float32))
        with pytest.raises(ValueError):
            net.forward(np.full((1, 3, 8, 8), np.nan, dtype=np.float32))

    def test_zero_grad_output(self):
        net = init_params(SMALL)
        probs, cache = net.forward(np.ones((1, 3, 8, 8), dtype=np.float32))
        grads = net.backward(cache, np.zeros_like(probs))
        assert set(grads) == set(net.params)
        assert all(not np.any(g) for g in grads.values())

    def test_stale_cache_rejected(self):
        net = init_params(SMALL)
        probs, cache = net.forward(np.ones((1, 3, 8, 8), dtype=np.float32))
        grads = net.backward(cache, np.ones_like(probs))
        net.step(grads, AdamState())
        with pytest.raises(ValueError):
            net.backward(cache, np.ones_like(probs))
        with pytest.raises(ValueError):
            init_params(SMALL).backward(cache, np.ones_like(probs))

    def test_grad_output_shape_checked(self):
        net = init_params(SMALL)
        _, cache = net.forward(np.ones((1, 3, 8, 8), dtype=np.float32))
        with pytest.raises(ValueError):
            net.backward(cache, np.ones((1, 1, 4, 4), dtype=np.float32))

    def test_sampled_gradient_check(self):
        report = check_network(max_entries=8, seed=3)
        assert report.checked > 0
        assert report.passed, report.per_tensor


class TestInit:
    def test_same_seed_same_params(self):
        a, b = init_params(SMALL), init_params(SMALL)
        assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
        c = init_params(NetConfig(base_width=4, depth=2, seed=1))
        assert not np.array_equal(a.params["mid.conv1.w"], c.params["mid.conv1.w"])

    def test_he_variance(self):
        net = init_params(NetConfig())
        checked = 0
        for name, shape in net.config.layer_shapes().items():
            fan_in = shape[1] * shape[2] * shape[3]
            if fan_in < 72:
                continue
            var = float(np.var(net.params[name + ".w"].astype(np.float64)))
            assert abs(var / (2 / fan_in) - 1) < 0.3, name
            assert not np.any(net.params[name + ".b"])
            checked += 1
        assert checked >= 8

    def test_param_names_validated(self):
        net = init_params(SMALL)
        params = dict(net.params)
        params["head.w"] = np.zeros((2, 4, 1, 1), dtype=np.float32)
        with pytest.raises(ValueError):
            UNet(SMALL, params)


class TestAdam:
    def test_zero_grad_no_change(self):
        p = {"w": np.array([1.5, -2.0])}
        adam_step(p, {"w": np.zeros(2)}, AdamState())
        np.testing.assert_array_equal(p["w"], [1.5, -2.0])

    @pytest.mark.parametrize("g", [3.0, -0.02, 1e-9])
    def test_first_step_closed_form(self, g):
        p = {"w": np.array([0.0])}
        st = AdamState(lr=1e-3)
        adam_step(p, {"w": np.array([g])}, st)
        assert p["w"][0] == pytest.approx(-1e-3 * g / (abs(g) + 1e-8), rel=1e-9)
        assert st.t == 1

    def test_deterministic_trajectory(self):
        rng = np.random.default_rng(0)
        grads = [{"w": rng.standard_normal(5).astype(np.float32)} for _ in range(20)]

        def run():
            p = {"w": np.ones(5, dtype=np.float32)}
            st = AdamState()
            for g in grads:
                adam_step(p, g, st)
            return p["w"].tobytes()

        assert run() == run()

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())
        with pytest.raises(ValueError):
            adam_step({"w": np.zeros(2)}, {"v": np.zeros(2)}, AdamState())


class TestCheckpoint:
    def test_round_trip_with_state(self, tmp_path):
        net = init_params(SMALL)
        x = np.random.default_rng(0).uniform(size=(1, 3, 8, 8)).astype(np.float32)
        probs, cache = net.forward(x)
        st = AdamState(lr=3e-4)
        net.step(net.backward(cache, probs - 0.5), st)
        path = tmp_path / "c.cnet"
        save_checkpoint(path, net, st)
        back, st2 = load_checkpoint(path)
        assert back.config == net.config
        assert all(np.array_equal(back.params[k], net.params[k]) for k in net.params)
        assert (st2.lr, st2.t) == (3e-4, 1)
        assert all(np.array_equal(st2.m[k], st.m[k]) for k in st.m)
        save_checkpoint(tmp_path / "d.cnet", back, st2)
        assert (tmp_path / "d.cnet").read_bytes() == path.read_bytes()

    def test_without_state(self, tmp_path):
        save_checkpoint(tmp_path / "c.cnet", init_params(SMALL))
        net, st = load_checkpoint(tmp_path / "c.cnet")
        assert st is None and net.config == SMALL

    def test_corrupt(self, tmp_path):
        path = tmp_path / "c.cnet"
        save_checkpoint(path, init_params(SMALL))
        data = path.read_bytes()
        path.write_bytes(data[:-10])
        with pytest.raises(ValueError):
            load_checkpoint(path)
        path.write_bytes(data[:20])
        with pytest.raises(ValueError):
            load_checkpoint(path)
        path.write_bytes(b"XXXX" + data[4:])
        with pytest.raises(ValueError):
            load_checkpoint(path)
