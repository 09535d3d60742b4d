import numpy as np
import pytest

from socd.nn import (Adam, DenseNet, FourierTimeEmbedding, load_net, save_net)


def finite_diff_grads(net, x, grad_out, h=1e-6):
    """Central finite differences of sum(grad_out * net(x)) w.r.t. params."""
    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        flat = p.ravel()
        gflat = g.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = float(np.sum(grad_out * net.forward(x)))
            flat[j] = orig - h
            dn = float(np.sum(grad_out * net.forward(x)))
            flat[j] = orig
            gflat[j] = (up - dn) / (2 * h)
        grads.append(g)
    return grads


class TestDenseNet:
    def test_shapes(self):
        net = DenseNet([3, 5, 2], ["silu", "identity"], rng=0)
        y = net.forward(np.zeros((7, 3)))
        assert y.shape == (7, 2)

    def test_bad_activation(self):
        with pytest.raises(ValueError):
            DenseNet([2, 2], ["tanh"], rng=0)

    def test_input_dim_check(self):
        net = DenseNet([3, 2], ["identity"], rng=0)
        with pytest.raises(ValueError):
            net.forward(np.zeros((1, 4)))

    def test_backward_before_forward_raises(self):
        net = DenseNet([2, 2], ["identity"], rng=0)
        with pytest.raises(RuntimeError):
            net.backward(np.zeros((1, 2)))

    @pytest.mark.parametrize("acts", [["identity"], ["silu", "identity"],
                                      ["relu", "silu", "identity"]])
    def test_gradients_match_finite_differences(self, acts):
        sizes = [3] + [4] * (len(acts) - 1) + [2]
        net = DenseNet(sizes, acts, rng=1)
        rng = np.random.default_rng(2)
        x = rng.standard_normal((5, 3))
        # keep relu preactivations away from the kink
        grad_out = rng.standard_normal((5, 2))
        net.forward(x)
        dWs, dbs, dx = net.backward(grad_out)
        analytic = net.grads_as_list(dWs, dbs)
        numeric = finite_diff_grads(net, x, grad_out)
        for a, n in zip(analytic, numeric):
            assert np.max(np.abs(a - n)) < 1e-4

    def test_input_gradient_matches_finite_differences(self):
        net = DenseNet([3, 6, 2], ["silu", "identity"], rng=3)
        rng = np.random.default_rng(4)
        x = rng.standard_normal((2, 3))
        grad_out = rng.standard_normal((2, 2))
        net.forward(x)
        _, _, dx = net.backward(grad_out)
        h = 1e-6
        num = np.zeros_like(x)
        for i in range(x.shape[0]):
            for j in range(x.shape[1]):
                xp, xm = x.copy(), x.copy()
                xp[i, j] += h
                xm[i, j] -= h
                num[i, j] = (np.sum(grad_out * net.forward(xp))
                             - np.sum(grad_out * net.forward(xm))) / (2 * h)
        assert np.max(np.abs(dx - num)) < 1e-4

    def test_copy_is_independent(self):
        net = DenseNet([2, 2], ["identity"], rng=0)
        dup = net.copy()
        net.W[0][0, 0] += 1.0
        assert dup.W[0][0, 0] != net.W[0][0, 0]

    def test_check_finite(self):
        net = DenseNet([2, 2], ["identity"], rng=0)
        net.check_finite()
        net.W[0][0, 0] = np.nan
        with pytest.raises(FloatingPointError):
            net.check_finite()


class TestAdam:
    def test_quadratic_descent(self):
        # minimize ||p||^2; Adam should shrink the parameter
        p = [np.array([3.0, -2.0])]
        opt = Adam(p, lr=0.05)
        for _ in range(500):
            opt.step(p, [2.0 * p[0]])
        assert np.max(np.abs(p[0])) < 1e-2

    def test_nan_grad_raises(self):
        p = [np.zeros(2)]
        opt = Adam(p, lr=0.1)
        with pytest.raises(FloatingPointError):
            opt.step(p, [np.array([np.nan, 0.0])])

    def test_first_step_magnitude(self):
        # with bias correction the first update is ~lr * sign(g)
        p = [np.array([0.0])]
        opt = Adam(p, lr=0.1)
        opt.step(p, [np.array([5.0])])
        assert p[0][0] == pytest.approx(-0.1, rel=1e-6)


class TestTimeEmbedding:
    def test_constant_norm(self):
        emb = FourierTimeEmbedding(32, scale=30.0, seed=0)
        t = np.linspace(0, 1, 100)
        norms = np.sum(emb(t) ** 2, axis=1)
        assert np.max(np.abs(norms - 16.0)) < 1e-12

    def test_fixed_frequencies(self):
        a = FourierTimeEmbedding(32, seed=5)
        b = FourierTimeEmbedding(32, seed=5)
        assert np.array_equal(a.freqs, b.freqs)

    def test_odd_dim_rejected(self):
        with pytest.raises(ValueError):
            FourierTimeEmbedding(31)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        net = DenseNet([4, 8, 3], ["silu", "identity"], rng=7)
        path = str(tmp_path / "net.bin")
        save_net(net, path)
        back = load_net(path)
        assert back.sizes == net.sizes
        assert back.activations == net.activations
        for p, q in zip(net.parameters(), back.parameters()):
            assert p.tobytes() == q.tobytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b'{"format": "other"}\n')
        with pytest.raises(ValueError):
            load_net(str(path))
