import numpy as np
import pytest

from socd.critic import CriticPair, mc_returns, train_critic


class TestMcReturns:
    def test_hand_values(self):
        # gamma=0.5, r=[1,2,4]: G = [1+0.5*(2+0.5*4)=3, 4, 4]
        G = mc_returns([1.0, 2.0, 4.0], gamma=0.5)
        assert G.tolist() == [3.0, 4.0, 4.0]

    def test_gamma_zero_limit(self):
        r = np.array([1.0, 2.0, 3.0])
        assert np.allclose(mc_returns(r, gamma=1e-12), r)

    def test_gamma_one_is_suffix_sum(self):
        r = np.array([1.0, 2.0, 3.0])
        assert mc_returns(r, gamma=1.0).tolist() == [6.0, 5.0, 3.0]

    def test_empty(self):
        assert mc_returns([], gamma=0.8).size == 0


class TestCriticPair:
    def test_param_validation(self):
        with pytest.raises(ValueError):
            CriticPair(2, 2, gamma=0.0)
        with pytest.raises(ValueError):
            CriticPair(2, 2, rho=1.5)

    def test_q_value_is_min(self):
        pair = CriticPair(2, 1, hidden=(8,), seed=0)
        s, a = np.zeros((4, 2)), np.zeros((4, 1))
        x = pair._join(s, a)
        y1 = pair.q1.forward(x).ravel()
        y2 = pair.q2.forward(x).ravel()
        assert np.array_equal(pair.q_value(s, a), np.minimum(y1, y2))

    def test_twins_differ_at_init(self):
        pair = CriticPair(2, 1, hidden=(8,), seed=0)
        assert not np.array_equal(pair.q1.W[0], pair.q2.W[0])

    def test_grads_route_through_argmin(self):
        pair = CriticPair(1, 1, hidden=(4,), seed=1)
        s = np.random.default_rng(0).standard_normal((8, 1))
        a = np.zeros((8, 1))
        x = pair._join(s, a)
        take1 = pair.q1.forward(x).ravel() <= pair.q2.forward(x).ravel()
        _, g1, g2 = pair.loss_and_grads(s, a, np.zeros(8))
        if np.all(take1):
            assert all(np.all(g == 0) for g in g2)
        elif not np.any(take1):
            assert all(np.all(g == 0) for g in g1)
        else:
            assert any(np.any(g != 0) for g in g1)
            assert any(np.any(g != 0) for g in g2)

    def test_loss_gradients_match_finite_differences(self):
        pair = CriticPair(2, 1, hidden=(6,), seed=2)
        rng = np.random.default_rng(3)
        s = rng.standard_normal((5, 2))
        a = rng.standard_normal((5, 1))
        G = rng.standard_normal(5)
        _, g1, g2 = pair.loss_and_grads(s, a, G)
        h = 1e-6
        for net, grads in ((pair.q1, g1), (pair.q2, g2)):
            for p, g in zip(net.parameters(), grads):
                flat, gflat = p.ravel(), g.ravel()
                for j in rng.integers(0, flat.size, size=min(4, flat.size)):
                    orig = flat[j]
                    flat[j] = orig + h
                    up = pair.loss_and_grads(s, a, G)[0]
                    flat[j] = orig - h
                    dn = pair.loss_and_grads(s, a, G)[0]
                    flat[j] = orig
                    assert abs((up - dn) / (2 * h) - gflat[j]) < 1e-4

    def test_soft_update_convex_combination(self):
        pair = CriticPair(2, 1, hidden=(4,), seed=0)
        before = [p.copy() for p in pair.target1.parameters()]
        online = [p.copy() for p in pair.q1.parameters()]
        pair.q1.W[0][:] += 1.0
        online = [p.copy() for p in pair.q1.parameters()]
        pair.soft_update(rho=0.25)
        for tp, b, o in zip(pair.target1.parameters(), before, online):
            assert np.allclose(tp, 0.25 * o + 0.75 * b, atol=1e-12)

    def test_soft_update_rho_one_copies(self):
        pair = CriticPair(2, 1, hidden=(4,), seed=0)
        pair.q1.W[0][:] += 3.0
        pair.soft_update(rho=1.0)
        assert np.array_equal(pair.target1.W[0], pair.q1.W[0])

    def test_empty_batch(self):
        pair = CriticPair(1, 1, hidden=(4,))
        with pytest.raises(ValueError):
            pair.loss_and_grads(np.zeros((0, 1)), np.zeros((0, 1)), np.zeros(0))


class TestTraining:
    def test_three_state_chain_oracle(self):
        # deterministic chain s0 -> s1 -> s2 (terminal), rewards 1, 2, 4;
        # gamma 0.5 gives exact returns [3, 4, 4] to regress onto
        states = np.array([[0.0], [1.0], [2.0]])
        actions = np.zeros((3, 1))
        G = mc_returns([1.0, 2.0, 4.0], gamma=0.5)
        pair = CriticPair(1, 1, hidden=(32, 32), gamma=0.5, seed=0)
        train_critic(pair, states, actions, G, steps=2000, lr=1e-3, seed=0)
        q = pair.q_value(states, actions)
        assert np.max(np.abs(q - G)) < 0.05

    def test_loss_decreases(self):
        rng = np.random.default_rng(0)
        s = rng.standard_normal((128, 3))
        a = rng.standard_normal((128, 2))
        G = s[:, 0] + a[:, 1]
        pair = CriticPair(3, 2, hidden=(32,), seed=1)
        losses = train_critic(pair, s, a, G, steps=500, lr=1e-3, seed=0)
        assert np.mean(losses[-50:]) < 0.2 * np.mean(losses[:50])

    def test_targets_track_online(self):
        rng = np.random.default_rng(0)
        s, a = rng.standard_normal((32, 2)), rng.standard_normal((32, 1))
        G = rng.standard_normal(32)
        pair = CriticPair(2, 1, hidden=(8,), rho=0.05, seed=0)
        gap0 = np.max(np.abs(pair.q1.flat_parameters() - pair.target1.flat_parameters()))
        assert gap0 == 0.0
        train_critic(pair, s, a, G, steps=50, lr=1e-2, seed=0)
        # targets lag but move toward the online nets
        gap = np.max(np.abs(pair.q1.flat_parameters() - pair.target1.flat_parameters()))
        assert 0.0 < gap < np.max(np.abs(pair.q1.flat_parameters())) + 1.0
