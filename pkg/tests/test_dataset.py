import json

import numpy as np
import pytest

from socd.baselines import NoisyEDFPolicy, UniformPolicy
from socd.config import (EnvConfig, MultiHopConfig, poisson_1hop_config,
                         single_hop_layout)
from socd.dataset import (DataFormatError, OfflineDataset, Transition,
                          dataset_config, generate, read_dataset,
                          write_dataset)


@pytest.fixture(scope="module")
def small_ds():
    cfg = poisson_1hop_config(episode_len=15)
    layout = single_hop_layout(cfg)
    policy = NoisyEDFPolicy(layout, cfg.budget_E0, cfg.weights, cfg.v_max)
    return generate(cfg, policy, num_episodes=4, seed=0)


class TestGenerate:
    def test_shape_and_header(self, small_ds):
        ds = small_ds
        assert len(ds.transitions) == 4 * 15
        assert ds.header["format"] == "socd-dataset-v1"
        assert ds.header["layout"] == {"obs_dim": 30, "action_dim": 22}
        assert not ds.multihop

    def test_reproducible(self):
        cfg = poisson_1hop_config(episode_len=10)
        layout = single_hop_layout(cfg)

        def make():
            pol = NoisyEDFPolicy(layout, cfg.budget_E0, cfg.weights, cfg.v_max)
            return generate(cfg, pol, num_episodes=2, seed=3)

        a, b = make(), make()
        for ta, tb in zip(a.transitions, b.transitions):
            assert np.array_equal(ta.state, tb.state)
            assert np.array_equal(ta.action, tb.action)
            assert ta.throughput_D == tb.throughput_D

    def test_next_state_chains_within_episode(self, small_ds):
        ep = small_ds.episode(1)
        for t in range(len(ep) - 1):
            assert np.array_equal(ep[t].next_state, ep[t + 1].state)
        assert ep[-1].terminal

    def test_consumption_matches_state_action_dot(self, small_ds):
        cfg = poisson_1hop_config(episode_len=15)
        layout = single_hop_layout(cfg)
        for tr in small_ds.transitions[:30]:
            expected = sum(
                float(np.dot(tr.state[q], tr.action[a]))
                for q, a in zip(layout.queue_slices, layout.action_slices)
            )
            assert tr.resource_E == pytest.approx(expected, abs=1e-12)
            assert float(tr.user_resource.sum()) == pytest.approx(expected, abs=1e-10)

    def test_summary_matches_episode_stats(self, small_ds):
        assert small_ds.header["summary"] == small_ds.episode_stats()


class TestRelabel:
    def test_affine_identity(self, small_ds):
        D = small_ds.throughputs()
        E = small_ds.consumptions()
        for lam in (0.0, 0.3, 1.7):
            assert np.allclose(small_ds.relabel(lam), D - lam * E, atol=1e-15)

    def test_negative_lambda_rejected(self, small_ds):
        with pytest.raises(ValueError):
            small_ds.relabel(-0.1)

    def test_vector_lambda_on_single_hop_rejected(self, small_ds):
        with pytest.raises(ValueError):
            small_ds.relabel(np.array([0.1, 0.2]))

    def test_vector_lambda_multihop(self):
        mh = MultiHopConfig(
            base=EnvConfig(num_users=2, deadlines=[4, 4], weights=[1.0, 1.0],
                           arrival_rates=[1.0, 1.0], episode_len=8),
            num_nodes=2, routes=[[1, 2], [2, 1]])
        from socd.config import multi_hop_layout
        layout = multi_hop_layout(mh)
        ds = generate(mh, UniformPolicy(layout, mh.base.budget_E0, mh.base.v_max),
                      num_episodes=2, seed=1)
        lam = np.array([0.2, 0.5])
        r = ds.relabel(lam)
        for k, tr in enumerate(ds.transitions):
            assert r[k] == pytest.approx(tr.throughput_D - float(lam @ tr.resource_E))
        # scalar lambda prices every node equally
        assert np.allclose(ds.relabel(0.3), ds.throughputs() - 0.3 * ds.consumptions())


class TestSampling:
    def test_pairs_without_replacement(self, small_ds):
        s, a = small_ds.sample_pairs(batch=20, seed=0)
        assert s.shape == (20, 30) and a.shape == (20, 22)
        # deterministic for a fixed seed
        s2, _ = small_ds.sample_pairs(batch=20, seed=0)
        assert np.array_equal(s, s2)

    def test_batch_too_large(self, small_ds):
        with pytest.raises(ValueError):
            small_ds.sample_pairs(batch=10 ** 6, seed=0)
        with pytest.raises(ValueError):
            small_ds.sample_trajectories(batch=100, seed=0)

    def test_trajectories_are_full_episodes(self, small_ds):
        trajs = small_ds.sample_trajectories(batch=2, seed=1)
        assert len(trajs) == 2
        assert all(len(tr) == 15 for tr in trajs)
        assert all(tr[-1].terminal for tr in trajs)


class TestIO:
    def test_round_trip_bit_exact(self, small_ds, tmp_path):
        path = str(tmp_path / "ds.jsonl")
        write_dataset(small_ds, path)
        back = read_dataset(path)
        assert back.header == small_ds.header
        for ta, tb in zip(small_ds.transitions, back.transitions):
            assert ta.state.tobytes() == tb.state.tobytes()
            assert ta.action.tobytes() == tb.action.tobytes()
            assert ta.throughput_D == tb.throughput_D
            assert ta.resource_E == tb.resource_E

    def test_bad_format_tag(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"format": "something-else"}\n')
        with pytest.raises(DataFormatError):
            read_dataset(str(path))

    def test_truncated_file(self, small_ds, tmp_path):
        path = str(tmp_path / "trunc.jsonl")
        write_dataset(small_ds, path)
        with open(path) as f:
            lines = f.readlines()
        with open(path, "w") as f:
            f.writelines(lines[:-3])
        with pytest.raises(DataFormatError):
            read_dataset(path)

    def test_corrupt_transition_line(self, small_ds, tmp_path):
        path = str(tmp_path / "corrupt.jsonl")
        write_dataset(small_ds, path)
        with open(path) as f:
            lines = f.readlines()
        lines[5] = "{not json}\n"
        with open(path, "w") as f:
            f.writelines(lines)
        with pytest.raises(DataFormatError):
            read_dataset(path)

    def test_tampered_config_hash(self, small_ds, tmp_path):
        path = str(tmp_path / "tampered.jsonl")
        write_dataset(small_ds, path)
        with open(path) as f:
            lines = f.readlines()
        header = json.loads(lines[0])
        header["config"]["budget_E0"] = 99.0
        lines[0] = json.dumps(header) + "\n"
        with open(path, "w") as f:
            f.writelines(lines)
        with pytest.raises(DataFormatError):
            read_dataset(path)

    def test_missing_file(self):
        with pytest.raises(DataFormatError):
            read_dataset("/nonexistent/ds.jsonl")

    def test_dataset_config_round_trip(self, small_ds):
        cfg = dataset_config(small_ds)
        ref = poisson_1hop_config(episode_len=15)
        assert cfg.to_dict() == ref.to_dict()
