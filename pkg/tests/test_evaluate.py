import numpy as np
import pytest

from socd.baselines import EDFPolicy, UniformPolicy, ZeroPolicy
from socd.config import (EnvConfig, MultiHopConfig, poisson_1hop_config,
                         single_hop_layout)
from socd.evaluate import (EvalReport, evaluate, read_sweep_table, sweep,
                           write_sweep_table)


class TestReport:
    def test_aggregates(self):
        rep = EvalReport(policy_id="x", rounds=3, slots=10,
                         round_throughput=[1.0, 2.0, 3.0],
                         round_consumption=[4.0, 4.0, 4.0],
                         clipped=0, config_hash="h", seed=0)
        assert rep.throughput_mean == 2.0
        assert rep.throughput_std == pytest.approx(np.std([1, 2, 3]))
        assert rep.consumption_mean == 4.0
        assert rep.consumption_std == 0.0

    def test_rounds_positive(self):
        with pytest.raises(ValueError):
            EvalReport("x", 0, 10, [], [], 0, "h", 0)


class TestEvaluate:
    def test_zero_policy_zero_metrics(self):
        cfg = poisson_1hop_config()
        rep = evaluate(ZeroPolicy(single_hop_layout(cfg)), cfg,
                       rounds=2, slots=20, seed=0)
        assert rep.throughput_mean == 0.0
        assert rep.consumption_mean == 0.0
        assert rep.rounds == 2 and rep.slots == 20

    def test_deterministic_for_fixed_seed(self):
        cfg = poisson_1hop_config()
        layout = single_hop_layout(cfg)

        def run():
            pol = EDFPolicy(layout, cfg.budget_E0, cfg.weights, cfg.v_max)
            return evaluate(pol, cfg, rounds=2, slots=30, seed=5)

        a, b = run(), run()
        assert a.round_throughput == b.round_throughput
        assert a.round_consumption == b.round_consumption

    def test_caller_config_not_mutated(self):
        cfg = poisson_1hop_config()
        assert cfg.episode_len == 100
        evaluate(ZeroPolicy(single_hop_layout(cfg)), cfg, rounds=1, slots=7)
        assert cfg.episode_len == 100

    def test_multihop_config_accepted(self):
        mh = MultiHopConfig(
            base=EnvConfig(num_users=2, deadlines=[4, 4], weights=[1.0, 1.0],
                           arrival_rates=[1.0, 1.0], episode_len=50),
            num_nodes=2, routes=[[1, 2], [2, 1]])
        from socd.config import multi_hop_layout
        pol = UniformPolicy(multi_hop_layout(mh), 4.0, mh.base.v_max)
        rep = evaluate(pol, mh, rounds=2, slots=15)
        assert rep.consumption_mean > 0.0
        assert mh.base.episode_len == 50

    def test_consumption_within_hard_budget(self):
        cfg = poisson_1hop_config()
        layout = single_hop_layout(cfg)
        pol = EDFPolicy(layout, cfg.budget_E0, cfg.weights, cfg.v_max)
        rep = evaluate(pol, cfg, rounds=3, slots=50, seed=1)
        assert rep.consumption_mean <= cfg.budget_E0 + 1e-9


class TestSweep:
    def test_table_and_round_trip(self, tmp_path):
        cfg = poisson_1hop_config()
        layout = single_hop_layout(cfg)
        factories = {
            "uniform": lambda b: UniformPolicy(layout, b, cfg.v_max),
            "edf": lambda b: EDFPolicy(layout, b, cfg.weights, cfg.v_max),
        }
        path = str(tmp_path / "sweep.csv")
        rows = sweep(factories, cfg, budgets=[2.0, 4.0], out_path=path,
                     rounds=2, slots=20, seed=0)
        assert len(rows) == 4
        back = read_sweep_table(path)
        assert back == [
            {k: row[k] for k in row} for row in
            ({**r, "E0": float(r["E0"])} for r in rows)
        ]

    def test_partial_failure_recorded(self, tmp_path):
        cfg = poisson_1hop_config()
        layout = single_hop_layout(cfg)

        def broken(b):
            raise RuntimeError("boom")

        factories = {"uniform": lambda b: UniformPolicy(layout, b, cfg.v_max),
                     "broken": broken}
        rows = sweep(factories, cfg, budgets=[2.0], out_path=str(tmp_path / "s.csv"),
                     rounds=1, slots=5)
        by_name = {r["policy"]: r for r in rows}
        assert by_name["broken"]["error"] == "boom"
        assert by_name["uniform"]["error"] == ""

    def test_float_round_trip_exact(self, tmp_path):
        rows = [{"policy": "p", "E0": 0.1, "D_mean": 1 / 3, "D_std": 2 / 7,
                 "E_mean": np.pi, "E_std": 0.0, "error": ""}]
        path = str(tmp_path / "t.csv")
        write_sweep_table(rows, path)
        back = read_sweep_table(path)[0]
        assert back["D_mean"] == 1 / 3
        assert back["E_mean"] == np.pi
