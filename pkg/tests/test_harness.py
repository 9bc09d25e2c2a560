import numpy as np
import pytest

from mbrl.divergences import hellinger_sq_rows
from mbrl.errors import ConfigError
from mbrl.harness import (
    ExperimentConfig,
    flatness_ratio,
    gen_environment,
    gen_ladder_instance,
    gen_model_class,
    loglog_slope,
    match_optimal_values,
    rows_to_csv,
    stream,
    sweep,
)
from mbrl.mdp import enumerate_policies, max_trajectory_reward, optimal_planning, return_variance


@pytest.mark.parametrize("family", ["random_stochastic", "deterministic", "variance_dial", "chain"])
def test_families_normalized(family):
    for seed in range(5):
        mdp = gen_environment(family, {"S": 4, "A": 2, "H": 5, "sigma": 0.3}, np.random.default_rng(seed))
        assert max_trajectory_reward(mdp) <= 1 + 1e-12


def test_deterministic_policies_have_zero_variance():
    mdp = gen_environment("deterministic", {"S": 3, "A": 2, "H": 2}, np.random.default_rng(0))
    assert all(return_variance(mdp.P, mdp, pi) == 0 for pi in enumerate_policies(3, 2, 2))


def test_dial_zero_equals_deterministic():
    a = gen_environment("variance_dial", {"S": 5, "A": 3, "H": 4, "sigma": 0.0}, np.random.default_rng(1))
    b = gen_environment("deterministic", {"S": 5, "A": 3, "H": 4}, np.random.default_rng(1))
    assert np.array_equal(a.P, b.P) and np.array_equal(a.r, b.r)


def test_dial_variance_monotone():
    for seed in range(10):
        vals = []
        for sigma in (0.0, 0.25, 0.5, 1.0):
            mdp = gen_environment("variance_dial", {"S": 5, "A": 3, "H": 5, "sigma": sigma},
                                  np.random.default_rng(seed))
            pi, _ = optimal_planning(mdp.P, mdp)
            vals.append(return_variance(mdp.P, mdp, pi))
        assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))


def test_unknown_family():
    with pytest.raises(ConfigError):
        gen_environment("maze", {}, np.random.default_rng(0))


class TestModelClass:
    def setup_method(self):
        self.mdp = gen_environment("random_stochastic", {"S": 4, "A": 2, "H": 3}, np.random.default_rng(2))

    def test_size_one(self):
        mc = gen_model_class(self.mdp, 1, 0.0, np.random.default_rng(0))
        assert len(mc) == 1 and np.array_equal(mc.truth, self.mdp.P)

    def test_zero_scale_rejected(self):
        with pytest.raises(ConfigError):
            gen_model_class(self.mdp, 3, 0.0, np.random.default_rng(0))

    def test_distinct_members(self):
        mc = gen_model_class(self.mdp, 16, 0.2, np.random.default_rng(3))
        mc.check_realizable(self.mdp)
        h2 = hellinger_sq_rows(mc.kernels, self.mdp.P[None]).sum(axis=(1, 2))
        assert np.count_nonzero(h2 > 0) == 15 and h2[mc.truth_index] == 0
        flat = {k.tobytes() for k in mc.kernels}
        assert len(flat) == 16

    def test_truth_index_uniform(self):
        idx = [gen_model_class(self.mdp, 4, 0.3, np.random.default_rng(s)).truth_index for s in range(400)]
        counts = np.bincount(idx, minlength=4)
        assert counts.min() > 60


def test_ladder_instance():
    mdp, mc, pis = gen_ladder_instance({"p": 0.8}, np.random.default_rng(4))
    mc.check_realizable(mdp)
    assert len(mc) == 14 and len(pis) == 12 and mdp.H == 2
    values = [pis[i] for i in range(len(pis))]
    pi_star, star = optimal_planning(mdp.P, mdp)
    assert pi_star.actions[0, 0] == values[0].actions[0, 0] == 0
    assert star.value(0) == pytest.approx(0.8)


def test_streams_are_independent_and_stable():
    a = stream(5, "env", 1).random(3)
    assert np.array_equal(a, stream(5, "env", 1).random(3))
    assert not np.array_equal(a, stream(5, "class", 1).random(3))
    assert not np.array_equal(a, stream(5, "env", 2).random(3))


def test_match_optimal_values():
    mdps = [gen_environment("variance_dial", {"S": 4, "A": 2, "H": 3, "sigma": s}, np.random.default_rng(0))
            for s in (0.1, 0.9)]
    matched = match_optimal_values(mdps)
    vals = [optimal_planning(m.P, m)[1].value(0) for m in matched]
    assert vals[0] == pytest.approx(vals[1], abs=1e-12)


class TestConfig:
    def test_defaults_validate(self):
        ExperimentConfig().validate()

    @pytest.mark.parametrize("patch", [
        {"delta": 0.0}, {"delta": 1.0}, {"mode": "bandit"}, {"K": 0}, {"num_seeds": 0},
        {"env": {"family": "maze"}}, {"env": {"family": "chain", "S": 0}},
        {"model_class": {"size": 0}}, {"model_class": {"size": 4, "scale": 0}},
        {"model_class": {"size": 4, "scale": 0.5, "realizable": False}},
        {"sweep": {"gamma": [1]}}, {"sweep": {"K": []}}, {"behavior": "random"}, {"colour": 1},
    ])
    def test_rejects(self, patch):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(patch)

    def test_non_object(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict([1, 2])


class TestSweep:
    def test_seeds_singleton_class_zero_regret(self):
        cfg = ExperimentConfig.from_dict({"env": {"family": "deterministic", "S": 4, "A": 2, "H": 3},
                                          "model_class": {"size": 1}, "K": 15, "sweep": {"seeds": [0, 1, 2]}})
        rows = sweep(cfg, "seeds")
        assert [r["value"] for r in rows] == [0, 1, 2]
        assert all(r["regret"] == 0.0 for r in rows)
        stripped = [{k: v for k, v in r.items() if k not in ("value", "seed")} for r in rows]
        assert stripped[0] == stripped[1] == stripped[2]

    def test_reproducible_and_thread_independent(self, monkeypatch):
        cfg = {"mode": "offline", "env": {"family": "random_stochastic", "S": 3, "A": 2, "H": 3},
               "num_seeds": 3, "sweep": {"K": [10, 20, 40]}}
        monkeypatch.setenv("MBRL_THREADS", "1")
        one = rows_to_csv(sweep(ExperimentConfig.from_dict(cfg), "K"))
        monkeypatch.setenv("MBRL_THREADS", "4")
        four = rows_to_csv(sweep(ExperimentConfig.from_dict(cfg), "K"))
        assert one == four
        rows = one.splitlines()[2:]
        keys = [tuple(map(int, r.split(",")[1:3])) for r in rows]
        assert keys == sorted(keys) and len(keys) == 9

    def test_h_axis_renormalizes(self):
        cfg = ExperimentConfig.from_dict({"env": {"family": "chain", "S": 4, "A": 2}, "K": 10, "num_seeds": 1,
                                          "sweep": {"H": [4, 8]}})
        rows = sweep(cfg, "H")
        assert all(0 < r["v_star"] <= 1 for r in rows)

    def test_missing_axis(self):
        with pytest.raises(ConfigError):
            sweep(ExperimentConfig(), "K")

    def test_bad_thread_count(self, monkeypatch):
        monkeypatch.setenv("MBRL_THREADS", "many")
        cfg = ExperimentConfig.from_dict({"sweep": {"seeds": [0]}, "K": 2})
        with pytest.raises(ConfigError):
            sweep(cfg, "seeds")

    def test_csv_header(self):
        assert rows_to_csv([]).startswith("# schema_version=1")


def test_slope_and_flatness_helpers():
    Ks = np.array([25, 50, 100, 200])
    assert loglog_slope(Ks, 3.0 / Ks) == pytest.approx(-1.0)
    assert loglog_slope(Ks, 2.0 / np.sqrt(Ks)) == pytest.approx(-0.5)
    curve = np.sqrt(np.arange(1, 513))
    assert flatness_ratio(curve, 512) == pytest.approx(np.sqrt(2) - 1, rel=1e-12)
    assert flatness_ratio(np.zeros(8), 8) == 0.0
