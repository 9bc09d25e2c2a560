import math

import numpy as np
import pytest

from conftest import coin_mdp, random_mdp
from mbrl.analysis import (
    FunctionClassTable,
    _eluder_dim_l2,
    analyze_report,
    bad_episode_budget,
    bad_episode_set,
    build_psi,
    check_change_of_variance,
    check_recursion_lemma,
    check_simulation_lemma,
    eluder_dim_l1,
    episode_traces,
    is_independent_sequence,
    recursion_violations,
    sample_recursion_sequence,
    self_normalized_budget,
    self_normalized_sum,
)
from mbrl.errors import InvariantError
from mbrl.estimation import ModelClass
from mbrl.harness import gen_environment, gen_model_class
from mbrl.mdp import Policy
from mbrl.online import run_ombrl


def table(values):
    values = np.asarray(values, dtype=float)
    return FunctionClassTable(values, tuple(range(values.shape[1])))


def brute_force_eluder(values, eps, p=1):
    """Longest independent sequence by depth-first search over orderings (small tables only)."""
    n = values.shape[1]
    best = 0

    def extend(seq, used):
        nonlocal best
        best = max(best, len(seq))
        sums = (np.abs(values[:, seq]) ** p).sum(axis=1) if seq else np.zeros(values.shape[0])
        for x in range(n):
            if not used[x] and np.any((sums <= eps ** p) & (np.abs(values[:, x]) > eps)):
                used[x] = True
                extend(seq + [x], used)
                used[x] = False

    extend([], [False] * n)
    return best


class TestPsi:
    def test_truth_row_zero_and_range(self):
        rng = np.random.default_rng(0)
        mdp = random_mdp(rng)
        mc = gen_model_class(mdp, 5, 0.6, rng)
        psi = build_psi(mc, mdp)
        assert not psi.values[mc.truth_index].any()
        assert psi.values.min() >= 0 and psi.values.max() <= 1
        assert psi.values.shape == (5, mdp.S * mdp.A)

    def test_single_pair_difference(self):
        mdp = random_mdp(np.random.default_rng(1))
        other = np.array(mdp.P)
        other[2, 1] = np.roll(other[2, 1], 1)
        psi = build_psi(ModelClass(np.stack([mdp.P, other]), 0), mdp)
        assert np.flatnonzero(psi.values[1]).tolist() == [2 * mdp.A + 1]

    def test_exclude_truth(self):
        rng = np.random.default_rng(2)
        mdp = random_mdp(rng)
        mc = gen_model_class(mdp, 4, 0.6, rng)
        psi = build_psi(mc, mdp, exclude_truth=True)
        assert len(psi.function_ids) == 3 and mc.truth_index not in psi.function_ids

    def test_table_validation(self):
        with pytest.raises(InvariantError):
            FunctionClassTable(np.array([[-1.0]]), (0,))
        with pytest.raises(InvariantError):
            FunctionClassTable(np.zeros((1, 2)), (0,))


class TestEluder:
    def test_all_zero(self):
        assert eluder_dim_l1(table(np.zeros((4, 5))), 0.1).dimension == 0

    @pytest.mark.parametrize("n", [1, 3, 6, 12])
    def test_indicators(self, n):
        res = eluder_dim_l1(table(np.eye(n)), 0.5)
        assert res.dimension == n and res.exact
        assert is_independent_sequence(table(np.eye(n)), list(res.witness), 0.5)

    def test_witness_certified(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            t = table(rng.random((5, 6)) * 0.4)
            res = eluder_dim_l1(t, 0.15)
            assert is_independent_sequence(t, list(res.witness), 0.15)
            assert len(res.witness_functions) == res.dimension

    def test_matches_brute_force(self):
        rng = np.random.default_rng(4)
        for _ in range(60):
            m, n = rng.integers(1, 6), rng.integers(1, 7)
            vals = rng.random((m, n)) * rng.choice([0.3, 0.6, 1.0])
            eps = float(rng.choice([0.05, 0.1, 0.2, 0.3]))
            assert eluder_dim_l1(table(vals), eps).dimension == brute_force_eluder(vals, eps)
            assert _eluder_dim_l2(table(vals), eps).dimension == brute_force_eluder(vals, eps, 2)

    def test_greedy_is_lower_bound(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            t = table(rng.random((4, 7)) * 0.5)
            greedy = eluder_dim_l1(t, 0.1, "greedy")
            assert not greedy.exact
            assert is_independent_sequence(t, list(greedy.witness), 0.1)
            assert greedy.dimension <= eluder_dim_l1(t, 0.1).dimension

    def test_l1_at_most_l2(self):
        rng = np.random.default_rng(6)
        for _ in range(40):
            t = table(rng.random((6, 8)) * 0.5)
            for eps in (0.05, 0.1, 0.3):
                assert eluder_dim_l1(t, eps).dimension <= _eluder_dim_l2(t, eps).dimension

    def test_caps_and_arguments(self):
        with pytest.raises(ValueError):
            eluder_dim_l1(table(np.zeros((2, 13))), 0.1)
        with pytest.raises(ValueError):
            eluder_dim_l1(table(np.zeros((13, 2))), 0.1)
        with pytest.raises(ValueError):
            eluder_dim_l1(table(np.zeros((2, 2))), 0.0)
        with pytest.raises(ValueError):
            eluder_dim_l1(table(np.zeros((2, 2))), 0.1, "random")

    def test_tabular_bound(self):
        rng = np.random.default_rng(7)
        mdp = random_mdp(rng, S=3, A=2, H=3)
        mc = gen_model_class(mdp, 8, 0.8, rng, concentration=0.2)
        psi = build_psi(mc, mdp, exclude_truth=True)
        for eps in (0.001, 0.01, 0.1):
            assert eluder_dim_l1(psi, eps).dimension <= mdp.S * mdp.A


class TestSimulationLemma:
    def test_truth_model(self):
        mdp = random_mdp(np.random.default_rng(8))
        lhs, rhs, ok = check_simulation_lemma(mdp, mdp.P, Policy.constant(mdp.H, mdp.S))
        assert lhs == 0 and rhs == 0 and ok

    def test_one_step(self):
        rng = np.random.default_rng(9)
        mdp = random_mdp(rng, H=1)
        other = rng.dirichlet(np.ones(mdp.S), size=(mdp.S, mdp.A))
        lhs, rhs, ok = check_simulation_lemma(mdp, other, Policy.constant(1, mdp.S))
        assert lhs == 0 and rhs == 0 and ok

    def test_random_triples(self):
        rng = np.random.default_rng(10)
        for _ in range(200):
            mdp = random_mdp(rng, S=int(rng.integers(1, 5)), A=int(rng.integers(1, 4)), H=int(rng.integers(1, 5)))
            other = rng.dirichlet(np.ones(mdp.S), size=(mdp.S, mdp.A))
            pi = Policy(rng.integers(0, mdp.A, size=(mdp.H, mdp.S)))
            assert check_simulation_lemma(mdp, other, pi, tol=1e-8)[2]


class TestChangeOfVariance:
    def test_deterministic(self):
        mdp = gen_environment("deterministic", {"S": 4, "A": 2, "H": 4}, np.random.default_rng(11))
        chk = check_change_of_variance(mdp, Policy.constant(4, 4))
        assert chk.lhs == 0 and chk.rhs == 0

    def test_coin(self):
        chk = check_change_of_variance(coin_mdp(), Policy.constant(2, 2))
        assert chk.lhs == pytest.approx(0.25, abs=1e-15) and chk.rhs == pytest.approx(0.25, abs=1e-15)

    def test_five_state(self):
        mdp = random_mdp(np.random.default_rng(12), S=5, A=2, H=4)
        chk = check_change_of_variance(mdp, Policy.constant(4, 5, 1))
        assert chk.abs_diff <= 1e-10

    def test_monte_carlo_fallback(self):
        mdp = random_mdp(np.random.default_rng(13), S=6, A=2, H=6)
        pi = Policy.constant(6, 6)
        with pytest.raises(InvariantError):
            check_change_of_variance(mdp, pi, max_paths=10)
        chk = check_change_of_variance(mdp, pi, max_paths=10, rng=np.random.default_rng(0), samples=40000)
        assert chk.abs_diff <= 0.1 * chk.lhs + 1e-3


class TestBadEpisodes:
    def test_zero_trace(self):
        assert bad_episode_set(np.zeros((10, 3)), 2.0) == []

    def test_spike_included(self):
        lam = 3.0
        trace = np.zeros((6, 2))
        trace[4, 1] = 10 * lam
        assert bad_episode_set(trace, lam) == [4]

    def test_size_bounded(self):
        trace = np.random.default_rng(14).random((3, 20, 4)) * 50
        assert len(bad_episode_set(trace, 1.5)) <= 20

    def test_lambda_range(self):
        with pytest.raises(ValueError):
            bad_episode_set(np.zeros((2, 2)), 1.0)

    def test_budgets_hold_on_a_run(self):
        rng = np.random.default_rng(15)
        mdp = gen_environment("random_stochastic", {"S": 3, "A": 2, "H": 3}, rng)
        mc = gen_model_class(mdp, 6, 0.5, rng)
        rec = run_ombrl(mdp, mc, 60, 0.1, rng)
        traces = episode_traces(rec, mc)
        assert traces.shape == (6, 60, 3)
        assert np.allclose(traces[[log.model_index for log in rec.episodes], np.arange(60)], rec.hellinger_trace)
        psi = build_psi(mc, mdp)
        lam = 2.0
        de1 = eluder_dim_l1(psi, 1 / (lam * 60 * 3)).dimension
        assert len(bad_episode_set(traces, lam)) <= bad_episode_budget(lam, 60, 3, de1)
        assert self_normalized_sum(traces, lam) <= self_normalized_budget(lam, 60, 3, de1)


class TestRecursion:
    def test_zero_sequence(self):
        G, K, H = 1.0, 8, 4
        N = math.ceil(math.log2(K * H / G))
        assert check_recursion_lemma(G, 0.1, np.zeros(N + 1), K, H)

    def test_tight_envelope(self):
        G, K, H = 0.5, 16, 4
        N = math.ceil(math.log2(K * H / G))
        C = np.array([2.0 ** (m + 2) * G for m in range(N + 1)])
        assert C[0] == 4 * G
        assert check_recursion_lemma(G, 1e-12, C, K, H, require_hypotheses=False)
        assert recursion_violations(G, 1e-12, C, K, H)  # the envelope is not itself admissible

    def test_hypotheses_enforced(self):
        with pytest.raises(ValueError):
            check_recursion_lemma(1.0, 0.6, np.zeros(10), 4, 4)
        with pytest.raises(ValueError):
            check_recursion_lemma(1.0, 0.1, np.zeros(1), 4, 4)

    def test_sampled_sequences(self):
        rng = np.random.default_rng(16)
        for _ in range(500):
            G = float(rng.uniform(0.1, 5))
            a = float(rng.uniform(1e-6, G / 2))
            K, H = int(rng.integers(1, 50)), int(rng.integers(1, 20))
            C = sample_recursion_sequence(G, a, K, H, rng)
            assert not recursion_violations(G, a, C, K, H)
            assert check_recursion_lemma(G, a, C, K, H)


def test_report_structure():
    rng = np.random.default_rng(17)
    mdp = random_mdp(rng, S=3, A=2, H=3)
    mc = gen_model_class(mdp, 4, 0.5, rng)
    rep = analyze_report(mdp, mc, (0.1, 0.01))
    assert set(rep) == {"psi_envelope", "de1_by_epsilon", "simulation_checks", "variance_checks"}
    assert all(c["holds"] for c in rep["simulation_checks"])
    assert all(v["abs_diff"] <= 1e-10 for v in rep["variance_checks"])
    assert rep["de1_by_epsilon"]["0.1"]["exact"]
