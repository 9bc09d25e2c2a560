"""Structural quantities and executable lemma checks.

Covers the l1 eluder dimension of the squared-Hellinger class, the simulation
lemma, the change-of-variance identity, the bad-episode diagnostic and the
recursion lemma.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from mbrl import kernels
from mbrl.divergences import hellinger_sq_rows
from mbrl.errors import InvariantError
from mbrl.mdp import (
    IDENTITY_TOL,
    _variance_terms,
    as_kernel,
    occupancy,
    path_distribution,
    policy_evaluation,
    sample_trajectories,
)

EXHAUSTIVE_MAX_POINTS = 12
EXHAUSTIVE_MAX_FUNCTIONS = 12


@dataclass(frozen=True, eq=False)
class FunctionClassTable:
    """values[g, x] >= 0 for function g at point x."""

    values: np.ndarray
    labels: tuple
    function_ids: tuple = ()

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise InvariantError(f"function table must be 2-D, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise InvariantError("function table entries must be finite and nonnegative")
        if len(self.labels) != vals.shape[1]:
            raise InvariantError("one label per point is required")
        object.__setattr__(self, "values", vals)
        if not self.function_ids:
            object.__setattr__(self, "function_ids", tuple(range(vals.shape[0])))

    @property
    def envelope(self):
        return float(self.values.max()) if self.values.size else 0.0


@dataclass
class EluderResult:
    dimension: int
    witness: list  # point labels in order
    witness_functions: list  # function id certifying each step
    epsilon: float
    exact: bool


def build_psi(model_class, mdp, exclude_truth=False):
    """Rows (s, a) -> H^2(P*(s, a) || P(s, a)), one per model; columns are (s, a) pairs."""
    model_class.check_realizable(mdp)
    ids = [i for i in range(len(model_class)) if not (exclude_truth and i == model_class.truth_index)]
    h2 = hellinger_sq_rows(mdp.P[None], model_class.kernels[ids])  # (M, S, A)
    labels = tuple((s, a) for s in range(mdp.S) for a in range(mdp.A))
    return FunctionClassTable(h2.reshape(len(ids), -1), labels, tuple(ids))


def _step_witness(values, prefix, x, eps, p):
    budget = eps ** p
    if prefix:
        sums = (np.abs(values[:, prefix]) ** p).sum(axis=1)
    else:
        sums = np.zeros(values.shape[0])
    ok = np.flatnonzero((sums <= budget) & (np.abs(values[:, x]) > eps))
    return int(ok[0]) if len(ok) else None


def is_independent_sequence(table, points, eps, p=1):
    """Check a sequence of point indices against the definition, step by step."""
    for t, x in enumerate(points):
        if _step_witness(table.values, list(points[:t]), x, eps, p) is None:
            return False
    return True


def _exhaustive(values, eps, p):
    reach, parent = kernels.eluder_subsets(values, eps, p)
    masks = np.flatnonzero(reach)
    sizes = np.array([bin(int(m)).count("1") for m in masks])
    mask = int(masks[np.flatnonzero(sizes == sizes.max())[0]])
    order = []
    while mask:
        x = int(parent[mask])
        order.append(x)
        mask ^= 1 << x
    return order[::-1]


def _greedy(values, eps, p):
    n = values.shape[1]
    budget = eps ** p
    absv = np.abs(values)
    cum = np.zeros(values.shape[0])
    used = np.zeros(n, dtype=bool)
    order = []
    progress = True
    while progress:
        progress = False
        live = cum <= budget
        for x in range(n):
            if not used[x] and np.any(live & (absv[:, x] > eps)):
                order.append(x)
                used[x] = True
                cum = cum + absv[:, x] ** p
                progress = True
                break
    return order


def _eluder(table, epsilon, mode, p):
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    values = table.values
    if mode == "exhaustive":
        m, n = values.shape
        if n > EXHAUSTIVE_MAX_POINTS or m > EXHAUSTIVE_MAX_FUNCTIONS:
            raise ValueError(
                f"exhaustive search limited to {EXHAUSTIVE_MAX_POINTS} points and "
                f"{EXHAUSTIVE_MAX_FUNCTIONS} functions; table has {n} points and {m} functions")
        order = _exhaustive(values, epsilon, p)
    elif mode == "greedy":
        order = _greedy(values, epsilon, p)
    else:
        raise ValueError(f"unknown eluder mode {mode!r}")
    funcs = [table.function_ids[_step_witness(values, order[:t], x, epsilon, p)] for t, x in enumerate(order)]
    return EluderResult(len(order), [table.labels[x] for x in order], funcs, float(epsilon), mode == "exhaustive")


def eluder_dim_l1(table, epsilon, mode="exhaustive"):
    """Longest epsilon-independent sequence under absolute-sum budgets.

    ``exhaustive`` is exact (subset search, at most 12 points x 12 functions);
    ``greedy`` returns a valid witness and so a lower bound, flagged exact=False.
    """
    return _eluder(table, epsilon, mode, 1)


def _eluder_dim_l2(table, epsilon, mode="exhaustive"):
    # squared-sum variant; only used to cross-check DE1 <= DE2
    return _eluder(table, epsilon, mode, 2)


def simulation_bound(model, mdp, policy):
    """sum_h E_{d_h under P*} |E_{P*} V_{h+1;model} - E_{model} V_{h+1;model}|, and V_{0;model}(s0)."""
    P_hat = as_kernel(model)
    vals = policy_evaluation(P_hat, mdp, policy)
    occ = occupancy(mdp.P, mdp, policy)
    total = 0.0
    for h in range(mdp.H):
        diff = np.abs((mdp.P - P_hat) @ vals.V[h + 1])
        total += float(np.sum(occ.d[h] * diff))
    return total, float(vals.V[0, mdp.s0])


def check_simulation_lemma(mdp, model, policy, tol=IDENTITY_TOL):
    """(lhs, rhs, holds) for V_{0;P*} - V_{0;model} <= simulation bound."""
    rhs, v_model = simulation_bound(model, mdp, policy)
    v_true = policy_evaluation(mdp.P, mdp, policy).value(mdp.s0)
    lhs = v_true - v_model
    return lhs, rhs, lhs <= rhs + tol


class VarianceCheck(NamedTuple):
    lhs: float
    rhs: float
    abs_diff: float


def check_change_of_variance(mdp, policy, max_paths=10**5, rng=None, samples=20000):
    """Occupancy-weighted one-step variances vs the variance of the return.

    The right side is exact by path enumeration when the path count fits in
    ``max_paths``; otherwise ``rng`` must be given and a Monte Carlo estimate is used.
    """
    occ = occupancy(mdp.P, mdp, policy)
    vals = policy_evaluation(mdp.P, mdp, policy)
    lhs = 0.0
    for h in range(mdp.H):
        lhs += float(np.sum(occ.d[h] * _variance_terms(mdp.P, vals.V[h + 1])))
    try:
        probs, rets = path_distribution(mdp.P, mdp, policy, max_paths=max_paths)
        mean = float(probs @ rets)
        rhs = float(probs @ (rets - mean) ** 2)
    except InvariantError:
        if rng is None:
            raise
        states, actions = sample_trajectories(mdp, policy, samples, rng)
        rhs = float(np.var(mdp.r[states[:, :-1], actions].sum(axis=1), ddof=1))
    return VarianceCheck(lhs, rhs, abs(lhs - rhs))


def episode_traces(record, model_class):
    """(M, K, H) array of H^2(P_m(x) || P*(x)) along every logged path."""
    h2 = hellinger_sq_rows(model_class.kernels, model_class.truth[None])
    states = np.stack([log.states[:-1] for log in record.episodes])
    actions = np.stack([log.actions for log in record.episodes])
    return h2[:, states, actions]


def _as_traces(trace):
    trace = np.abs(np.asarray(trace, dtype=np.float64))
    if trace.ndim == 2:
        trace = trace[None]
    if trace.ndim != 3:
        raise ValueError(f"trace must be (K, H) or (G, K, H), got shape {trace.shape}")
    return trace


def bad_episode_set(hellinger_trace, lam):
    """Episodes whose cumulative-ratio sup over g exceeds 4.

    ``hellinger_trace`` is (K, H) for one function or (G, K, H) for several; the
    sup runs over the leading axis.
    """
    if lam <= 1:
        raise ValueError(f"lambda must exceed 1, got {lam}")
    per_episode = _as_traces(hellinger_trace).sum(axis=2)  # (G, K)
    after = lam + np.cumsum(per_episode, axis=1)
    before = np.concatenate([np.full((per_episode.shape[0], 1), lam), after[:, :-1]], axis=1)
    ratio = (after / before).max(axis=0)
    return [int(k) for k in np.flatnonzero(ratio > 4)]


def bad_episode_budget(lam, K, H, de1):
    return 13.0 * math.log(4 * lam * K * H) ** 2 * de1


def self_normalized_sum(hellinger_trace, lam):
    """sum_{k,h} min{1, sup_g |g(x)| / (lambda + earlier mass of g)} along the flattened sequence."""
    if lam <= 1:
        raise ValueError(f"lambda must exceed 1, got {lam}")
    flat = _as_traces(hellinger_trace).reshape(_as_traces(hellinger_trace).shape[0], -1)
    earlier = np.cumsum(flat, axis=1) - flat
    ratio = (flat / (earlier + lam)).max(axis=0)
    return float(np.minimum(1.0, ratio).sum())


def self_normalized_budget(lam, K, H, de1):
    return 12.0 * math.log(4 * lam * K * H) ** 2 * de1 + 1.0 / lam


def recursion_violations(G, a, C, K, H):
    """Hypothesis failures of the recursion lemma for the sequence C_0..C_N (empty list if none)."""
    out = []
    if G <= 0:
        out.append(f"G={G} must be positive")
    if not 0 < a < G / 2:
        out.append(f"a={a} must lie in (0, G/2)")
    if out:
        return out
    N = max(0, math.ceil(math.log2(K * H / G)))
    C = np.asarray(C, dtype=np.float64)
    if len(C) < N + 1:
        return [f"sequence has {len(C)} terms, needs N+1={N + 1}"]
    for m in range(N + 1):
        if C[m] < 0:
            out.append(f"C_{m}={C[m]} is negative")
        if C[m] > K * H:
            out.append(f"C_{m}={C[m]} exceeds KH={K * H}")
        if m < N and C[m] > 2 ** m * G + math.sqrt(a * C[m + 1]) + a:
            out.append(f"C_{m} violates the recursion")
    return out


def check_recursion_lemma(G, a, C, K, H, require_hypotheses=True):
    """True iff C_0 <= 4G. Raises ValueError on hypothesis failure unless told not to."""
    if require_hypotheses:
        bad = recursion_violations(G, a, C, K, H)
        if bad:
            raise ValueError("recursion lemma hypotheses fail: " + "; ".join(bad))
    return bool(C[0] <= 4 * G)


def sample_recursion_sequence(G, a, K, H, rng, tight=0.5):
    """A sequence satisfying the hypotheses, built backwards from C_N.

    Each term is the recursion's upper bound with probability ``tight`` and a
    uniform draw below it otherwise.
    """
    N = max(0, math.ceil(math.log2(K * H / G)))
    C = np.zeros(N + 1)
    C[N] = K * H if rng.random() < tight else rng.uniform(0, K * H)
    for m in range(N - 1, -1, -1):
        cap = min(K * H, 2 ** m * G + math.sqrt(a * C[m + 1]) + a)
        C[m] = cap if rng.random() < tight else rng.uniform(0, cap)
    return C


def analyze_report(mdp, model_class, epsilons=(0.5, 0.1, 0.05, 0.01), policies=None):
    """Structural summary used by the ``analyze`` CLI command."""
    from mbrl.mdp import optimal_planning

    table = build_psi(model_class, mdp, exclude_truth=True)
    small = table.values.shape[1] <= EXHAUSTIVE_MAX_POINTS and table.values.shape[0] <= EXHAUSTIVE_MAX_FUNCTIONS
    de1 = {}
    for eps in epsilons:
        res = eluder_dim_l1(table, eps, "exhaustive" if small else "greedy")
        de1[str(eps)] = {"dimension": res.dimension, "exact": res.exact}
    if policies is None:
        policies = [optimal_planning(model_class.kernels[i], mdp)[0] for i in range(len(model_class))]
    sim, var = [], []
    for j, pi in enumerate(policies):
        for i in range(len(model_class)):
            lhs, rhs, ok = check_simulation_lemma(mdp, model_class.kernels[i], pi)
            sim.append({"policy": j, "model": i, "lhs": lhs, "rhs": rhs, "holds": bool(ok)})
        try:
            chk = check_change_of_variance(mdp, pi)
            var.append({"policy": j, "lhs": chk.lhs, "rhs": chk.rhs, "abs_diff": chk.abs_diff})
        except InvariantError as exc:
            var.append({"policy": j, "skipped": str(exc)})
    return {"psi_envelope": table.envelope, "de1_by_epsilon": de1,
            "simulation_checks": sim, "variance_checks": var}
