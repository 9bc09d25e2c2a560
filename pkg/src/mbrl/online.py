"""Optimistic model-based RL: collect, refit the version space, plan optimistically, repeat."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from mbrl.analysis import simulation_bound
from mbrl.divergences import hellinger_sq_rows
from mbrl.estimation import _log_tables, beta_threshold, logliks_from_counts, version_space_from_logliks
from mbrl.mdp import (
    Policy,
    optimal_planning,
    policy_evaluation,
    return_variance,
    sample_trajectory,
)

CSV_COLUMNS = ["k", "regret", "cum_regret", "optimistic_value", "true_value",
               "realized_return", "vs_size", "var_pik"]
SCHEMA_VERSION = 1


@dataclass
class EpisodeLog:
    k: int
    policy: Policy
    model_index: int
    optimistic_value: float
    true_value: float
    realized_return: float
    instantaneous_regret: float
    version_space_size: int
    policy_variance: float
    truth_in_version_space: bool
    simulation_gap: float  # V_{P^k} - V_{P*} for the played policy
    simulation_bound: float  # sum_h E_d |(P* - P^k) V_{h+1;P^k}|
    states: np.ndarray = field(repr=False)
    actions: np.ndarray = field(repr=False)


@dataclass
class RunRecord:
    episodes: list
    cumulative_regret: np.ndarray
    config: dict
    env_fingerprint: str
    optimal_value: float
    hellinger_trace: np.ndarray = field(repr=False)  # (K, H): H^2(P^k(x) || P*(x)) along the path

    @property
    def regret(self):
        return float(self.cumulative_regret[-1]) if len(self.cumulative_regret) else 0.0

    def rows(self):
        for log, cum in zip(self.episodes, self.cumulative_regret):
            yield {"k": log.k, "regret": log.instantaneous_regret, "cum_regret": float(cum),
                   "optimistic_value": log.optimistic_value, "true_value": log.true_value,
                   "realized_return": log.realized_return, "vs_size": log.version_space_size,
                   "var_pik": log.policy_variance}

    def to_csv(self):
        buf = io.StringIO()
        buf.write(f"# schema_version={SCHEMA_VERSION}\n")
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()

    def to_dict(self):
        episodes = []
        for log in self.episodes:
            doc = asdict(log)
            doc["policy"] = log.policy.actions.tolist()
            doc["states"] = log.states.tolist()
            doc["actions"] = log.actions.tolist()
            episodes.append(doc)
        return {"schema_version": SCHEMA_VERSION, "config": self.config,
                "env_fingerprint": self.env_fingerprint, "optimal_value": self.optimal_value,
                "cumulative_regret": self.cumulative_regret.tolist(), "episodes": episodes}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def optimistic_plan(vs, model_class, mdp):
    """(policy, model index, value) maximizing V_{0;P}(s0) over members; lowest index on ties."""
    assert len(vs) > 0, "version space is never empty"
    best = None
    for idx in vs.member_indices:
        pi, tables = optimal_planning(model_class.kernels[idx], mdp)
        value = tables.value(mdp.s0)
        if best is None or value > best[2]:
            best = (pi, idx, value)
    return best


def run_ombrl(mdp, model_class, K, delta, rng, beta=None, seed=None):
    """Run K episodes of optimistic MBRL against the true MDP.

    beta defaults to 4 log(K |class| / delta), fixed for the whole run.
    """
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    model_class.check_realizable(mdp)
    if beta is None:
        beta = beta_threshold("online_finite", len(model_class), K, delta)
    truth = model_class.truth_index
    tables = _log_tables(model_class.kernels)
    h2_rows = hellinger_sq_rows(model_class.kernels, mdp.P[None])  # (M, S, A)
    _, star = optimal_planning(mdp.P, mdp)
    v_star = star.value(mdp.s0)

    counts = np.zeros((mdp.S, mdp.A, mdp.S), dtype=np.int64)
    logs = []
    trace = np.zeros((K, mdp.H))
    for k in range(K):
        vs = version_space_from_logliks(logliks_from_counts(model_class.kernels, counts, tables), beta)
        pi, idx, opt_value = optimistic_plan(vs, model_class, mdp)
        true_value = policy_evaluation(mdp.P, mdp, pi).value(mdp.s0)
        variance = return_variance(mdp.P, mdp, pi)
        bound, _ = simulation_bound(model_class.kernels[idx], mdp, pi)
        traj = sample_trajectory(mdp, pi, rng)
        np.add.at(counts, (traj.states[:-1], traj.actions, traj.states[1:]), 1)
        trace[k] = h2_rows[idx][traj.states[:-1], traj.actions]
        logs.append(EpisodeLog(
            k=k, policy=pi, model_index=int(idx), optimistic_value=float(opt_value),
            true_value=float(true_value), realized_return=float(traj.rewards.sum()),
            instantaneous_regret=float(v_star - true_value), version_space_size=len(vs),
            policy_variance=float(variance), truth_in_version_space=truth in vs,
            simulation_gap=float(opt_value - true_value), simulation_bound=bound,
            states=traj.states, actions=traj.actions,
        ))
    cum = np.cumsum([log.instantaneous_regret for log in logs])
    config = {"beta": float(beta), "delta": float(delta), "K": int(K), "class_size": len(model_class),
              "seed": seed}
    return RunRecord(logs, cum, config, mdp.fingerprint(), float(v_star), trace)
