"""Environment, model-class and policy-class generators, configs, seeded streams and sweeps.

Randomness flows from one 64-bit master seed. Named streams are derived as
``SeedSequence(master_seed, spawn_key=(i, *keys))`` with i fixed per name (see
STREAMS) and keys such as the replica index, so adding a consumer never
perturbs another stream.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from mbrl.divergences import hellinger_sq_rows
from mbrl.errors import ConfigError
from mbrl.estimation import ModelClass
from mbrl.mdp import DIST_TOL, TabularMdp, _max_path_reward, optimal_planning, return_variance

STREAMS = {"env": 0, "class": 1, "agent": 2, "data": 3, "policy": 4}
FAMILIES = ("random_stochastic", "deterministic", "variance_dial", "chain", "ladder")
SCHEMA_VERSION = 1


def stream(master_seed, name, *keys):
    """One named generator; ``keys`` (replica index, axis value, ...) refine it."""
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(STREAMS[name], *map(int, keys))))


def streams(master_seed, *keys):
    """Independent generators keyed by stream name."""
    return {name: stream(master_seed, name, *keys) for name in STREAMS}


def _normalized(P, r, H, s0):
    top = _max_path_reward(P, r, H, s0)
    if top > 0:
        r = r / top
    # guard the last ulp so the constructor's <= 1 check cannot trip
    if _max_path_reward(P, r, H, s0) > 1.0:
        r = r * (1.0 - DIST_TOL)
    return TabularMdp(P, r, H, s0)


def _deterministic_core(S, A, rng):
    """Successor map and state rewards shared by the deterministic and variance_dial families.

    Half the states (always including s0 = 0) are rewarding. Every state has
    at least one action into a rewarding state and, when A > 1, one into a
    non-rewarding state.
    """
    good = np.zeros(S, dtype=bool)
    n_good = max(1, S // 2)
    good[0] = True
    if n_good > 1:
        good[1 + rng.permutation(S - 1)[: n_good - 1]] = True
    good_idx, bad_idx = np.flatnonzero(good), np.flatnonzero(~good)
    succ = rng.integers(0, S, size=(S, A))
    slots = rng.permutation(A)
    for s in range(S):
        succ[s, slots[0]] = rng.choice(good_idx)
        if A > 1 and len(bad_idx):
            succ[s, slots[1]] = rng.choice(bad_idx)
    action_bonus = rng.uniform(0.0, 1.0, size=(S, A))
    return succ, good, action_bonus


def gen_environment(family, params, rng):
    """Build a normalized TabularMdp from one of FAMILIES.

    Common params: S, A, H. Family-specific: ``sigma`` (variance_dial mixing
    weight), ``slip`` (chain), ``branching`` and ``alpha`` (random_stochastic
    support size and Dirichlet concentration),
    ``bonus`` (weight of the action-dependent reward term in deterministic and
    variance_dial).
    """
    S, A, H = int(params.get("S", 4)), int(params.get("A", 2)), int(params.get("H", 4))
    if min(S, A, H) < 1:
        raise ConfigError("S, A and H must be positive")
    if family == "random_stochastic":
        branching = int(params.get("branching", S))
        alpha = float(params.get("alpha", 1.0))
        P = np.zeros((S, A, S))
        for s in range(S):
            for a in range(A):
                supp = rng.choice(S, size=min(branching, S), replace=False)
                P[s, a, supp] = rng.dirichlet(np.full(len(supp), alpha))
        P /= P.sum(axis=2, keepdims=True)
        r = rng.uniform(0.0, 1.0, size=(S, A))
        return _normalized(P, r, H, 0)
    if family in ("deterministic", "variance_dial"):
        sigma = float(params.get("sigma", 0.0)) if family == "variance_dial" else 0.0
        if not 0.0 <= sigma <= 1.0:
            raise ConfigError(f"sigma must lie in [0, 1], got {sigma}")
        bonus = float(params.get("bonus", 0.25))
        succ, good, action_bonus = _deterministic_core(S, A, rng)
        P = np.zeros((S, A, S))
        np.put_along_axis(P, succ[..., None], 1.0, axis=2)
        if sigma > 0:
            P = (1.0 - sigma) * P + sigma / S
        r = good[:, None] * (1.0 + bonus * action_bonus)
        return _normalized(P, r, H, 0)
    if family == "chain":
        slip = float(params.get("slip", 0.1))
        if not 0.0 <= slip < 1.0:
            raise ConfigError(f"slip must lie in [0, 1), got {slip}")
        P = np.zeros((S, A, S))
        for s in range(S):
            P[s, 0, min(s + 1, S - 1)] += 1.0 - slip
            P[s, 0, s] += slip
            for a in range(1, A):
                P[s, a, 0] = 1.0
        r = np.zeros((S, A))
        r[S - 1, :] = 1.0
        r[0, 1:] = float(params.get("small_reward", 0.05))
        return _normalized(P, r, H, 0)
    if family == "ladder":
        return gen_ladder_instance(params, rng)[0]
    raise ConfigError(f"unknown environment family {family!r}; choose from {FAMILIES}")


def gen_model_class(mdp, size, scale, rng, truth_index=None, concentration=1.0):
    """P* at a random index plus ``size - 1`` distinct row-wise perturbations of it.

    Each perturbed row is (1 - w) P*(s, a) + w q with q ~ Dirichlet(1) and
    w ~ U(0, scale), so rows stay valid distributions. Small ``concentration``
    makes q nearly a point mass on a random successor.
    """
    size = int(size)
    if size < 1:
        raise ConfigError("model class size must be at least 1")
    if size > 1 and scale <= 0:
        raise ConfigError("perturbation scale must be positive for classes with more than one model")
    if not scale <= 1:
        raise ConfigError("perturbation scale must be at most 1")
    t = int(rng.integers(size)) if truth_index is None else int(truth_index)
    kernels = []
    while len(kernels) < size - 1:
        w = rng.uniform(0.0, scale, size=(mdp.S, mdp.A, 1))
        q = rng.dirichlet(np.full(mdp.S, float(concentration)), size=(mdp.S, mdp.A))
        K = (1.0 - w) * mdp.P + w * q
        K /= K.sum(axis=2, keepdims=True)
        K[K < 1e-300] = 0.0
        K /= K.sum(axis=2, keepdims=True)
        if np.sum(hellinger_sq_rows(K, mdp.P)) > 0 and not any(np.array_equal(K, k) for k in kernels):
            kernels.append(K)
    kernels.insert(t, np.array(mdp.P))
    return ModelClass(np.stack(kernels), t)


def gen_ladder_instance(params, rng):
    """Two-step arms instance whose offline gap tracks the version-space width.

    From s0 each action i ("arm") reaches target state i with probability p
    (``p=1`` is the deterministic variant) and otherwise an absorbing zero
    state; target i pays v_i at step 1. Non-truth model j scales arm i's
    success probability by (1 - w_i * eps_j) with eps_j on a geometric ladder.
    Arm 0 is pi* (v_0 = 1, w_0 = 1); the other arms trade value for
    robustness along tangents of a convex frontier, so the max-min arm's gap
    is proportional to the largest surviving eps. Returns (mdp, class, policies).
    """
    arms = int(params.get("arms", 12))
    p = float(params.get("p", 1.0))
    eps_max = float(params.get("eps_max", 0.9))
    ratio = float(params.get("ratio", math.sqrt(2.0)))
    n_models = int(params.get("n_models", 13))
    curve = float(params.get("curve", 0.25))
    lo, hi = float(params.get("tangent_lo", 0.02)), float(params.get("tangent_hi", 0.8))
    if arms < 2 or n_models < 1 or not 0 < p <= 1:
        raise ConfigError("ladder needs arms >= 2, n_models >= 1 and p in (0, 1]")
    eps = eps_max * ratio ** (-(np.arange(n_models) + rng.random()))
    step = math.log(hi / lo) / max(arms - 2, 1)
    tangents = np.exp(np.linspace(math.log(lo), math.log(hi), arms - 1) + (rng.random() - 0.5) * step)
    value = np.concatenate([[1.0], 1.0 - curve * tangents])
    slope = np.concatenate([[1.0], curve * np.log(1.0 / tangents)])
    w = slope / value
    if np.any(w * eps_max > 1):
        raise ConfigError("ladder perturbations would leave the probability simplex")
    S, A, zero = arms + 2, arms, arms + 1

    def kernel(e):
        P = np.zeros((S, A, S))
        P[:, :, zero] = 1.0
        for i in range(arms):
            q = p * (1.0 - w[i] * e)
            P[0, i] = 0.0
            P[0, i, 1 + i] = q
            P[0, i, zero] = 1.0 - q
        return P

    r = np.zeros((S, A))
    r[1:1 + arms] = value[:, None]
    mdp = TabularMdp(kernel(0.0), r, 2, 0)
    t = int(rng.integers(n_models + 1))
    ks = [kernel(e) for e in eps]
    ks.insert(t, kernel(0.0))
    from mbrl.offline import PolicyClass
    from mbrl.mdp import Policy

    pols = []
    for i in range(arms):
        acts = np.zeros((2, S), dtype=np.int64)
        acts[0, 0] = i
        pols.append(Policy(acts))
    return mdp, ModelClass(np.stack(ks), t), PolicyClass(tuple(pols))


def match_optimal_values(mdps):
    """Scale rewards so every MDP's optimal value equals the smallest one (scaling down keeps normalization)."""
    values = [optimal_planning(m.P, m)[1].value(m.s0) for m in mdps]
    target = min(values)
    return [TabularMdp(m.P, m.r * (target / v if v > 0 else 1.0), m.H, m.s0) for m, v in zip(mdps, values)]


def variance_profile(family, params, sigmas, rng_seed):
    """Var of the optimal policy's return for each sigma on one environment seed."""
    out = []
    for sigma in sigmas:
        mdp = gen_environment(family, dict(params, sigma=sigma), stream(rng_seed, "env"))
        pi, _ = optimal_planning(mdp.P, mdp)
        out.append(return_variance(mdp.P, mdp, pi))
    return out


# ---------------------------------------------------------------- configuration

MODES = ("online", "offline", "analyze", "gen")
AXES = ("K", "H", "sigma", "seeds")


@dataclass
class ExperimentConfig:
    mode: str = "online"
    env: dict = field(default_factory=lambda: {"family": "random_stochastic", "S": 4, "A": 2, "H": 4})
    model_class: dict = field(default_factory=lambda: {"size": 8, "scale": 0.5, "concentration": 1.0,
                                                       "realizable": True})
    K: int = 100
    delta: float = 0.1
    num_seeds: int = 1
    seed: int = 0
    behavior: str = "uniform"  # offline data: uniform | optimal
    n_random_policies: int = 8
    match_optimal_value: bool = False  # sigma sweeps: equalize V* across sigma
    sweep: dict = field(default_factory=dict)  # axis name -> list of values
    outputs: dict = field(default_factory=dict)

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        family = self.env.get("family")
        if family not in FAMILIES:
            raise ConfigError(f"env.family must be one of {FAMILIES}, got {family!r}")
        for key in ("S", "A", "H"):
            if key in self.env and (not isinstance(self.env[key], int) or self.env[key] < 1):
                raise ConfigError(f"env.{key} must be a positive integer")
        if not 0 < float(self.delta) < 1:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if int(self.K) < 1:
            raise ConfigError("K must be at least 1")
        if int(self.num_seeds) < 1:
            raise ConfigError("num_seeds must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        mc = self.model_class
        if int(mc.get("size", 1)) < 1:
            raise ConfigError("model_class.size must be at least 1")
        if int(mc.get("size", 1)) > 1 and float(mc.get("scale", 0)) <= 0:
            raise ConfigError("model_class.scale must be positive when size > 1")
        if not mc.get("realizable", True):
            raise ConfigError("only realizable model classes are supported")
        if self.behavior not in ("uniform", "optimal"):
            raise ConfigError(f"behavior must be 'uniform' or 'optimal', got {self.behavior!r}")
        for axis, values in self.sweep.items():
            if axis not in AXES:
                raise ConfigError(f"sweep axis must be one of {AXES}, got {axis!r}")
            if not isinstance(values, list) or not values:
                raise ConfigError(f"sweep.{axis} must be a nonempty list")
        return self

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg.validate()

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------- single runs

def build_instance(cfg, replica=0, env_overrides=None):
    """(mdp, model class, policy class or None) for one replica of the config."""
    env = dict(cfg.env, **(env_overrides or {}))
    family = env.pop("family")
    rngs = streams(cfg.seed, replica)
    if family == "ladder":
        return gen_ladder_instance(env, rngs["env"])
    mdp = gen_environment(family, env, rngs["env"])
    mc = cfg.model_class
    model_class = gen_model_class(mdp, int(mc.get("size", 8)), float(mc.get("scale", 0.5)), rngs["class"],
                                  concentration=float(mc.get("concentration", 1.0)))
    return mdp, model_class, None


def online_row(mdp, model_class, K, delta, rng, seed):
    from mbrl.online import run_ombrl

    rec = run_ombrl(mdp, model_class, K, delta, rng, seed=seed)
    pi_star, _ = optimal_planning(mdp.P, mdp)
    return {
        "regret": rec.regret,
        "regret_half": float(rec.cumulative_regret[K // 2 - 1]) if K >= 2 else 0.0,
        "sum_var_pik": float(sum(log.policy_variance for log in rec.episodes)),
        "var_star": return_variance(mdp.P, mdp, pi_star),
        "v_star": rec.optimal_value,
        "final_vs_size": rec.episodes[-1].version_space_size,
    }


def behavior_policy(cfg, mdp, pis):
    if pis is not None and cfg.behavior == "optimal":
        return pis[0]
    if cfg.behavior == "optimal":
        return optimal_planning(mdp.P, mdp)[0]
    return np.full((mdp.H, mdp.S, mdp.A), 1.0 / mdp.A)


def offline_row(cfg, mdp, model_class, pis, K, replica, axis_key):
    from mbrl.offline import default_policy_class, generate_offline_dataset, run_cppo

    if pis is None:
        pis = default_policy_class(mdp, model_class, stream(cfg.seed, "policy", replica), cfg.n_random_policies)
    data = generate_offline_dataset(mdp, behavior_policy(cfg, mdp, pis), K,
                                    stream(cfg.seed, "data", replica, axis_key))
    res = run_cppo(mdp, model_class, pis, data, cfg.delta, comparator=pis[0])
    pi_star = pis[0]
    return {
        "gap": res.gap,
        "pessimistic_value": res.pessimistic_value,
        "concentrability": res.concentrability,
        "var_star": return_variance(mdp.P, mdp, pi_star),
        "vs_size": len(res.member_indices),
    }


def _cell(cfg, axis, value, replica):
    seed_label = replica
    overrides = {}
    K = int(cfg.K)
    if axis == "K":
        K = int(value)
    elif axis == "H":
        overrides["H"] = int(value)
    elif axis == "sigma":
        overrides["sigma"] = float(value)
    elif axis == "seeds":
        replica = int(value)
        seed_label = replica
    if axis == "sigma" and cfg.match_optimal_value:
        group = [build_instance(cfg, replica, {"sigma": float(v)}) for v in cfg.sweep["sigma"]]
        matched = match_optimal_values([g[0] for g in group])
        idx = list(cfg.sweep["sigma"]).index(value)
        mdp, model_class, pis = matched[idx], group[idx][1], group[idx][2]  # kernels unchanged by rescaling
    else:
        mdp, model_class, pis = build_instance(cfg, replica, overrides)
    row = {"axis": axis, "value": value, "seed": seed_label}
    axis_key = int(round(float(value) * 1000)) if axis != "seeds" else 0
    if cfg.mode == "online":
        row.update(online_row(mdp, model_class, K, cfg.delta, stream(cfg.seed, "agent", replica, axis_key), replica))
    elif cfg.mode == "offline":
        row.update(offline_row(cfg, mdp, model_class, pis, K, replica, axis_key))
    else:
        raise ConfigError(f"sweeps run in online or offline mode, not {cfg.mode!r}")
    return row


def worker_count():
    try:
        return max(1, int(os.environ.get("MBRL_THREADS", "1")))
    except ValueError:
        raise ConfigError("MBRL_THREADS must be an integer") from None


def sweep(cfg, axis):
    """One row per (axis value, seed); ordered by (axis value, seed) regardless of completion order."""
    cfg.validate()
    if axis == "seeds":
        values = cfg.sweep.get("seeds", list(range(cfg.num_seeds)))
        cells = [(v, 0) for v in values]
    else:
        if axis not in cfg.sweep:
            raise ConfigError(f"config has no sweep values for axis {axis!r}")
        values = cfg.sweep[axis]
        cells = [(v, rep) for v in values for rep in range(cfg.num_seeds)]
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        rows = list(pool.map(lambda c: _cell(cfg, axis, c[0], c[1]), cells))
    return rows


def rows_to_csv(rows):
    import csv
    import io

    buf = io.StringIO()
    buf.write(f"# schema_version={SCHEMA_VERSION}\n")
    if rows:
        cols = list(rows[0])
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def mean_by_value(rows, key):
    """{axis value: mean of ``key``} preserving axis order."""
    out = {}
    for row in rows:
        out.setdefault(row["value"], []).append(row[key])
    return {v: float(np.mean(xs)) for v, xs in out.items()}


def loglog_slope(xs, ys):
    xs, ys = np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(xs, ys, 1)[0])


def flatness_ratio(curve, K):
    """(C(K) - C(K/2)) / C(K/2) for a cumulative curve indexed from episode 1."""
    half = curve[K // 2 - 1]
    full = curve[K - 1]
    if half <= 0:
        return 0.0 if full <= 0 else math.inf
    return float((full - half) / half)
