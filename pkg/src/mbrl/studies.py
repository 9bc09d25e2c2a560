"""Headline scaling studies built on harness sweeps: fast rates, second-order and horizon dependence.

Each study returns a plain dict with the measured statistic, the threshold it
is compared against and a ``passed`` flag, so callers can print or serialize it.
"""
from __future__ import annotations

import math

import numpy as np

from mbrl.harness import ExperimentConfig, loglog_slope, mean_by_value, sweep

FAST_RATE_ENV = {"family": "deterministic", "S": 6, "A": 4, "H": 5, "bonus": 3.0}
FAST_RATE_CLASS = {"size": 8, "scale": 0.8, "concentration": 0.05, "realizable": True}
DIAL_ENV = {"family": "variance_dial", "S": 5, "A": 3, "H": 5, "bonus": 1.0}
STOCH_ENV = {"family": "random_stochastic", "S": 5, "A": 3}
SPREAD_CLASS = {"size": 8, "scale": 0.5, "concentration": 0.1, "realizable": True}


def online_fast_rate(K=512, num_seeds=20, seed=0, max_ratio=0.25):
    """Late-half regret growth on a deterministic environment, plus a sqrt(K) control.

    The control is a c * sqrt(k) curve with c fitted to the stochastic
    variant's regret at K/2; its growth ratio is sqrt(2) - 1 for any c.
    """
    det = ExperimentConfig(mode="online", env=dict(FAST_RATE_ENV), model_class=dict(FAST_RATE_CLASS),
                           K=K, num_seeds=num_seeds, seed=seed)
    rows = sweep(_replicas(det), "seeds")
    half = float(np.mean([r["regret_half"] for r in rows]))
    full = float(np.mean([r["regret"] for r in rows]))
    ratio = (full - half) / half if half > 0 else 0.0
    stoch_env = dict(FAST_RATE_ENV, family="variance_dial", sigma=1.0)
    stoch = ExperimentConfig(mode="online", env=stoch_env, model_class=dict(FAST_RATE_CLASS),
                             K=K // 2, num_seeds=num_seeds, seed=seed)
    stoch_half = float(np.mean([r["regret"] for r in sweep(_replicas(stoch), "seeds")]))
    c = stoch_half / math.sqrt(K // 2)
    control_ratio = (c * math.sqrt(K) - stoch_half) / stoch_half if stoch_half > 0 else math.nan
    return {"regret_half": half, "regret_full": full, "ratio": ratio, "threshold": max_ratio,
            "nontrivial": half > 0, "passed": half > 0 and ratio <= max_ratio,
            "control_regret_half": stoch_half, "control_ratio": control_ratio,
            "control_passes": bool(control_ratio <= max_ratio)}


def _replicas(cfg):
    cfg.sweep = {"seeds": list(range(cfg.num_seeds))}
    return cfg


def offline_fast_rate(p=1.0, Ks=(25, 50, 100, 200), num_seeds=20, seed=0, window=(-1.3, -0.7)):
    """log-log slope of the mean suboptimality gap against K on the ladder instance."""
    cfg = ExperimentConfig(mode="offline", env={"family": "ladder", "p": float(p)}, K=int(Ks[0]),
                           num_seeds=num_seeds, seed=seed, behavior="optimal", sweep={"K": list(Ks)})
    gaps = mean_by_value(sweep(cfg, "K"), "gap")
    means = [gaps[k] for k in Ks]
    slope = loglog_slope(Ks, means) if min(means) > 0 else math.nan
    return {"K": list(Ks), "mean_gap": means, "slope": slope, "window": list(window),
            "passed": bool(window[0] <= slope <= window[1])}


def second_order(sigmas=(0.1, 0.4, 1.0), K=512, num_seeds=20, seed=0):
    """Mean cumulative regret across variance_dial sigmas with matched optimal values."""
    cfg = ExperimentConfig(mode="online", env=dict(DIAL_ENV), model_class=dict(SPREAD_CLASS), K=K,
                           num_seeds=num_seeds, seed=seed, match_optimal_value=True,
                           sweep={"sigma": list(sigmas)})
    rows = sweep(cfg, "sigma")
    regret = mean_by_value(rows, "regret")
    var = mean_by_value(rows, "var_star")
    means = [regret[s] for s in sigmas]
    return {"sigma": list(sigmas), "mean_regret": means, "mean_var_star": [var[s] for s in sigmas],
            "passed": bool(all(b >= a for a, b in zip(means, means[1:])))}


def horizon_dependence(Hs=(4, 8, 16, 32), K=256, num_seeds=20, seed=0, max_factor=3.0, env=None):
    """Mean cumulative regret per horizon; rewards are renormalized to max path reward 1 at every H."""
    cfg = ExperimentConfig(mode="online", env=dict(env or STOCH_ENV), model_class=dict(SPREAD_CLASS), K=K,
                           num_seeds=num_seeds, seed=seed, sweep={"H": list(Hs)})
    regret = mean_by_value(sweep(cfg, "H"), "regret")
    means = [regret[h] for h in Hs]
    factor = means[-1] / means[0] if means[0] > 0 else math.inf
    return {"H": list(Hs), "mean_regret": means, "factor": factor, "threshold": max_factor,
            "passed": bool(factor <= max_factor)}


def behavior_floor(mdp, behavior_probs):
    """Smallest positive behavior occupancy over (h, s, a)."""
    from mbrl.mdp import occupancy

    d = occupancy(mdp.P, mdp, behavior_probs).d
    return float(d[d > 0].min())


def coverage_study(num_seeds=100, seed=0, delta=0.1, rho_floor=0.05, env=None, model_class=None,
                   min_fraction=0.9, max_draws=50):
    """Empirical concentrability of pi* under uniform i.i.d. behavior against 2 / rho_min.

    Per seed an environment is drawn (redrawn until the behavior floor reaches
    ``rho_floor``), then K = ceil(2 log(S A H / delta) / rho_min^2) trajectories.
    """
    from mbrl.harness import gen_environment, gen_model_class, stream
    from mbrl.mdp import optimal_planning
    from mbrl.offline import concentrability, generate_offline_dataset

    env = dict(env or {"family": "random_stochastic", "S": 3, "A": 2, "H": 3, "alpha": 5.0})
    mc = dict(model_class or SPREAD_CLASS)
    family = env.pop("family")
    records = []
    for rep in range(num_seeds):
        for draw in range(max_draws):
            mdp = gen_environment(family, env, stream(seed, "env", rep, draw))
            probs = np.full((mdp.H, mdp.S, mdp.A), 1.0 / mdp.A)
            rho = behavior_floor(mdp, probs)
            if rho >= rho_floor:
                break
        else:
            raise RuntimeError(f"no environment with behavior floor {rho_floor} in {max_draws} draws")
        model_class = gen_model_class(mdp, int(mc["size"]), float(mc["scale"]), stream(seed, "class", rep),
                                      concentration=float(mc.get("concentration", 1.0)))
        K = math.ceil(2.0 * math.log(mdp.S * mdp.A * mdp.H / delta) / rho ** 2)
        data = generate_offline_dataset(mdp, probs, K, stream(seed, "data", rep))
        pi_star, _ = optimal_planning(mdp.P, mdp)
        c = concentrability(data, model_class, mdp, pi_star)
        records.append({"seed": rep, "rho_min": rho, "K": K, "concentrability": c, "bound": 2.0 / rho,
                        "within": bool(c <= 2.0 / rho)})
    fraction = float(np.mean([r["within"] for r in records]))
    return {"records": records, "fraction": fraction, "min_fraction": min_fraction,
            "passed": fraction >= min_fraction}
