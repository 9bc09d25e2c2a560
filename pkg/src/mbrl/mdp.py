"""Finite-horizon, time-homogeneous tabular MDPs.

Arrays follow one layout throughout the package:

* transition kernels ``P[s, a, s']`` with shape (S, A, S)
* rewards ``r[s, a]`` with shape (S, A), deterministic and known
* policies ``actions[h, s]`` with shape (H, S)
* values ``V[h, s]`` for h in 0..H and ``Q[h, s, a]`` for h in 0..H-1
"""
from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass

import numpy as np

from mbrl import kernels
from mbrl.errors import DimensionError, InvariantError

DIST_TOL = 1e-12
IDENTITY_TOL = 1e-10


def check_kernel(P, name="transition"):
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 3 or P.shape[0] != P.shape[2]:
        raise InvariantError(f"{name} kernel must have shape (S, A, S), got {P.shape}")
    if not np.all(np.isfinite(P)) or np.any(P < 0):
        raise InvariantError(f"{name} kernel has negative or non-finite entries")
    err = np.abs(P.sum(axis=2) - 1.0)
    if np.any(err > DIST_TOL):
        s, a = np.unravel_index(np.argmax(err), err.shape)
        raise InvariantError(f"{name} row ({s}, {a}) sums to {P[s, a].sum()!r}")
    return P


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class TransitionModel:
    """One candidate kernel P[s, a] -> distribution over next states."""

    kernel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "kernel", _frozen(check_kernel(self.kernel), np.float64))

    @property
    def num_states(self):
        return self.kernel.shape[0]

    @property
    def num_actions(self):
        return self.kernel.shape[1]

    def row(self, s, a):
        return self.kernel[s, a]


def as_kernel(model):
    """Accept a TransitionModel, an MDP or a raw (S, A, S) array."""
    if isinstance(model, TransitionModel):
        return model.kernel
    if isinstance(model, TabularMdp):
        return model.P
    return np.asarray(model, dtype=np.float64)


def _max_path_reward(P, r, H, s0):
    support = P > 0
    best = np.zeros(P.shape[0])
    for _ in range(H):
        nxt = np.where(support, best[None, None, :], -np.inf).max(axis=2)
        best = (r + nxt).max(axis=1)
    return float(best[s0])


@dataclass(frozen=True, eq=False)
class TabularMdp:
    P: np.ndarray
    r: np.ndarray
    H: int
    s0: int = 0

    def __post_init__(self):
        P = check_kernel(self.P)
        r = np.asarray(self.r, dtype=np.float64)
        S, A = P.shape[0], P.shape[1]
        if r.shape != (S, A):
            axis = "states" if r.ndim < 1 or r.shape[0] != S else "actions"
            raise DimensionError(axis, (S, A), r.shape)
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise InvariantError("rewards must be finite and nonnegative")
        if int(self.H) < 1:
            raise InvariantError(f"horizon must be positive, got {self.H}")
        if not 0 <= int(self.s0) < S:
            raise InvariantError(f"start state {self.s0} outside [0, {S})")
        object.__setattr__(self, "P", _frozen(P, np.float64))
        object.__setattr__(self, "r", _frozen(r, np.float64))
        object.__setattr__(self, "H", int(self.H))
        object.__setattr__(self, "s0", int(self.s0))
        top = _max_path_reward(self.P, self.r, self.H, self.s0)
        if top > 1.0 + DIST_TOL:
            raise InvariantError(f"trajectory reward not normalized: max path reward {top!r} > 1")

    @property
    def S(self):
        return self.P.shape[0]

    @property
    def A(self):
        return self.P.shape[1]

    @property
    def model(self):
        return TransitionModel(self.P)

    def to_dict(self):
        return {"S": self.S, "A": self.A, "H": self.H, "s0": self.s0,
                "P": self.P.tolist(), "r": self.r.tolist()}

    @classmethod
    def from_dict(cls, doc):
        try:
            S, A = int(doc["S"]), int(doc["A"])
            P = np.asarray(doc["P"], dtype=np.float64)
            r = np.asarray(doc["r"], dtype=np.float64)
            H, s0 = int(doc["H"]), int(doc.get("s0", 0))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvariantError(f"malformed MDP document: {exc}") from exc
        if P.shape != (S, A, S):
            raise DimensionError("P", (S, A, S), P.shape)
        return cls(P, r, H, s0)

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class Policy:
    """Deterministic non-stationary policy, ``actions[h, s]``."""

    actions: np.ndarray

    def __post_init__(self):
        acts = np.asarray(self.actions)
        if acts.ndim != 2:
            raise InvariantError(f"policy table must be (H, S), got shape {acts.shape}")
        if acts.size and acts.min() < 0:
            raise InvariantError("negative action index in policy")
        object.__setattr__(self, "actions", _frozen(acts, np.int64))

    @classmethod
    def constant(cls, H, S, a=0):
        return cls(np.full((H, S), a, dtype=np.int64))

    def __call__(self, h, s):
        return int(self.actions[h, s])

    @property
    def H(self):
        return self.actions.shape[0]

    def probs(self, A):
        out = np.zeros(self.actions.shape + (A,))
        np.put_along_axis(out, self.actions[..., None], 1.0, axis=2)
        return out

    def key(self):
        return self.actions.tobytes()

    def __eq__(self, other):
        return isinstance(other, Policy) and np.array_equal(self.actions, other.actions)

    def __hash__(self):
        return hash(self.key())


@dataclass(frozen=True, eq=False)
class ValueTables:
    V: np.ndarray  # (H+1, S)
    Q: np.ndarray  # (H, S, A)

    def value(self, s, h=0):
        return float(self.V[h, s])


@dataclass(frozen=True, eq=False)
class OccupancyMeasure:
    d: np.ndarray  # (H, S, A)

    def state_marginal(self, h):
        return self.d[h].sum(axis=1)


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray  # (H+1,)
    actions: np.ndarray  # (H,)
    rewards: np.ndarray  # (H,)

    @property
    def steps(self):
        return [(int(self.states[h]), int(self.actions[h]), float(self.rewards[h]), int(self.states[h + 1]))
                for h in range(len(self.actions))]

    def __len__(self):
        return len(self.actions)


def _check_model(P, mdp):
    if P.ndim != 3:
        raise DimensionError("model", 3, P.ndim)
    for axis, got, want in (("states", P.shape[0], mdp.S), ("actions", P.shape[1], mdp.A),
                            ("next_states", P.shape[2], mdp.S)):
        if got != want:
            raise DimensionError(axis, want, got)


def _check_policy(policy, mdp):
    acts = policy.actions
    if acts.shape[0] != mdp.H:
        raise DimensionError("horizon", mdp.H, acts.shape[0])
    if acts.shape[1] != mdp.S:
        raise DimensionError("states", mdp.S, acts.shape[1])
    if acts.max() >= mdp.A:
        raise DimensionError("actions", mdp.A, int(acts.max()) + 1)


def _action_probs(policy, mdp):
    if isinstance(policy, Policy):
        _check_policy(policy, mdp)
        return policy.probs(mdp.A)
    probs = np.asarray(policy, dtype=np.float64)
    if probs.shape != (mdp.H, mdp.S, mdp.A):
        raise DimensionError("policy", (mdp.H, mdp.S, mdp.A), probs.shape)
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=2) - 1.0) > DIST_TOL):
        raise InvariantError("stochastic policy rows must be distributions over actions")
    return probs


def policy_evaluation(model, mdp, policy):
    P = as_kernel(model)
    _check_model(P, mdp)
    _check_policy(policy, mdp)
    H, S = mdp.H, mdp.S
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, mdp.A))
    idx = np.arange(S)
    for h in range(H - 1, -1, -1):
        Q[h] = mdp.r + P @ V[h + 1]
        V[h] = Q[h][idx, policy.actions[h]]
    return ValueTables(V, Q)


def optimal_planning(model, mdp):
    """Backward induction; argmax ties go to the lowest action index."""
    P = as_kernel(model)
    _check_model(P, mdp)
    H, S = mdp.H, mdp.S
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, mdp.A))
    acts = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        Q[h] = mdp.r + P @ V[h + 1]
        acts[h] = np.argmax(Q[h], axis=1)
        V[h] = Q[h].max(axis=1)
    return Policy(acts), ValueTables(V, Q)


def occupancy(model, mdp, policy):
    """Forward state-action distributions from the point mass at s0.

    ``policy`` is a deterministic Policy or an (H, S, A) array of action probabilities.
    """
    P = as_kernel(model)
    _check_model(P, mdp)
    probs = _action_probs(policy, mdp)
    d = np.zeros((mdp.H, mdp.S, mdp.A))
    mu = np.zeros(mdp.S)
    mu[mdp.s0] = 1.0
    for h in range(mdp.H):
        d[h] = mu[:, None] * probs[h]
        mu = np.einsum("sa,sat->t", d[h], P)
    return OccupancyMeasure(d)


def sample_trajectories(mdp, policy, n, rng):
    """Draw n i.i.d. rollouts under P*; returns (states (n, H+1), actions (n, H))."""
    probs = _action_probs(policy, mdp)
    u_state = rng.random((n, mdp.H))
    if isinstance(policy, Policy):
        u_action = np.zeros((n, mdp.H))
    else:
        u_action = rng.random((n, mdp.H))
    return kernels.sample_paths(mdp.P, probs, mdp.s0, u_state, u_action)


def sample_trajectory(mdp, policy, rng):
    states, actions = sample_trajectories(mdp, policy, 1, rng)
    states, actions = states[0], actions[0]
    return Trajectory(states, actions, mdp.r[states[:-1], actions])


def trajectory_return(traj):
    return float(np.sum(traj.rewards))


def _variance_terms(P, V_next):
    """(V_P f)(s, a) for f = V_next, as E[(f - E f)^2] to stay nonnegative."""
    mean = P @ V_next
    return np.einsum("sat,sat->sa", P, (V_next[None, None, :] - mean[..., None]) ** 2)


def return_variance(model, mdp, policy):
    """Var of the trajectory return via the change-of-variance identity."""
    P = as_kernel(model)
    vals = policy_evaluation(P, mdp, policy)
    occ = occupancy(P, mdp, policy)
    total = 0.0
    for h in range(mdp.H):
        total += float(np.sum(occ.d[h] * _variance_terms(P, vals.V[h + 1])))
    return total


def max_trajectory_reward(mdp):
    return _max_path_reward(mdp.P, mdp.r, mdp.H, mdp.s0)


def path_distribution(model, mdp, policy, max_paths=10**5):
    """Enumerate positive-probability paths: returns (probabilities, returns).

    Raises InvariantError when the path count exceeds ``max_paths``.
    """
    P = as_kernel(model)
    _check_model(P, mdp)
    _check_policy(policy, mdp)
    probs = np.array([1.0])
    rets = np.array([0.0])
    states = np.array([mdp.s0])
    for h in range(mdp.H):
        a = policy.actions[h, states]
        rets = rets + mdp.r[states, a]
        if h == mdp.H - 1:
            break
        rows = P[states, a]  # (n, S)
        i, nxt = np.nonzero(rows > 0)
        if len(i) > max_paths:
            raise InvariantError(f"more than {max_paths} paths at step {h}")
        probs = probs[i] * rows[i, nxt]
        rets = rets[i]
        states = nxt
    return probs, rets


def enumerate_policies(S, A, H):
    """Every deterministic non-stationary policy (A ** (S * H) of them)."""
    for combo in itertools.product(range(A), repeat=S * H):
        yield Policy(np.array(combo, dtype=np.int64).reshape(H, S))


def bellman_residual(model, mdp, policy, tables):
    P = as_kernel(model)
    idx = np.arange(mdp.S)
    res = 0.0
    for h in range(mdp.H):
        target = mdp.r[idx, policy.actions[h]] + P[idx, policy.actions[h]] @ tables.V[h + 1]
        res = max(res, float(np.max(np.abs(tables.V[h] - target))))
    return max(res, float(np.max(np.abs(tables.V[mdp.H]))))
