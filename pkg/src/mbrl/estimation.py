"""Finite model classes, transition datasets, MLE and likelihood-ratio version spaces."""
from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from mbrl.divergences import hellinger_sq_rows
from mbrl.errors import DimensionError, InvariantError
from mbrl.mdp import TransitionModel, check_kernel, sample_trajectories

# Log-likelihood of data containing a probability-zero transition. Ordered below
# every finite log-likelihood; never used in arithmetic.
IMPOSSIBLE = -sys.float_info.max


@dataclass(frozen=True, eq=False)
class ModelClass:
    """Indexed finite family of kernels, stacked as (M, S, A, S)."""

    kernels: np.ndarray
    truth_index: int | None = None

    def __post_init__(self):
        ks = np.asarray(self.kernels, dtype=np.float64)
        if ks.ndim != 4 or ks.shape[0] < 1:
            raise InvariantError(f"model class must be a nonempty (M, S, A, S) stack, got {ks.shape}")
        for i in range(ks.shape[0]):
            check_kernel(ks[i], name=f"model {i}")
        ks = ks.copy()
        ks.setflags(write=False)
        object.__setattr__(self, "kernels", ks)
        if self.truth_index is not None:
            t = int(self.truth_index)
            if not 0 <= t < ks.shape[0]:
                raise InvariantError(f"truth index {t} outside class of size {ks.shape[0]}")
            object.__setattr__(self, "truth_index", t)

    @classmethod
    def from_models(cls, models, truth_index=None):
        return cls(np.stack([m.kernel if isinstance(m, TransitionModel) else np.asarray(m) for m in models]),
                   truth_index)

    def __len__(self):
        return self.kernels.shape[0]

    def __getitem__(self, i):
        return TransitionModel(self.kernels[i])

    @property
    def truth(self):
        if self.truth_index is None:
            raise InvariantError("model class has no declared truth index")
        return self.kernels[self.truth_index]

    def check_realizable(self, mdp):
        if self.kernels.shape[1:] != mdp.P.shape:
            raise DimensionError("model", mdp.P.shape, self.kernels.shape[1:])
        if self.truth_index is None or not np.allclose(self.truth, mdp.P, rtol=0.0, atol=1e-12):
            raise InvariantError("model class is not realizable: truth index missing or differs from P*")

    def to_dict(self):
        return {"models": self.kernels.tolist(), "truth_index": self.truth_index}

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(np.asarray(doc["models"], dtype=np.float64), doc.get("truth_index"))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvariantError(f"malformed model-class document: {exc}") from exc


@dataclass(frozen=True, eq=False)
class TransitionDataset:
    """Ordered (s, a, s') tuples; consecutive blocks of ``horizon`` form trajectories."""

    tuples: np.ndarray
    horizon: int

    def __post_init__(self):
        tup = np.asarray(self.tuples, dtype=np.int64).reshape(-1, 3)
        H = int(self.horizon)
        if H < 1:
            raise InvariantError("dataset horizon must be positive")
        if len(tup) % H:
            raise InvariantError(f"{len(tup)} tuples do not split into trajectories of length {H}")
        if tup.size and tup.min() < 0:
            raise InvariantError("negative index in dataset")
        tup.setflags(write=False)
        object.__setattr__(self, "tuples", tup)
        object.__setattr__(self, "horizon", H)

    @classmethod
    def empty(cls, horizon):
        return cls(np.zeros((0, 3), dtype=np.int64), horizon)

    @classmethod
    def from_paths(cls, states, actions):
        states = np.asarray(states, dtype=np.int64)
        actions = np.asarray(actions, dtype=np.int64)
        K, H = actions.shape
        tup = np.stack([states[:, :-1], actions, states[:, 1:]], axis=2).reshape(K * H, 3)
        return cls(tup, H)

    def __len__(self):
        return len(self.tuples)

    @property
    def num_trajectories(self):
        return len(self.tuples) // self.horizon

    @property
    def trajectory_boundaries(self):
        return np.arange(0, len(self.tuples) + 1, self.horizon)

    def check_against(self, num_states, num_actions):
        if len(self.tuples) == 0:
            return
        if self.tuples[:, [0, 2]].max() >= num_states:
            raise DimensionError("states", num_states, int(self.tuples[:, [0, 2]].max()) + 1)
        if self.tuples[:, 1].max() >= num_actions:
            raise DimensionError("actions", num_actions, int(self.tuples[:, 1].max()) + 1)
        chained = self.tuples[1:, 0] == self.tuples[:-1, 2]
        starts = np.zeros(len(self.tuples) - 1, dtype=bool)
        starts[self.horizon - 1::self.horizon] = True
        if not np.all(chained | starts):
            raise InvariantError("trajectory steps do not chain s' -> s")

    def counts(self, num_states, num_actions):
        self.check_against(num_states, num_actions)
        N = np.zeros((num_states, num_actions, num_states), dtype=np.int64)
        np.add.at(N, (self.tuples[:, 0], self.tuples[:, 1], self.tuples[:, 2]), 1)
        return N

    def step_pairs(self, h):
        """(s, a) at step h of every trajectory, shape (K, 2)."""
        return self.tuples[h::self.horizon, :2]

    def trajectory(self, k):
        return self.tuples[k * self.horizon:(k + 1) * self.horizon]

    def extend(self, other):
        if other.horizon != self.horizon:
            raise DimensionError("horizon", self.horizon, other.horizon)
        return TransitionDataset(np.concatenate([self.tuples, other.tuples]), self.horizon)

    def head(self, k):
        return TransitionDataset(self.tuples[:k * self.horizon], self.horizon)

    def reorder(self, order):
        """Permute whole trajectories."""
        blocks = self.tuples.reshape(-1, self.horizon, 3)[np.asarray(order)]
        return TransitionDataset(blocks.reshape(-1, 3), self.horizon)

    def to_jsonl(self):
        return "".join(json.dumps({"steps": self.trajectory(k).tolist()}) + "\n"
                       for k in range(self.num_trajectories))

    @classmethod
    def from_jsonl(cls, text, horizon=None):
        trajs = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                steps = np.asarray(json.loads(line)["steps"], dtype=np.int64).reshape(-1, 3)
            except (KeyError, TypeError, ValueError) as exc:
                raise InvariantError(f"dataset line {lineno}: {exc}") from exc
            trajs.append(steps)
        if not trajs:
            if horizon is None:
                raise InvariantError("empty dataset and no horizon given")
            return cls.empty(horizon)
        lengths = {len(t) for t in trajs}
        if len(lengths) != 1 or (horizon is not None and lengths != {horizon}):
            raise InvariantError(f"trajectory lengths {sorted(lengths)} are inconsistent")
        return cls(np.concatenate(trajs), lengths.pop())


@dataclass(frozen=True, eq=False)
class VersionSpace:
    member_indices: tuple
    beta: float
    max_loglik: float
    logliks: np.ndarray

    def __len__(self):
        return len(self.member_indices)

    def __contains__(self, idx):
        return idx in self.member_indices


def _log_tables(kernels):
    positive = kernels > 0
    return np.log(np.where(positive, kernels, 1.0)), (~positive).astype(np.float64)


def logliks_from_counts(kernels, counts, tables=None):
    """Per-model log-likelihood from transition counts; IMPOSSIBLE where a zero is hit."""
    logp, zero = tables if tables is not None else _log_tables(kernels)
    N = counts.astype(np.float64).ravel()
    M = logp.shape[0]
    ll = logp.reshape(M, -1) @ N
    hits = zero.reshape(M, -1) @ N
    return np.where(hits > 0, IMPOSSIBLE, ll)


def log_likelihood(model, data):
    P = model.kernel if isinstance(model, TransitionModel) else np.asarray(model, dtype=np.float64)
    counts = data.counts(P.shape[0], P.shape[1])
    return float(logliks_from_counts(P[None], counts)[0])


def log_likelihoods(model_class, data):
    ks = model_class.kernels
    return logliks_from_counts(ks, data.counts(ks.shape[1], ks.shape[2]))


def mle(model_class, data):
    """Index of the likelihood maximizer; lowest index on ties."""
    return int(np.argmax(log_likelihoods(model_class, data)))


def version_space_from_logliks(logliks, beta):
    if beta < 0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    top = float(np.max(logliks))
    if top == IMPOSSIBLE:
        raise InvariantError("every model assigns probability zero to the data")
    keep = (logliks != IMPOSSIBLE) & (logliks >= top - beta)
    return VersionSpace(tuple(int(i) for i in np.flatnonzero(keep)), float(beta), top, logliks)


def build_version_space(model_class, data, beta):
    return version_space_from_logliks(log_likelihoods(model_class, data), beta)


def beta_threshold(mode, class_size, K=1, delta=0.1):
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if class_size < 1:
        raise ValueError(f"class size must be at least 1, got {class_size}")
    if mode == "offline_finite":
        return 4.0 * math.log(class_size / delta)
    if mode == "online_finite":
        if K < 1:
            raise ValueError(f"K must be at least 1, got {K}")
        return 4.0 * math.log(K * class_size / delta)
    raise ValueError(f"unknown beta mode {mode!r}")


@dataclass
class MleCoverageRecord:
    trials: int
    delta: float
    beta: float  # ln(|class| / delta)
    threshold: float  # 4 * beta, the version-space width
    hellinger_bound: float  # 22 * beta
    truth_missing: int  # failures of event (1)
    hellinger_exceeded: int  # failures of event (2)
    max_hellinger_sum: float

    @property
    def failure_budget(self):
        """delta * trials plus a three-sigma binomial allowance."""
        return self.delta * self.trials + 3.0 * math.sqrt(self.trials * self.delta * (1 - self.delta))

    @property
    def passed(self):
        budget = self.failure_budget
        return self.truth_missing <= budget and self.hellinger_exceeded <= budget


def hellinger_sum(model_class, data, idx):
    """Sum over dataset tuples of H^2(P_idx(s, a) || P*(s, a))."""
    h2 = hellinger_sq_rows(model_class.kernels[idx], model_class.truth)
    pairs = data.tuples[:, :2]
    return float(np.sum(h2[pairs[:, 0], pairs[:, 1]]))


def check_mle_generalization(mdp, model_class, policy, K, delta, trials, rng):
    """Monte Carlo frequency of the two MLE generalization events over fresh datasets."""
    model_class.check_realizable(mdp)
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    beta = math.log(len(model_class) / delta)
    h2 = hellinger_sq_rows(model_class.kernels, model_class.truth[None])  # (M, S, A)
    tables = _log_tables(model_class.kernels)
    missing = exceeded = 0
    worst = 0.0
    for _ in range(trials):
        states, actions = sample_trajectories(mdp, policy, K, rng)
        data = TransitionDataset.from_paths(states, actions)
        counts = data.counts(mdp.S, mdp.A)
        vs = version_space_from_logliks(logliks_from_counts(model_class.kernels, counts, tables), 4 * beta)
        if model_class.truth_index not in vs:
            missing += 1
        visits = counts.sum(axis=2)
        sums = np.einsum("msa,sa->m", h2, visits)[list(vs.member_indices)]
        worst = max(worst, float(sums.max()))
        if np.any(sums > 22 * beta):
            exceeded += 1
    return MleCoverageRecord(trials, delta, beta, 4 * beta, 22 * beta, missing, exceeded, worst)
