"""Pessimistic offline planning over a likelihood-ratio version space (max-min over a finite policy class)."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from mbrl import kernels
from mbrl.divergences import hellinger_sq_rows
from mbrl.errors import InvariantError
from mbrl.estimation import TransitionDataset, beta_threshold, build_version_space
from mbrl.mdp import Policy, occupancy, optimal_planning, sample_trajectories

# Reported when the comparator puts Hellinger mass where the dataset has none.
UNCOVERED = math.inf


@dataclass(frozen=True, eq=False)
class PolicyClass:
    policies: tuple

    def __post_init__(self):
        pols = tuple(self.policies)
        if not pols:
            raise InvariantError("policy class must be nonempty")
        object.__setattr__(self, "policies", pols)

    def __len__(self):
        return len(self.policies)

    def __getitem__(self, i):
        return self.policies[i]

    def index(self, policy):
        for i, p in enumerate(self.policies):
            if p == policy:
                return i
        raise InvariantError("comparator policy is not a member of the policy class")

    def stacked(self):
        return np.stack([p.actions for p in self.policies])

    def subset(self, indices):
        return PolicyClass(tuple(self.policies[i] for i in indices))


@dataclass
class OfflineResult:
    chosen_index: int
    pessimistic_value: float
    min_values: np.ndarray  # per policy, min over the version space
    value_matrix: np.ndarray  # (policies, members)
    member_indices: tuple
    gap: float = math.nan
    comparator_index: int | None = None
    true_values: np.ndarray | None = None
    concentrability: float = math.nan
    beta: float = math.nan

    def to_dict(self):
        return {
            "chosen_index": self.chosen_index,
            "pessimistic_value": self.pessimistic_value,
            "min_values": self.min_values.tolist(),
            "member_indices": list(self.member_indices),
            "gap": self.gap,
            "comparator_index": self.comparator_index,
            "true_values": None if self.true_values is None else self.true_values.tolist(),
            "concentrability": self.concentrability,
            "beta": self.beta,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def generate_offline_dataset(mdp, behavior, K, rng):
    """K trajectories under P*.

    ``behavior`` is a Policy, an (H, S, A) array of action probabilities, or a
    callable ``rule(h, s, history, rng) -> action`` where ``history`` lists the
    finished trajectories as (H, 3) tuple arrays. Transitions always come from P*.
    """
    if isinstance(behavior, Policy) or not callable(behavior):
        states, actions = sample_trajectories(mdp, behavior, K, rng)
        return TransitionDataset.from_paths(states, actions)
    cdf = np.cumsum(mdp.P, axis=2)
    history = []
    for _ in range(K):
        s = mdp.s0
        steps = np.zeros((mdp.H, 3), dtype=np.int64)
        for h in range(mdp.H):
            a = int(behavior(h, s, history, rng))
            if not 0 <= a < mdp.A:
                raise InvariantError(f"behavior rule chose action {a} outside [0, {mdp.A})")
            nxt = min(int(np.searchsorted(cdf[s, a], rng.random(), side="right")), mdp.S - 1)
            while mdp.P[s, a, nxt] == 0:  # roundoff past the last support point
                nxt -= 1
            steps[h] = (s, a, nxt)
            s = nxt
        history.append(steps)
    return TransitionDataset(np.concatenate(history), mdp.H)


def pessimistic_plan(vs, model_class, pis, mdp):
    """argmax over policies of min over members of V_{0;P}(s0); lowest policy index on ties."""
    members = list(vs.member_indices)
    V0 = kernels.evaluate_policies(model_class.kernels[members], mdp.r, pis.stacked())[:, :, mdp.s0]
    matrix = V0.T  # (policies, members)
    mins = matrix.min(axis=1)
    chosen = int(np.argmax(mins))
    return OfflineResult(chosen, float(mins[chosen]), mins, matrix, tuple(members))


def concentrability(data, model_class, mdp, comparator):
    """Data-dependent single-policy concentrability of ``comparator``.

    Max over steps h and models P != P* of E_{d_h}[H^2(P || P*)] divided by the
    dataset average of H^2 at step h. (0, 0) ratios are skipped; a positive
    numerator over a zero denominator yields UNCOVERED. Returns 0 when nothing
    is compared.
    """
    model_class.check_realizable(mdp)
    data.check_against(mdp.S, mdp.A)
    if data.horizon != mdp.H or data.num_trajectories == 0:
        raise InvariantError("dataset must hold at least one trajectory of the MDP's horizon")
    others = [i for i in range(len(model_class)) if i != model_class.truth_index]
    if not others:
        return 0.0
    h2 = hellinger_sq_rows(model_class.kernels[others], mdp.P[None])  # (M', S, A)
    occ = occupancy(mdp.P, mdp, comparator).d
    best = 0.0
    for h in range(mdp.H):
        num = np.einsum("msa,sa->m", h2, occ[h])
        pairs = data.step_pairs(h)
        den = h2[:, pairs[:, 0], pairs[:, 1]].mean(axis=1)
        for n, d in zip(num, den):
            if d > 0:
                best = max(best, float(n / d))
            elif n > 0:
                return UNCOVERED
    return best


def run_cppo(mdp, model_class, pis, data, delta, comparator=None):
    """Version space at 4 log(|class|/delta), max-min planning, gap and coverage vs the comparator.

    ``comparator`` defaults to the DP optimum under P*; it must belong to ``pis``.
    """
    model_class.check_realizable(mdp)
    beta = beta_threshold("offline_finite", len(model_class), delta=delta)
    vs = build_version_space(model_class, data, beta)
    result = pessimistic_plan(vs, model_class, pis, mdp)
    if comparator is None:
        comparator, _ = optimal_planning(mdp.P, mdp)
    true_values = kernels.evaluate_policies(mdp.P[None], mdp.r, pis.stacked())[0, :, mdp.s0]
    result.comparator_index = pis.index(comparator)
    result.true_values = true_values
    result.gap = float(true_values[result.comparator_index] - true_values[result.chosen_index])
    result.concentrability = concentrability(data, model_class, mdp, comparator)
    result.beta = beta
    return result


def default_policy_class(mdp, model_class, rng, n_random=8):
    """pi*, the DP optimum of every class member, and random policies, deduplicated in that order."""
    cands = [optimal_planning(mdp.P, mdp)[0]]
    cands += [optimal_planning(model_class.kernels[i], mdp)[0] for i in range(len(model_class))]
    cands += [Policy(rng.integers(0, mdp.A, size=(mdp.H, mdp.S))) for _ in range(n_random)]
    seen, out = set(), []
    for p in cands:
        if p.key() not in seen:
            seen.add(p.key())
            out.append(p)
    return PolicyClass(tuple(out))
