"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def sample_paths(trans_cdf, trans_last, action_cdf, action_last, s0, u_state, u_action):
    n, H = u_state.shape
    states = np.empty((n, H + 1), dtype=np.int64)
    actions = np.empty((n, H), dtype=np.int64)
    s = np.full(n, s0, dtype=np.int64)
    states[:, 0] = s
    rows = np.arange(n)
    for h in range(H):
        acdf = action_cdf[h, s]  # (n, A)
        a = np.argmax(u_action[:, h, None] < acdf, axis=1)
        hit = (u_action[:, h, None] < acdf).any(axis=1)
        a = np.where(hit, np.minimum(a, action_last[h, s]), action_last[h, s])
        tcdf = trans_cdf[s, a]  # (n, S)
        below = u_state[:, h, None] < tcdf
        nxt = np.argmax(below, axis=1)
        hit = below.any(axis=1)
        last = trans_last[s, a]
        nxt = np.where(hit, np.minimum(nxt, last), last)
        actions[rows, h] = a
        s = nxt.astype(np.int64)
        states[:, h + 1] = s
    return states, actions


def evaluate_policies(P, r, actions):
    M, S = P.shape[0], P.shape[1]
    N, H = actions.shape[0], actions.shape[1]
    out = np.zeros((M, N, S))
    idx = np.arange(S)
    for k in range(N):
        v = np.zeros((M, S))
        for h in range(H - 1, -1, -1):
            a = actions[k, h]
            rows = P[:, idx, a, :]  # (M, S, S)
            v = r[idx, a][None, :] + np.einsum("mij,mj->mi", rows, v)
        out[:, k] = v
    return out


def eluder_subsets(values, eps, p):
    m, n = values.shape
    full = 1 << n
    budget = eps**p
    powed = np.abs(values) ** p
    absv = np.abs(values)
    sums = np.zeros((full, m))
    for mask in range(1, full):
        low = (mask & -mask).bit_length() - 1
        sums[mask] = sums[mask & (mask - 1)] + powed[:, low]
    reach = np.zeros(full, dtype=bool)
    parent = np.full(full, -1, dtype=np.int64)
    reach[0] = True
    exceeds = absv > eps  # (m, n)
    for mask in range(full):
        if not reach[mask]:
            continue
        live = sums[mask] <= budget
        if not live.any():
            continue
        extendable = exceeds[live].any(axis=0)
        for x in np.flatnonzero(extendable):
            if (mask >> x) & 1:
                continue
            nm = mask | (1 << int(x))
            if not reach[nm]:
                reach[nm] = True
                parent[nm] = x
    return reach, parent
