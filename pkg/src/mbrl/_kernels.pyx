# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures and results mirror ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow

cnp.import_array()


def sample_paths(const double[:, :, ::1] trans_cdf,
                 const long long[:, ::1] trans_last,
                 const double[:, :, ::1] action_cdf,
                 const long long[:, ::1] action_last,
                 long long s0,
                 const double[:, ::1] u_state,
                 const double[:, ::1] u_action):
    cdef Py_ssize_t n = u_state.shape[0]
    cdef Py_ssize_t H = u_state.shape[1]
    cdef Py_ssize_t S = trans_cdf.shape[0]
    cdef Py_ssize_t A = trans_cdf.shape[1]
    states_arr = np.empty((n, H + 1), dtype=np.int64)
    actions_arr = np.empty((n, H), dtype=np.int64)
    cdef long long[:, ::1] states = states_arr
    cdef long long[:, ::1] actions = actions_arr
    cdef Py_ssize_t i, h, j
    cdef long long s, a, nxt
    cdef double u
    for i in range(n):
        s = s0
        states[i, 0] = s
        for h in range(H):
            u = u_action[i, h]
            a = action_last[h, s]
            for j in range(A):
                if u < action_cdf[h, s, j]:
                    a = j
                    break
            if a > action_last[h, s]:
                a = action_last[h, s]
            u = u_state[i, h]
            nxt = trans_last[s, a]
            for j in range(S):
                if u < trans_cdf[s, a, j]:
                    nxt = j
                    break
            if nxt > trans_last[s, a]:
                nxt = trans_last[s, a]
            actions[i, h] = a
            s = nxt
            states[i, h + 1] = s
    return states_arr, actions_arr


def evaluate_policies(const double[:, :, :, ::1] P,
                      const double[:, ::1] r,
                      const long long[:, :, ::1] actions):
    cdef Py_ssize_t M = P.shape[0]
    cdef Py_ssize_t S = P.shape[1]
    cdef Py_ssize_t N = actions.shape[0]
    cdef Py_ssize_t H = actions.shape[1]
    out_arr = np.zeros((M, N, S), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    nxt_arr = np.zeros(S, dtype=np.float64)
    cur_arr = np.zeros(S, dtype=np.float64)
    cdef double[::1] nxt = nxt_arr
    cdef double[::1] cur = cur_arr
    cdef Py_ssize_t m, k, h, s, sp
    cdef long long a
    cdef double acc
    for m in range(M):
        for k in range(N):
            for s in range(S):
                nxt[s] = 0.0
            for h in range(H - 1, -1, -1):
                for s in range(S):
                    a = actions[k, h, s]
                    acc = 0.0
                    for sp in range(S):
                        acc += P[m, s, a, sp] * nxt[sp]
                    cur[s] = r[s, a] + acc
                for s in range(S):
                    nxt[s] = cur[s]
            for s in range(S):
                out[m, k, s] = nxt[s]
    return out_arr


def eluder_subsets(const double[:, ::1] values, double eps, double p):
    """Longest independent ordering over subsets; returns (reachable, parent, best)."""
    cdef Py_ssize_t m = values.shape[0]
    cdef Py_ssize_t n = values.shape[1]
    cdef Py_ssize_t full = 1 << n
    cdef double budget = pow(eps, p)
    sums_arr = np.zeros((full, m), dtype=np.float64)
    parent_arr = np.full(full, -1, dtype=np.int64)
    reach_arr = np.zeros(full, dtype=np.uint8)
    powed_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] sums = sums_arr
    cdef long long[::1] parent = parent_arr
    cdef unsigned char[::1] reach = reach_arr
    cdef double[:, ::1] powed = powed_arr
    cdef Py_ssize_t mask, g, x, low, prev, nm
    cdef int ok
    for g in range(m):
        for x in range(n):
            powed[g, x] = pow(fabs(values[g, x]), p)
    reach[0] = 1
    for mask in range(1, full):
        low = 0
        while not (mask >> low) & 1:
            low += 1
        prev = mask & (mask - 1)
        for g in range(m):
            sums[mask, g] = sums[prev, g] + powed[g, low]
    for mask in range(full):
        if not reach[mask]:
            continue
        for x in range(n):
            if (mask >> x) & 1:
                continue
            nm = mask | (1 << x)
            if reach[nm]:
                continue
            ok = 0
            for g in range(m):
                if sums[mask, g] <= budget and fabs(values[g, x]) > eps:
                    ok = 1
                    break
            if ok:
                reach[nm] = 1
                parent[nm] = x
    return reach_arr.astype(bool), parent_arr
