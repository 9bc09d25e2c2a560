"""Squared Hellinger distance, triangular discrimination and the one-step variance operator."""
import math

import numpy as np

from mbrl.errors import DimensionError, InvariantError
from mbrl.mdp import DIST_TOL, as_kernel


def _pair(p, q):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError("outcomes", p.shape, q.shape)
    for name, v in (("p", p), ("q", q)):
        if v.ndim != 1 or np.any(v < 0) or abs(v.sum() - 1.0) > DIST_TOL:
            raise InvariantError(f"{name} is not a probability vector")
    return p, q


def hellinger_sq(p, q):
    """H^2(p || q) = 1/2 * sum (sqrt q - sqrt p)^2, clipped into [0, 1]."""
    p, q = _pair(p, q)
    val = 0.5 * float(np.sum((np.sqrt(q) - np.sqrt(p)) ** 2))
    return min(max(val, 0.0), 1.0)


def hellinger_sq_rows(P, Q):
    """Row-wise H^2 over the last axis, broadcasting leading axes: (S, A, S) kernels -> (S, A)."""
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    if P.shape[-1] != Q.shape[-1]:
        raise DimensionError("outcomes", P.shape[-1], Q.shape[-1])
    return np.clip(0.5 * np.sum((np.sqrt(Q) - np.sqrt(P)) ** 2, axis=-1), 0.0, 1.0)


def triangle_disc(p, q):
    """D(p || q) = sum (p - q)^2 / (p + q); outcomes with p = q = 0 contribute 0."""
    p, q = _pair(p, q)
    tot = p + q
    live = tot > 0
    return float(np.sum((p[live] - q[live]) ** 2 / tot[live]))


def variance_operator(model, f, s, a):
    """Variance of f(s') for s' ~ model(s, a)."""
    row = as_kernel(model)[s, a]
    f = np.asarray(f, dtype=np.float64)
    if f.shape != row.shape:
        raise DimensionError("states", row.shape, f.shape)
    mean = float(row @ f)
    return float(row @ (f - mean) ** 2)


def pushforward(values, p):
    """Law of values[x] under x ~ p, on the exact set of attained values."""
    values = np.asarray(values, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    support, inverse = np.unique(values, return_inverse=True)
    return support, np.bincount(inverse.ravel(), weights=p.ravel(), minlength=len(support))


def check_mean_to_variance(values, f, g):
    """Both sides of |E_f x - E_g x| <= 4 sqrt(Var_f * D(f||g)) + 5 D(f||g) on a grid in [0, 1].

    Returns (lhs, rhs, holds) with a 1e-12 allowance on the comparison.
    """
    values = np.asarray(values, dtype=np.float64)
    f, g = _pair(f, g)
    if values.shape != f.shape:
        raise DimensionError("grid", f.shape, values.shape)
    if np.any(values < 0) or np.any(values > 1):
        raise InvariantError("mean-to-variance check needs values in [0, 1]")
    mean_f = float(f @ values)
    mean_g = float(g @ values)
    var_f = float(f @ (values - mean_f) ** 2)
    disc = triangle_disc(f, g)
    lhs = abs(mean_f - mean_g)
    rhs = 4.0 * math.sqrt(var_f * disc) + 5.0 * disc
    return lhs, rhs, lhs <= rhs + 1e-12
