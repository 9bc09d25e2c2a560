"""Hot inner loops, dispatched to the compiled extension when it is importable.

Set ``MBRL_PURE_PYTHON=1`` to force the numpy fallback. ``BACKEND`` names the
implementation in use; ``use_backend`` switches it at runtime (tests, benchmarks).
"""
import os

import numpy as np

from mbrl import _kernels_py

try:
    from mbrl import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_impl = _kernels_py
BACKEND = "python"
if _compiled is not None and not os.environ.get("MBRL_PURE_PYTHON"):
    _impl = _compiled
    BACKEND = "cython"


def available_backends():
    return ["python"] + (["cython"] if _compiled is not None else [])


def use_backend(name):
    """Select ``"python"`` or ``"cython"``; returns the previous backend name."""
    global _impl, BACKEND
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        impl = _compiled
    elif name == "python":
        impl = _kernels_py
    else:
        raise ValueError(f"unknown backend {name!r}")
    previous = BACKEND
    _impl, BACKEND = impl, name
    return previous


def _cdf_and_last(probs):
    cdf = np.ascontiguousarray(np.cumsum(probs, axis=-1), dtype=np.float64)
    positive = probs > 0
    last = probs.shape[-1] - 1 - np.argmax(positive[..., ::-1], axis=-1)
    return cdf, np.ascontiguousarray(last, dtype=np.int64)


def sample_paths(P, action_probs, s0, u_state, u_action):
    """Inverse-CDF rollouts.

    P is (S, A, S); action_probs is (H, S, A). The uniform arrays are (n, H).
    Returns states (n, H+1) and actions (n, H).
    """
    trans_cdf, trans_last = _cdf_and_last(np.asarray(P, dtype=np.float64))
    act_cdf, act_last = _cdf_and_last(np.asarray(action_probs, dtype=np.float64))
    return _impl.sample_paths(
        trans_cdf,
        trans_last,
        act_cdf,
        act_last,
        int(s0),
        np.ascontiguousarray(u_state, dtype=np.float64),
        np.ascontiguousarray(u_action, dtype=np.float64),
    )


def evaluate_policies(P_stack, r, actions_stack):
    """V_0 for every (model, policy) pair: (M, S, A, S) x (N, H, S) -> (M, N, S)."""
    return _impl.evaluate_policies(
        np.ascontiguousarray(P_stack, dtype=np.float64),
        np.ascontiguousarray(r, dtype=np.float64),
        np.ascontiguousarray(actions_stack, dtype=np.int64),
    )


def eluder_subsets(values, eps, p):
    """Reachability of every point subset as an independent sequence, with back-pointers."""
    return _impl.eluder_subsets(np.ascontiguousarray(values, dtype=np.float64), float(eps), float(p))
