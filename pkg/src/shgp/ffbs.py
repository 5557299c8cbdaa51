"""Exact joint draw of the hidden state sequence by forward filtering,
backward sampling.  The forward pass runs in linear space with per-step
normalisation, which is stable because every row is rescaled to sum to one.
"""

from __future__ import annotations

import numpy as np

__all__ = ["ffbs", "forward_filter"]


def _categorical(p: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(p)
    return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(p) - 1)


def forward_filter(P, init_dist, loglik) -> np.ndarray:
    """Normalised filtered state probabilities, one row per time step."""
    P = np.asarray(P, dtype=float)
    loglik = np.asarray(loglik, dtype=float)
    T, K = loglik.shape
    if P.shape != (K, K):
        raise ValueError(f"transition matrix shape {P.shape} does not match {K} states")
    init_dist = np.asarray(init_dist, dtype=float)
    if init_dist.shape != (K,):
        raise ValueError(f"initial distribution must have length {K}")

    shift = loglik.max(axis=1)
    bad = ~np.isfinite(shift)
    if bad.any():
        raise ValueError(
            f"no state has positive likelihood at t={int(np.argmax(bad))}; "
            "the observation is impossible under the current parameters"
        )
    lik = np.exp(loglik - shift[:, None])

    filtered = np.empty((T, K))
    f = init_dist * lik[0]
    for t in range(T):
        if t > 0:
            f = (filtered[t - 1] @ P) * lik[t]
        total = f.sum()
        if not (np.isfinite(total) and total > 0):
            raise ValueError(f"forward filter degenerated at t={t}")
        filtered[t] = f / total
    return filtered


def ffbs(P, init_dist, loglik, rng: np.random.Generator) -> np.ndarray:
    """Sample a state sequence exactly from its posterior given log-likelihoods.

    ``loglik`` is T x K with masked/missing observations contributing zero
    rows; a row that is -inf for every state aborts with a diagnostic.
    """
    filtered = forward_filter(P, init_dist, loglik)
    P = np.asarray(P, dtype=float)
    T = filtered.shape[0]
    x = np.empty(T, dtype=np.int64)
    x[T - 1] = _categorical(filtered[T - 1], rng)
    for t in range(T - 2, -1, -1):
        x[t] = _categorical(filtered[t] * P[:, x[t + 1]], rng)
    return x
