"""Markov chain simulation plus executable reversibility and convergence checks."""

from __future__ import annotations

import numpy as np

from .prior import dense_weights, normalize_rows, stationary_distribution

__all__ = [
    "detailed_balance_residual",
    "path_log_likelihood",
    "simulate",
    "transition_counts",
    "tv_convergence_curve",
]


def _categorical(cdf: np.ndarray, u: float) -> int:
    """Index into a cumulative probability vector; robust to rounding at 1."""
    return min(int(np.searchsorted(cdf, u, side="right")), len(cdf) - 1)


def simulate(J, w, T: int, rng: np.random.Generator) -> np.ndarray:
    """Sample a length-T state sequence from the chain defined by J.

    The initial state is drawn from the normalised base weights, later states
    from the row of the transition matrix indexed by the previous state.
    States are 0-based indices.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    P = normalize_rows(J)
    w = np.asarray(w, dtype=float)
    if w.shape != (P.shape[0],):
        raise ValueError(f"expected {P.shape[0]} base weights, got shape {w.shape}")
    init_cdf = np.cumsum(w / w.sum())
    row_cdf = np.cumsum(P, axis=1)
    x = np.empty(T, dtype=np.int64)
    x[0] = _categorical(init_cdf, rng.random())
    us = rng.random(T - 1)
    for t in range(1, T):
        x[t] = _categorical(row_cdf[x[t - 1]], us[t - 1])
    return x


def transition_counts(x, K: int) -> np.ndarray:
    """K x K matrix of observed transition counts C_ij = #{t : x_t=i, x_{t+1}=j}."""
    x = np.asarray(x)
    if x.ndim != 1 or len(x) < 1:
        raise ValueError("state sequence must be a non-empty 1-d array")
    if x.min() < 0 or x.max() >= K:
        raise ValueError(f"state indices must lie in [0, {K})")
    C = np.zeros((K, K), dtype=np.int64)
    np.add.at(C, (x[:-1], x[1:]), 1)
    return C


def path_log_likelihood(x, J) -> float:
    """Log probability of the transitions along x under normalize_rows(J).

    Equals sum_ij C_ij * log P_ij, so it depends on the sequence only through
    its initial state and transition counts; the summation order is fixed,
    making the value bit-for-bit reproducible across count-preserving
    rearrangements.  The initial-state probability is not included.
    """
    A = dense_weights(J)
    C = transition_counts(x, A.shape[0])
    P = A / A.sum(axis=1)[:, None]
    return float(np.sum(C * np.log(P)))


def detailed_balance_residual(J) -> float:
    """Largest absolute violation of detailed balance, max_ij |pi_i P_ij - pi_j P_ji|."""
    A = dense_weights(J)
    pi = stationary_distribution(A)
    P = A / A.sum(axis=1)[:, None]
    flow = pi[:, None] * P
    return float(np.abs(flow - flow.T).max())


def _left_invariant_vector(P: np.ndarray, tol: float = 1e-15, max_iter: int = 200000) -> np.ndarray:
    """Invariant distribution of a strictly positive stochastic matrix by power iteration."""
    v = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(max_iter):
        v_new = v @ P
        v_new /= v_new.sum()
        if np.abs(v_new - v).max() < tol:
            return v_new
        v = v_new
    return v


def tv_convergence_curve(J, t_max: int) -> np.ndarray:
    """Worst-case total variation distance of P^t rows from stationarity, t = 1..t_max.

    Total variation is the half-L1 convention.  Matrix powers are accumulated
    by repeated multiplication with per-step row renormalisation to suppress
    float drift.
    """
    if t_max < 1:
        raise ValueError(f"t_max must be >= 1, got {t_max}")
    A = dense_weights(J)
    P = A / A.sum(axis=1)[:, None]
    if np.array_equal(A, A.T):
        pi = stationary_distribution(A)
    else:
        pi = _left_invariant_vector(P)
    curve = np.empty(t_max)
    Pt = P.copy()
    for t in range(t_max):
        curve[t] = 0.5 * np.abs(Pt - pi).sum(axis=1).max()
        if t + 1 < t_max:
            Pt = Pt @ P
            Pt /= Pt.sum(axis=1, keepdims=True)
    return curve
