"""Finite-truncation hierarchical gamma prior over weighted state graphs.

Generative story for K states (all Gammas in shape/rate convention):

    w_i          ~ Gamma(alpha0 * gamma / K, alpha0)          base weights
    J_ij = J_ji  ~ Gamma(alpha * w_i * w_j, alpha), i <= j    edge weights
    P            = row-normalised J                           transition matrix

Row-normalising a symmetric positive weight matrix yields a reversible
Markov chain (a random walk on a weighted undirected graph); the
non-reversible variant draws all K^2 edge weights independently instead of
mirroring the upper triangle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "LOG_WEIGHT_FLOOR",
    "WEIGHT_FLOOR",
    "Hyperparams",
    "WeightMatrix",
    "dense_weights",
    "gamma_logpdf",
    "gamma_logpdf_from_log",
    "log_prior_base_weights",
    "log_prior_weight_matrix",
    "normalize_rows",
    "sample_base_weights",
    "sample_log_gamma",
    "sample_weight_matrix",
    "stationary_distribution",
]

# Gamma draws with very small shapes can underflow to exactly zero; clamping
# keeps every weight strictly positive so the induced chain stays irreducible.
WEIGHT_FLOOR = 1e-300

# Floor for log-space edge-weight draws.  Unidentified edges have log weights
# ~ -Exp(1)/shape, which for tiny shapes exceeds the magnitude at which doubles
# can still resolve O(1) log-density differences; the floor is hit only for
# shapes below ~1e-7 and is indistinguishable from the exact model otherwise.
LOG_WEIGHT_FLOOR = -1e8


def gamma_logpdf(x, shape, rate):
    """Elementwise log density of Gamma(shape, rate); callers ensure x > 0."""
    x = np.asarray(x, dtype=float)
    shape = np.asarray(shape, dtype=float)
    return shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x


def gamma_logpdf_from_log(log_x, shape, rate):
    """Gamma(shape, rate) log density evaluated at exp(log_x), exact for any log_x.

    exp(log_x) may underflow to zero; the resulting -rate * 0 term is the
    correctly rounded value, while (shape - 1) * log_x keeps full precision.
    """
    log_x = np.asarray(log_x, dtype=float)
    shape = np.asarray(shape, dtype=float)
    return shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * log_x - rate * np.exp(log_x)


@dataclass(frozen=True)
class Hyperparams:
    """Scalars governing the prior and the hyperpriors on its concentrations.

    alpha0, alpha : concentrations of the base weights and the edge weights
    gamma         : total base-measure mass spread evenly over the K states
    K             : truncation level (number of states)
    s0, r0 / s, r : shape and rate of the Gamma hyperpriors on alpha0 / alpha
    reversible    : mirror the upper triangle of the weight matrix
    """

    alpha0: float = 1.0
    alpha: float = 1.0
    gamma: float = 1.0
    K: int = 1
    s0: float = 1.0
    r0: float = 1.0
    s: float = 1.0
    r: float = 1.0
    reversible: bool = True

    def __post_init__(self):
        for name in ("alpha0", "alpha", "gamma", "s0", "r0", "s", "r"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be strictly positive, got {value!r}")
        if int(self.K) < 1:
            raise ValueError(f"K must be a positive integer, got {self.K!r}")

    @property
    def n_free_weights(self) -> int:
        return self.K * (self.K + 1) // 2 if self.reversible else self.K * self.K


class WeightMatrix:
    """Strictly positive K x K edge weights, stored canonically as log weights.

    The prior puts astronomically small masses on unoccupied edges (Gamma
    shapes far below 1), so linear doubles cannot represent typical draws;
    keeping logs makes every density evaluation exact.  In reversible mode
    only the upper triangle (diagonal included, row-major order) is stored;
    :attr:`dense` mirrors it on access, so the symmetry ``J == J.T`` holds
    exactly and cannot drift through updates.  The linear views floor entries
    at ``WEIGHT_FLOOR`` to keep them strictly positive.
    """

    __slots__ = ("log_free", "K", "reversible", "_dense")

    def __init__(self, log_free, K, reversible=True):
        log_free = np.array(log_free, dtype=float, copy=True)
        K = int(K)
        n_free = K * (K + 1) // 2 if reversible else K * K
        if log_free.shape != (n_free,):
            raise ValueError(
                f"expected {n_free} free log weights for K={K} "
                f"(reversible={reversible}), got shape {log_free.shape}"
            )
        if not np.all(np.isfinite(log_free)):
            raise ValueError("log weights must be finite")
        log_free.setflags(write=False)
        self.log_free = log_free
        self.K = K
        self.reversible = bool(reversible)
        self._dense = None

    @classmethod
    def from_dense(cls, dense, reversible=True):
        dense = np.asarray(dense, dtype=float)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise ValueError(f"weight matrix must be square, got shape {dense.shape}")
        if not (np.all(np.isfinite(dense)) and np.all(dense > 0)):
            raise ValueError("weights must be finite and strictly positive")
        K = dense.shape[0]
        if reversible:
            if not np.array_equal(dense, dense.T):
                raise ValueError("reversible weight matrices must be exactly symmetric")
            free = dense[np.triu_indices(K)]
        else:
            free = dense.ravel()
        return cls(np.log(free), K, reversible=reversible)

    @property
    def free(self) -> np.ndarray:
        """Linear free weights, floored at WEIGHT_FLOOR."""
        return np.maximum(np.exp(self.log_free), WEIGHT_FLOOR)

    @property
    def dense(self) -> np.ndarray:
        if self._dense is None:
            free = self.free
            if self.reversible:
                M = np.zeros((self.K, self.K))
                M[np.triu_indices(self.K)] = free
                lower = np.tril_indices(self.K, -1)
                M[lower] = M.T[lower]
            else:
                M = free.reshape(self.K, self.K).copy()
            M.setflags(write=False)
            self._dense = M
        return self._dense

    @property
    def log_dense(self) -> np.ndarray:
        """Mirrored K x K matrix of exact log weights."""
        if self.reversible:
            M = np.zeros((self.K, self.K))
            M[np.triu_indices(self.K)] = self.log_free
            lower = np.tril_indices(self.K, -1)
            M[lower] = M.T[lower]
            return M
        return self.log_free.reshape(self.K, self.K).copy()

    def row_sums(self) -> np.ndarray:
        return self.dense.sum(axis=1)

    def __repr__(self):
        return f"WeightMatrix(K={self.K}, reversible={self.reversible})"


def dense_weights(J) -> np.ndarray:
    """Dense view of a weight matrix given as WeightMatrix or array-like."""
    if isinstance(J, WeightMatrix):
        return J.dense
    A = np.asarray(J, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"weight matrix must be square, got shape {A.shape}")
    if not (np.all(np.isfinite(A)) and np.all(A > 0)):
        raise ValueError("weights must be finite and strictly positive")
    return A


def _free_index_pairs(h: Hyperparams):
    if h.reversible:
        return np.triu_indices(h.K)
    idx = np.arange(h.K)
    return np.repeat(idx, h.K), np.tile(idx, h.K)


def sample_log_gamma(shape, rate, rng: np.random.Generator) -> np.ndarray:
    """Draws of log(Gamma(shape, rate)), stable for arbitrarily small shapes.

    Uses the boosting identity G =d G' * U^(1/shape) with G' ~ Gamma(shape+1,
    rate): linear-space draws underflow to zero once shape drops below about
    1/700, whereas log G' - Exp(1)/shape stays exact.  Results are floored at
    LOG_WEIGHT_FLOOR so downstream log densities stay within float resolution.
    """
    shape = np.asarray(shape, dtype=float)
    boosted = rng.gamma(shape + 1.0, 1.0 / rate, size=shape.shape)
    return np.maximum(
        np.log(boosted) - rng.exponential(size=shape.shape) / shape, LOG_WEIGHT_FLOOR
    )


def sample_base_weights(h: Hyperparams, rng: np.random.Generator) -> np.ndarray:
    """Draw the K base weights, iid Gamma(alpha0 * gamma / K, alpha0)."""
    shape = h.alpha0 * h.gamma / h.K
    w = rng.gamma(shape, 1.0 / h.alpha0, size=h.K)
    return np.maximum(w, WEIGHT_FLOOR)


def sample_weight_matrix(w, h: Hyperparams, rng: np.random.Generator) -> WeightMatrix:
    """Draw edge weights J_ij ~ Gamma(alpha * w_i * w_j, alpha).

    Reversible mode draws only the K(K+1)/2 upper-triangle entries and
    mirrors them; the ablation draws all K^2 entries independently.  Draws
    are made in log space because the shapes alpha * w_i * w_j are routinely
    small enough that linear Gamma variates underflow.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (h.K,):
        raise ValueError(f"expected {h.K} base weights, got shape {w.shape}")
    rows, cols = _free_index_pairs(h)
    shapes = h.alpha * w[rows] * w[cols]
    return WeightMatrix(sample_log_gamma(shapes, h.alpha, rng), h.K, reversible=h.reversible)


def normalize_rows(J) -> np.ndarray:
    """Row-normalise a weight matrix into a stochastic transition matrix."""
    A = dense_weights(J)
    sums = A.sum(axis=1)
    if not (np.all(np.isfinite(sums)) and np.all(sums > 0)):
        raise ValueError("row sums must be finite and strictly positive")
    return A / sums[:, None]


def stationary_distribution(J) -> np.ndarray:
    """Invariant distribution of the induced chain: normalised row sums.

    Equals the stationary distribution of ``normalize_rows(J)`` whenever J is
    symmetric (detailed balance); for asymmetric J it is just the row-mass
    profile.
    """
    A = dense_weights(J)
    sums = A.sum(axis=1)
    total = sums.sum()
    if not (np.isfinite(total) and total > 0):
        raise ValueError("total weight mass must be finite and strictly positive")
    return sums / total


def log_prior_base_weights(w, h: Hyperparams) -> float:
    """Log density of the base weights under their Gamma prior."""
    w = np.asarray(w, dtype=float)
    if w.shape != (h.K,):
        raise ValueError(f"expected {h.K} base weights, got shape {w.shape}")
    if not np.all(w > 0):
        return -np.inf
    shape = h.alpha0 * h.gamma / h.K
    return float(np.sum(gamma_logpdf(w, shape, h.alpha0)))


def log_prior_weight_matrix(J, w, h: Hyperparams) -> float:
    """Log density of the edge weights given the base weights.

    Reversible mode counts each symmetric pair once (upper triangle plus
    diagonal).  Nonpositive entries, and asymmetric matrices in reversible
    mode, are outside the support and return -inf.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (h.K,):
        raise ValueError(f"expected {h.K} base weights, got shape {w.shape}")
    if not np.all(w > 0):
        return -np.inf
    if isinstance(J, WeightMatrix):
        if J.K != h.K or J.reversible != h.reversible:
            raise ValueError("weight matrix does not match the hyperparameters")
        log_values = J.log_free
    else:
        A = np.asarray(J, dtype=float)
        if A.shape != (h.K, h.K):
            raise ValueError(f"expected a {h.K}x{h.K} weight matrix, got {A.shape}")
        if h.reversible:
            if not np.array_equal(A, A.T):
                return -np.inf
            values = A[np.triu_indices(h.K)]
        else:
            values = A.ravel()
        if not (np.all(np.isfinite(values)) and np.all(values > 0)):
            return -np.inf
        log_values = np.log(values)
    rows, cols = _free_index_pairs(h)
    shapes = h.alpha * w[rows] * w[cols]
    return float(np.sum(gamma_logpdf_from_log(log_values, shapes, h.alpha)))
