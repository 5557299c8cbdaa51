"""Blocked Gibbs sampler over the full hidden Markov model posterior.

One sweep cycles through the full conditionals in a fixed order:

    concentrations (slice) -> base weights (slice, per coordinate)
    -> edge weights (HMC or NUTS on the log scale) -> hidden states (FFBS)
    -> emission parameters (exact conjugate draw)

Everything is driven by a single ``numpy.random.Generator``, so a run is
bit-for-bit reproducible given its seed, configuration and data.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from scipy.special import gammaln

from .chain import path_log_likelihood, simulate, transition_counts
from .ffbs import ffbs
from .hmc import hmc_step, nuts_step
from .prior import (
    WEIGHT_FLOOR,
    Hyperparams,
    WeightMatrix,
    gamma_logpdf,
    gamma_logpdf_from_log,
    log_prior_base_weights,
    log_prior_weight_matrix,
    normalize_rows,
    sample_base_weights,
    sample_log_gamma,
    sample_weight_matrix,
)
from .slice_sampling import slice_sample

__all__ = [
    "HMCConfig",
    "NUTSConfig",
    "SamplerConfig",
    "SamplerError",
    "SamplerState",
    "SliceConfig",
    "Trace",
    "TraceSample",
    "gibbs_sweep",
    "init_state",
    "log_joint",
    "log_posterior_J",
    "run_sampler",
    "sample_base_weights_posterior",
    "sample_concentrations",
    "sample_prior_state",
    "sample_weight_matrix_posterior",
    "weight_matrix_target",
]


class SamplerError(RuntimeError):
    """A sweep component failed; the message carries the iteration context."""


@dataclass
class SliceConfig:
    width: float = 1.0
    max_stepouts: int = 50


@dataclass
class HMCConfig:
    step_size: float = 0.01
    n_leapfrog: int = 10


@dataclass
class NUTSConfig:
    step_size: float = 0.01
    max_tree_depth: int = 10


@dataclass
class SamplerConfig:
    """Sweep counts and per-component tuning knobs."""

    n_iter: int = 1000
    burnin: int = 700
    thin: int = 1
    inner_hmc_iters: int = 50
    j_sampler: str = "hmc"
    hmc: HMCConfig = field(default_factory=HMCConfig)
    nuts: NUTSConfig = field(default_factory=NUTSConfig)
    slice: SliceConfig = field(default_factory=SliceConfig)
    seed: int = 0

    def __post_init__(self):
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if not 0 <= self.burnin < self.n_iter:
            raise ValueError("burnin must satisfy 0 <= burnin < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.inner_hmc_iters < 1:
            raise ValueError("inner_hmc_iters must be >= 1")
        if self.j_sampler not in ("hmc", "nuts"):
            raise ValueError(f"j_sampler must be 'hmc' or 'nuts', got {self.j_sampler!r}")
        if not (self.hmc.step_size > 0 and self.nuts.step_size > 0 and self.slice.width > 0):
            raise ValueError("step sizes and slice width must be positive")


@dataclass
class SamplerState:
    """One full assignment of the latent variables."""

    h: Hyperparams
    w: np.ndarray
    J: WeightMatrix
    x: np.ndarray
    params: Any
    iteration: int = 0


@dataclass
class TraceSample:
    iteration: int
    log_post: float
    alpha0: float
    alpha: float
    w: np.ndarray
    log_j: np.ndarray
    x: np.ndarray
    params: Any


class Trace:
    """Ordered post-burn-in, thinned samples plus the metadata to interpret them."""

    def __init__(self, K, reversible, model, config_hash=""):
        self.K = int(K)
        self.reversible = bool(reversible)
        self.model = model
        self.config_hash = config_hash
        self.samples: list[TraceSample] = []

    def append(self, state: SamplerState, log_post: float):
        self.samples.append(
            TraceSample(
                iteration=state.iteration,
                log_post=float(log_post),
                alpha0=state.h.alpha0,
                alpha=state.h.alpha,
                w=state.w.copy(),
                log_j=state.J.log_free.copy(),
                x=state.x.copy(),
                params=state.params,
            )
        )

    def weight_matrix(self, i: int) -> WeightMatrix:
        return WeightMatrix(self.samples[i].log_j, self.K, self.reversible)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]


def _slice_positive(log_density, current, cfg: SliceConfig, rng) -> float:
    """Slice-sample a strictly positive scalar on the log scale."""

    def log_density_u(u):
        return log_density(float(np.exp(u))) + u

    u = slice_sample(
        log_density_u, np.log(current), rng, width=cfg.width, max_stepouts=cfg.max_stepouts
    )
    return max(float(np.exp(u)), WEIGHT_FLOOR)


def sample_concentrations(state: SamplerState, cfg: SamplerConfig, rng) -> Hyperparams:
    """Update alpha0 | w and alpha | J, w by slice sampling; returns new hyperparams."""
    h = state.h

    def log_target_alpha0(a0):
        hh = replace(h, alpha0=a0)
        return float(gamma_logpdf(a0, h.s0, h.r0)) + log_prior_base_weights(state.w, hh)

    alpha0 = _slice_positive(log_target_alpha0, h.alpha0, cfg.slice, rng)
    h = replace(h, alpha0=alpha0)

    def log_target_alpha(a):
        hh = replace(h, alpha=a)
        return float(gamma_logpdf(a, h.s, h.r)) + log_prior_weight_matrix(state.J, state.w, hh)

    alpha = _slice_positive(log_target_alpha, h.alpha, cfg.slice, rng)
    return replace(h, alpha=alpha)


def _log_weight_terms(
    k: int, wk: float, w: np.ndarray, log_dense: np.ndarray, h: Hyperparams
) -> float:
    """Edge-weight prior terms that involve base weight k, evaluated at wk.

    In reversible mode row k covers each unordered pair {k, j} exactly once;
    the non-reversible variant adds the column terms as well.  Weights enter
    through their exact logs so that astronomically small edges keep full
    precision.
    """
    w_eff = w.copy()
    w_eff[k] = wk
    shapes_row = h.alpha * wk * w_eff
    total = float(np.sum(gamma_logpdf_from_log(log_dense[k], shapes_row, h.alpha)))
    if not h.reversible:
        others = np.arange(h.K) != k
        shapes_col = h.alpha * w_eff[others] * wk
        total += float(np.sum(gamma_logpdf_from_log(log_dense[others, k], shapes_col, h.alpha)))
    return total


def sample_base_weights_posterior(state: SamplerState, cfg: SamplerConfig, rng) -> np.ndarray:
    """Slice-sample each base weight on the log scale from its full conditional.

    The conditional couples the Gamma prior, every edge-weight shape that the
    coordinate enters, and the initial-state probability w_{x_1} / sum(w) of
    the current hidden path.
    """
    h = state.h
    w = state.w.copy()
    log_dense = state.J.log_dense
    shape0 = h.alpha0 * h.gamma / h.K
    x1 = int(state.x[0])
    for k in range(h.K):
        rest = w.sum() - w[k]

        def log_target(wk, k=k, rest=rest):
            value = float(gamma_logpdf(wk, shape0, h.alpha0))
            value += _log_weight_terms(k, wk, w, log_dense, h)
            if x1 == k:
                value += np.log(wk)
            value -= np.log(rest + wk)
            return value

        w[k] = _slice_positive(log_target, w[k], cfg.slice, rng)
    return w


def log_posterior_J(u, counts, w, h: Hyperparams):
    """Log conditional of the free log edge weights, with its exact gradient.

    The target combines the Gamma prior on each free weight, the path
    likelihood ``sum_ij C_ij log J_ij - sum_i N_i log(sum_k J_ik)`` and the
    Jacobian of the exp transform.  In reversible mode an off-diagonal free
    coordinate collects counts from both of its mirrored cells.
    """
    u = np.asarray(u, dtype=float)
    counts = np.asarray(counts, dtype=float)
    K = h.K
    J = np.exp(u)
    if h.reversible:
        rows, cols = np.triu_indices(K)
        dense = np.zeros((K, K))
        dense[rows, cols] = J
        lower = np.tril_indices(K, -1)
        dense[lower] = dense.T[lower]
        off_diag = rows != cols
        c_free = counts[rows, cols] + np.where(off_diag, counts[cols, rows], 0.0)
    else:
        rows = np.repeat(np.arange(K), K)
        cols = np.tile(np.arange(K), K)
        dense = J.reshape(K, K)
        off_diag = None
        c_free = counts.ravel()

    shapes = h.alpha * w[rows] * w[cols]
    row_sums = dense.sum(axis=1)
    n_leaving = counts.sum(axis=1)
    # rows the path never leaves contribute no row-sum term; excluding them
    # also avoids 0 * log(0) when a whole row underflows in linear space
    visited = n_leaving > 0
    safe_sums = np.maximum(row_sums, WEIGHT_FLOOR)

    prior = np.sum(shapes * np.log(h.alpha) - gammaln(shapes) + (shapes - 1.0) * u - h.alpha * J)
    loglik = float(c_free @ u) - float(n_leaving[visited] @ np.log(safe_sums[visited]))
    jacobian = float(u.sum())
    value = float(prior) + loglik + jacobian

    pull = np.where(visited, n_leaving / safe_sums, 0.0)
    if h.reversible:
        row_pull = pull[rows] + np.where(off_diag, pull[cols], 0.0)
    else:
        row_pull = pull[rows]
    grad = (shapes - 1.0) - h.alpha * J + c_free + 1.0 - row_pull * J
    return value, grad


def weight_matrix_target(counts, w, h: Hyperparams):
    """Bind counts and base weights into a (value, gradient) target over log weights."""

    def target(u):
        return log_posterior_J(u, counts, w, h)

    return target


def _metropolized_prior_refresh(u, counts, w, h: Hyperparams, rng) -> np.ndarray:
    """Independence proposals from the edge-weight prior, one free entry at a time.

    Entries on rows the hidden path never leaves carry no likelihood, and
    their conditional prior mass sits hundreds of log units below anything a
    local move can reach, so HMC alone leaves them quasi-frozen.  Proposing
    from the prior and accepting with the likelihood ratio (which is 1 for
    such entries) restores mixing while remaining an exact kernel.
    """
    K = h.K
    if h.reversible:
        rows, cols = np.triu_indices(K)
    else:
        rows = np.repeat(np.arange(K), K)
        cols = np.tile(np.arange(K), K)
    counts = np.asarray(counts, dtype=float)
    if h.reversible:
        c_free = counts[rows, cols] + np.where(rows != cols, counts[cols, rows], 0.0)
    else:
        c_free = counts.ravel()
    n_leaving = counts.sum(axis=1)

    u = np.array(u, dtype=float)
    shapes = h.alpha * w[rows] * w[cols]
    proposals = sample_log_gamma(shapes, h.alpha, rng)
    log_accept_us = np.log(rng.random(size=len(u)))

    dense = np.zeros((K, K))
    if h.reversible:
        dense[rows, cols] = np.exp(u)
        lower = np.tril_indices(K, -1)
        dense[lower] = dense.T[lower]
    else:
        dense = np.exp(u).reshape(K, K)
    row_sums = dense.sum(axis=1)

    def _log_sum(value):
        return np.log(max(value, WEIGHT_FLOOR))

    for f in range(len(u)):
        i, j = int(rows[f]), int(cols[f])
        couples_j = h.reversible and i != j
        free_of_likelihood = (
            c_free[f] == 0 and n_leaving[i] == 0 and (not couples_j or n_leaving[j] == 0)
        )
        if free_of_likelihood:
            accept = True
        else:
            j_old = dense[i, j]
            j_new = np.exp(proposals[f])
            delta = c_free[f] * (proposals[f] - u[f])
            if n_leaving[i] > 0:
                delta -= n_leaving[i] * (_log_sum(row_sums[i] - j_old + j_new) - _log_sum(row_sums[i]))
            if couples_j and n_leaving[j] > 0:
                delta -= n_leaving[j] * (_log_sum(row_sums[j] - j_old + j_new) - _log_sum(row_sums[j]))
            accept = log_accept_us[f] < delta
        if accept:
            u[f] = proposals[f]
            value = np.exp(proposals[f])
            dense[i, j] = value
            if h.reversible:
                dense[j, i] = value
            row_sums[i] = dense[i].sum()
            if couples_j:
                row_sums[j] = dense[j].sum()
    return u


def sample_weight_matrix_posterior(
    state: SamplerState, counts, cfg: SamplerConfig, rng
) -> WeightMatrix:
    """Update the log edge weights: a prior-refresh pass, then HMC or NUTS steps.

    The Metropolized prior refresh keeps weakly identified entries mixing;
    the gradient steps do the local work on likelihood-pinned entries.
    """
    u = _metropolized_prior_refresh(state.J.log_free, counts, state.w, state.h, rng)
    target = weight_matrix_target(counts, state.w, state.h)
    for _ in range(cfg.inner_hmc_iters):
        if cfg.j_sampler == "nuts":
            u = nuts_step(
                target, u, rng, step_size=cfg.nuts.step_size, max_tree_depth=cfg.nuts.max_tree_depth
            )
        else:
            u = hmc_step(
                target, u, rng, step_size=cfg.hmc.step_size, n_leapfrog=cfg.hmc.n_leapfrog
            )
    return WeightMatrix(u, state.h.K, state.h.reversible)


def gibbs_sweep(state: SamplerState, y, mask, model, cfg: SamplerConfig, rng) -> SamplerState:
    """One full conditional cycle; mutates and returns the state."""
    iteration = state.iteration + 1
    try:
        state.h = sample_concentrations(state, cfg, rng)
        state.w = sample_base_weights_posterior(state, cfg, rng)
        counts = transition_counts(state.x, state.h.K)
        state.J = sample_weight_matrix_posterior(state, counts, cfg, rng)
        P = normalize_rows(state.J)
        loglik = model.log_likelihood_matrix(y, mask, state.params)
        state.x = ffbs(P, state.w / state.w.sum(), loglik, rng)
        state.params = model.sample_posterior(y, mask, state.x, state.h.K, rng)
    except Exception as exc:
        raise SamplerError(f"gibbs sweep failed at iteration {iteration}: {exc}") from exc
    state.iteration = iteration
    return state


def init_state(model, h: Hyperparams, T: int, rng) -> SamplerState:
    """Over-dispersed initialisation: prior draws everywhere, uniform states."""
    alpha0 = max(float(rng.gamma(h.s0, 1.0 / h.r0)), WEIGHT_FLOOR)
    alpha = max(float(rng.gamma(h.s, 1.0 / h.r)), WEIGHT_FLOOR)
    h = replace(h, alpha0=alpha0, alpha=alpha)
    w = sample_base_weights(h, rng)
    J = sample_weight_matrix(w, h, rng)
    x = rng.integers(0, h.K, size=T)
    params = model.sample_params(h.K, rng)
    return SamplerState(h=h, w=w, J=J, x=x, params=params)


def sample_prior_state(model, h: Hyperparams, T: int, rng) -> SamplerState:
    """Exact joint draw from the full generative model (states included)."""
    alpha0 = max(float(rng.gamma(h.s0, 1.0 / h.r0)), WEIGHT_FLOOR)
    alpha = max(float(rng.gamma(h.s, 1.0 / h.r)), WEIGHT_FLOOR)
    h = replace(h, alpha0=alpha0, alpha=alpha)
    w = sample_base_weights(h, rng)
    J = sample_weight_matrix(w, h, rng)
    x = simulate(J, w, T, rng)
    params = model.sample_params(h.K, rng)
    return SamplerState(h=h, w=w, J=J, x=x, params=params)


def log_joint(state: SamplerState, y, mask, model) -> float:
    """Joint log density of latents and observed data; used as a trace diagnostic."""
    h = state.h
    total = float(gamma_logpdf(h.alpha0, h.s0, h.r0) + gamma_logpdf(h.alpha, h.s, h.r))
    total += log_prior_base_weights(state.w, h)
    total += log_prior_weight_matrix(state.J, state.w, h)
    total += float(np.log(state.w[state.x[0]] / state.w.sum()))
    total += path_log_likelihood(state.x, state.J)
    total += model.log_prior(state.params)
    loglik = model.log_likelihood_matrix(y, mask, state.params)
    total += float(loglik[np.arange(len(state.x)), state.x].sum())
    return total


def _retained(iteration: int, cfg: SamplerConfig) -> bool:
    return iteration > cfg.burnin and (iteration - cfg.burnin) % cfg.thin == 0


def run_sampler(y, mask, model, h: Hyperparams, cfg: SamplerConfig, rng=None, init=None):
    """Run cfg.n_iter sweeps; returns (trace, scalars, final_state).

    ``scalars`` has one row per sweep: iteration, joint log density, alpha0,
    alpha and the number of occupied states.  Retention uses the absolute
    iteration counter, so a resumed run retains exactly the records a single
    longer run would have.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    y = np.asarray(y)
    if y.ndim == 1:
        y = y[:, None]
    state = init if init is not None else init_state(model, h, T=y.shape[0], rng=rng)
    if len(state.x) != y.shape[0]:
        raise ValueError("state sequence length does not match the observations")
    trace = Trace(state.h.K, state.h.reversible, model)
    scalars = np.empty((cfg.n_iter, 5))
    for i in range(cfg.n_iter):
        state = gibbs_sweep(state, y, mask, model, cfg, rng)
        lp = log_joint(state, y, mask, model)
        scalars[i] = (state.iteration, lp, state.h.alpha0, state.h.alpha, len(np.unique(state.x)))
        if _retained(state.iteration, cfg):
            trace.append(state, lp)
    return trace, scalars, state
