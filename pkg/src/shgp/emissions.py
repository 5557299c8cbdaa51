"""Observation families for the hidden states: Poisson counts, scalar Gaussians,
and categorical symbols, each paired with its conjugate prior.

Observations are a T x L array with a boolean mask of the same shape
(True = held out).  Masked cells are marginalised: they contribute nothing to
likelihoods or to posterior sufficient statistics, so emission parameters are
always sampled exactly from their conjugate posteriors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .prior import gamma_logpdf

__all__ = [
    "GaussianEmissions",
    "GaussianParams",
    "MultinomialEmissions",
    "MultinomialParams",
    "PoissonEmissions",
    "PoissonParams",
    "make_emission_model",
    "validate_observations",
]

_RATE_FLOOR = 1e-300


def validate_observations(y, mask):
    """Coerce observations and mask to (T, L) arrays and check their shapes."""
    y = np.asarray(y)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[0] < 1:
        raise ValueError(f"observations must be a T x L array, got shape {y.shape}")
    if mask is None:
        mask = np.zeros(y.shape, dtype=bool)
    else:
        mask = np.asarray(mask)
        if mask.ndim == 1:
            mask = mask[:, None]
        mask = mask.astype(bool)
    if mask.shape != y.shape:
        raise ValueError(f"mask shape {mask.shape} must match observations {y.shape}")
    return y, mask


@dataclass(frozen=True)
class PoissonParams:
    """Matrix of Poisson rates, one column per state: rates[l, k] > 0."""

    rates: np.ndarray


@dataclass(frozen=True)
class GaussianParams:
    """Per-state mean and standard deviation of a scalar Gaussian."""

    mean: np.ndarray
    sd: np.ndarray


@dataclass(frozen=True)
class MultinomialParams:
    """Per-state probability vector over V symbols: theta[k] on the simplex."""

    theta: np.ndarray


class PoissonEmissions:
    """L independent Poisson channels per state, Gamma(a, b) prior on each rate."""

    family = "poisson"

    def __init__(self, n_dims: int, a: float = 1.0, b: float = 1.0):
        if int(n_dims) < 1:
            raise ValueError("n_dims must be >= 1")
        if not (a > 0 and b > 0):
            raise ValueError("Gamma prior hyperparameters must be positive")
        self.n_dims = int(n_dims)
        self.a = float(a)
        self.b = float(b)

    def sample_params(self, K: int, rng: np.random.Generator) -> PoissonParams:
        rates = rng.gamma(self.a, 1.0 / self.b, size=(self.n_dims, K))
        return PoissonParams(np.maximum(rates, _RATE_FLOOR))

    def log_prior(self, params: PoissonParams) -> float:
        return float(np.sum(gamma_logpdf(params.rates, self.a, self.b)))

    def log_likelihood_matrix(self, y, mask, params: PoissonParams) -> np.ndarray:
        y, mask = validate_observations(y, mask)
        self._check_width(y)
        obs = ~mask
        yv = np.where(obs, y, 0).astype(float)
        bad = obs & ((yv < 0) | (np.floor(yv) != yv))
        ll = (
            yv @ np.log(params.rates)
            - obs.astype(float) @ params.rates
            - (gammaln(yv + 1.0) * obs).sum(axis=1)[:, None]
        )
        ll[bad.any(axis=1)] = -np.inf
        return ll

    def sample_posterior(self, y, mask, x, K: int, rng: np.random.Generator) -> PoissonParams:
        y, mask = validate_observations(y, mask)
        self._check_width(y)
        x = np.asarray(x)
        obs = (~mask).astype(float)
        yv = np.where(~mask, y, 0).astype(float)
        shape = np.full((self.n_dims, K), self.a)
        rate = np.full((self.n_dims, K), self.b)
        for k in range(K):
            sel = x == k
            shape[:, k] += yv[sel].sum(axis=0)
            rate[:, k] += obs[sel].sum(axis=0)
        return PoissonParams(np.maximum(rng.gamma(shape, 1.0 / rate), _RATE_FLOOR))

    def sample_data(self, params: PoissonParams, x, rng: np.random.Generator) -> np.ndarray:
        return rng.poisson(params.rates.T[np.asarray(x)])

    def predictive_mean_var(self, params: PoissonParams, x):
        lam = params.rates.T[np.asarray(x)]
        return lam, lam

    def log_density_cells(self, params: PoissonParams, x, y) -> np.ndarray:
        lam = params.rates.T[np.asarray(x)]
        y = np.asarray(y, dtype=float)
        with np.errstate(invalid="ignore"):
            ll = y * np.log(lam) - lam - gammaln(y + 1.0)
        return np.where((y < 0) | (np.floor(y) != y), -np.inf, ll)

    def log_density_value(self, params: PoissonParams, k: int, dim: int, value) -> float:
        lam = params.rates[dim, k]
        if value < 0 or np.floor(value) != value:
            return -np.inf
        return float(value * np.log(lam) - lam - gammaln(value + 1.0))

    def param_len(self, K: int) -> int:
        return self.n_dims * K

    def flatten_params(self, params: PoissonParams) -> np.ndarray:
        return params.rates.ravel()

    def unflatten_params(self, vec, K: int) -> PoissonParams:
        return PoissonParams(np.asarray(vec, dtype=float).reshape(self.n_dims, K))

    def _check_width(self, y):
        if y.shape[1] != self.n_dims:
            raise ValueError(f"expected {self.n_dims} observation dims, got {y.shape[1]}")


class GaussianEmissions:
    """Scalar Gaussian per state with a normal-inverse-gamma prior.

    sigma_k^2 ~ InvGamma(a0, b0) and mean_k | sigma_k^2 ~ N(m0, sigma_k^2 / kappa0).
    """

    family = "gaussian"
    n_dims = 1

    def __init__(self, m0: float = 0.0, kappa0: float = 0.01, a0: float = 2.0, b0: float = 1.0):
        if not (kappa0 > 0 and a0 > 0 and b0 > 0):
            raise ValueError("kappa0, a0 and b0 must be positive")
        self.m0 = float(m0)
        self.kappa0 = float(kappa0)
        self.a0 = float(a0)
        self.b0 = float(b0)

    def sample_params(self, K: int, rng: np.random.Generator) -> GaussianParams:
        var = 1.0 / rng.gamma(self.a0, 1.0 / self.b0, size=K)
        mean = rng.normal(self.m0, np.sqrt(var / self.kappa0))
        return GaussianParams(mean, np.sqrt(var))

    def log_prior(self, params: GaussianParams) -> float:
        var = params.sd**2
        # InvGamma(a0, b0) density of var plus the conditional normal on the mean.
        lp = np.sum(
            self.a0 * np.log(self.b0)
            - gammaln(self.a0)
            - (self.a0 + 1.0) * np.log(var)
            - self.b0 / var
        )
        lp += np.sum(
            -0.5 * np.log(2.0 * np.pi * var / self.kappa0)
            - 0.5 * self.kappa0 * (params.mean - self.m0) ** 2 / var
        )
        return float(lp)

    def log_likelihood_matrix(self, y, mask, params: GaussianParams) -> np.ndarray:
        y, mask = validate_observations(y, mask)
        self._check_width(y)
        obs = ~mask[:, 0]
        vals = np.asarray(y[:, 0], dtype=float)
        var = params.sd**2
        ll = -0.5 * np.log(2.0 * np.pi * var)[None, :] - 0.5 * (
            vals[:, None] - params.mean[None, :]
        ) ** 2 / var[None, :]
        ll = np.where(obs[:, None], ll, 0.0)
        ll[obs & ~np.isfinite(vals)] = -np.inf
        return ll

    def sample_posterior(self, y, mask, x, K: int, rng: np.random.Generator) -> GaussianParams:
        y, mask = validate_observations(y, mask)
        self._check_width(y)
        x = np.asarray(x)
        obs = ~mask[:, 0]
        vals = np.asarray(y[:, 0], dtype=float)
        mean = np.empty(K)
        sd = np.empty(K)
        for k in range(K):
            data = vals[(x == k) & obs]
            n = len(data)
            if n > 0:
                xbar = data.mean()
                kappa_n = self.kappa0 + n
                m_n = (self.kappa0 * self.m0 + n * xbar) / kappa_n
                a_n = self.a0 + 0.5 * n
                b_n = (
                    self.b0
                    + 0.5 * np.sum((data - xbar) ** 2)
                    + 0.5 * self.kappa0 * n * (xbar - self.m0) ** 2 / kappa_n
                )
            else:
                kappa_n, m_n, a_n, b_n = self.kappa0, self.m0, self.a0, self.b0
            var = 1.0 / rng.gamma(a_n, 1.0 / b_n)
            mean[k] = rng.normal(m_n, np.sqrt(var / kappa_n))
            sd[k] = np.sqrt(var)
        return GaussianParams(mean, sd)

    def sample_data(self, params: GaussianParams, x, rng: np.random.Generator) -> np.ndarray:
        x = np.asarray(x)
        return rng.normal(params.mean[x], params.sd[x])[:, None]

    def predictive_mean_var(self, params: GaussianParams, x):
        x = np.asarray(x)
        return params.mean[x][:, None], (params.sd[x] ** 2)[:, None]

    def log_density_cells(self, params: GaussianParams, x, y) -> np.ndarray:
        x = np.asarray(x)
        mu = params.mean[x][:, None]
        var = (params.sd[x] ** 2)[:, None]
        y = np.asarray(y, dtype=float)
        return -0.5 * np.log(2.0 * np.pi * var) - 0.5 * (y - mu) ** 2 / var

    def log_density_value(self, params: GaussianParams, k: int, dim: int, value) -> float:
        var = params.sd[k] ** 2
        return float(-0.5 * np.log(2.0 * np.pi * var) - 0.5 * (value - params.mean[k]) ** 2 / var)

    def param_len(self, K: int) -> int:
        return 2 * K

    def flatten_params(self, params: GaussianParams) -> np.ndarray:
        return np.concatenate([params.mean, params.sd])

    def unflatten_params(self, vec, K: int) -> GaussianParams:
        vec = np.asarray(vec, dtype=float)
        return GaussianParams(vec[:K].copy(), vec[K:].copy())

    def _check_width(self, y):
        if y.shape[1] != 1:
            raise ValueError("the Gaussian family models a single observation dim")


class MultinomialEmissions:
    """One categorical symbol per step, Dirichlet(beta) prior per state."""

    family = "multinomial"
    n_dims = 1

    def __init__(self, n_symbols: int, beta: float = 1.0):
        if int(n_symbols) < 2:
            raise ValueError("n_symbols must be >= 2")
        if not beta > 0:
            raise ValueError("beta must be positive")
        self.n_symbols = int(n_symbols)
        self.beta = float(beta)

    def sample_params(self, K: int, rng: np.random.Generator) -> MultinomialParams:
        theta = rng.dirichlet(np.full(self.n_symbols, self.beta), size=K)
        return MultinomialParams(theta)

    def log_prior(self, params: MultinomialParams) -> float:
        V = self.n_symbols
        norm = gammaln(V * self.beta) - V * gammaln(self.beta)
        return float(
            params.theta.shape[0] * norm + (self.beta - 1.0) * np.sum(np.log(params.theta))
        )

    def log_likelihood_matrix(self, y, mask, params: MultinomialParams) -> np.ndarray:
        y, mask = validate_observations(y, mask)
        self._check_width(y)
        obs = ~mask[:, 0]
        syms = np.asarray(y[:, 0])
        valid = obs & (syms >= 0) & (syms < self.n_symbols) & (np.floor(syms) == syms)
        idx = np.where(valid, syms, 0).astype(int)
        ll = np.log(params.theta)[:, idx].T
        ll = np.where(obs[:, None], ll, 0.0)
        ll[obs & ~valid] = -np.inf
        return ll

    def sample_posterior(self, y, mask, x, K: int, rng: np.random.Generator) -> MultinomialParams:
        y, mask = validate_observations(y, mask)
        self._check_width(y)
        x = np.asarray(x)
        obs = ~mask[:, 0]
        syms = np.asarray(y[:, 0]).astype(int)
        counts = np.zeros((K, self.n_symbols))
        sel = obs & (syms >= 0) & (syms < self.n_symbols)
        np.add.at(counts, (x[sel], syms[sel]), 1.0)
        theta = np.empty((K, self.n_symbols))
        for k in range(K):
            theta[k] = rng.dirichlet(self.beta + counts[k])
        return MultinomialParams(theta)

    def sample_data(self, params: MultinomialParams, x, rng: np.random.Generator) -> np.ndarray:
        cdf = np.cumsum(params.theta[np.asarray(x)], axis=1)
        u = rng.random(len(x))
        syms = (u[:, None] > cdf).sum(axis=1)
        return np.minimum(syms, self.n_symbols - 1)[:, None]

    def predictive_mean_var(self, params: MultinomialParams, x):
        # Moments of the numeric symbol code under each state's distribution.
        theta = params.theta[np.asarray(x)]
        codes = np.arange(self.n_symbols)
        mean = theta @ codes
        second = theta @ codes**2
        return mean[:, None], (second - mean**2)[:, None]

    def log_density_cells(self, params: MultinomialParams, x, y) -> np.ndarray:
        syms = np.asarray(y)[:, 0]
        valid = (syms >= 0) & (syms < self.n_symbols) & (np.floor(syms) == syms)
        idx = np.where(valid, syms, 0).astype(int)
        theta = params.theta[np.asarray(x)]
        ll = np.log(theta[np.arange(len(idx)), idx])
        return np.where(valid, ll, -np.inf)[:, None]

    def log_density_value(self, params: MultinomialParams, k: int, dim: int, value) -> float:
        if value < 0 or value >= self.n_symbols or np.floor(value) != value:
            return -np.inf
        return float(np.log(params.theta[k, int(value)]))

    def param_len(self, K: int) -> int:
        return K * self.n_symbols

    def flatten_params(self, params: MultinomialParams) -> np.ndarray:
        return params.theta.ravel()

    def unflatten_params(self, vec, K: int) -> MultinomialParams:
        return MultinomialParams(np.asarray(vec, dtype=float).reshape(K, self.n_symbols))

    def _check_width(self, y):
        if y.shape[1] != 1:
            raise ValueError("the multinomial family models a single observation dim")


def make_emission_model(family: str, n_dims: int = 1, n_symbols: int = 2, **prior_kwargs):
    """Construct an emission model by family name."""
    if family == "poisson":
        return PoissonEmissions(n_dims, **prior_kwargs)
    if family == "gaussian":
        return GaussianEmissions(**prior_kwargs)
    if family == "multinomial":
        return MultinomialEmissions(n_symbols, **prior_kwargs)
    raise ValueError(f"unknown emission family {family!r}")
