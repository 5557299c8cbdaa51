"""Plain-text file formats: run configuration, observation matrices, masks,
traces, checkpoints and prediction reports.

All outputs are deliberately diffable text.  Configs are flat ``key = value``
lines with dotted section prefixes; every key has a documented default and can
be overridden by an environment variable (``SHGP_`` prefix, dots mapped to
underscores, upper-cased).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .emissions import make_emission_model
from .gibbs import (
    HMCConfig,
    NUTSConfig,
    SamplerConfig,
    SamplerState,
    SliceConfig,
    Trace,
    TraceSample,
)
from .prior import Hyperparams, WeightMatrix

__all__ = [
    "CONFIG_DEFAULTS",
    "ConfigError",
    "DataError",
    "RunConfig",
    "config_hash",
    "generate_holdout_mask",
    "load_checkpoint",
    "load_config",
    "load_mask",
    "load_matrix",
    "load_report",
    "load_trace",
    "save_checkpoint",
    "save_mask",
    "save_matrix",
    "save_report",
    "save_trace",
]

ENV_PREFIX = "SHGP_"


class ConfigError(ValueError):
    """The run configuration is missing, malformed or inconsistent."""


class DataError(ValueError):
    """An input file is missing, malformed or dimensionally inconsistent."""


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


# key -> (parser, default); None defaults mean "empty string"
CONFIG_DEFAULTS = {
    "model.family": (str, "poisson"),
    "model.reversible": (_parse_bool, True),
    "model.K": (int, 20),
    "prior.alpha0": (float, 1.0),
    "prior.alpha": (float, 1.0),
    "prior.gamma": (float, 1.0),
    "prior.s0": (float, 1.0),
    "prior.r0": (float, 1.0),
    "prior.s": (float, 1.0),
    "prior.r": (float, 1.0),
    "emission.poisson.a": (float, 1.0),
    "emission.poisson.b": (float, 1.0),
    "emission.gaussian.m0": (float, 0.0),
    "emission.gaussian.kappa0": (float, 0.01),
    "emission.gaussian.a0": (float, 2.0),
    "emission.gaussian.b0": (float, 1.0),
    "emission.multinomial.beta": (float, 1.0),
    "emission.multinomial.symbols": (int, 2),
    "sampler.n_iter": (int, 1000),
    "sampler.burnin": (int, 700),
    "sampler.thin": (int, 1),
    "sampler.inner_hmc_iters": (int, 50),
    "sampler.j_sampler": (str, "hmc"),
    "sampler.hmc.step_size": (float, 0.01),
    "sampler.hmc.n_leapfrog": (int, 10),
    "sampler.nuts.step_size": (float, 0.01),
    "sampler.nuts.max_tree_depth": (int, 10),
    "sampler.slice.width": (float, 1.0),
    "sampler.slice.max_stepouts": (int, 50),
    "sampler.seed": (int, 0),
    "data.path": (str, ""),
    "data.mask": (str, ""),
    "data.holdout_fraction": (float, 0.0),
    "data.holdout_seed": (int, 0),
    "simulate.T": (int, 1000),
    "simulate.L": (int, 1),
    "predict.metric": (str, "mae"),
    "predict.trace": (str, ""),
    "diagnose.trace": (str, ""),
    "fit.resume": (_parse_bool, False),
    "output.dir": (str, "shgp-out"),
}


@dataclass
class RunConfig:
    """Typed view of a configuration dict; values() gives the canonical mapping."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @property
    def family(self) -> str:
        return self.values["model.family"]

    def hyperparams(self) -> Hyperparams:
        v = self.values
        return Hyperparams(
            alpha0=v["prior.alpha0"],
            alpha=v["prior.alpha"],
            gamma=v["prior.gamma"],
            K=v["model.K"],
            s0=v["prior.s0"],
            r0=v["prior.r0"],
            s=v["prior.s"],
            r=v["prior.r"],
            reversible=v["model.reversible"],
        )

    def sampler_config(self) -> SamplerConfig:
        v = self.values
        return SamplerConfig(
            n_iter=v["sampler.n_iter"],
            burnin=v["sampler.burnin"],
            thin=v["sampler.thin"],
            inner_hmc_iters=v["sampler.inner_hmc_iters"],
            j_sampler=v["sampler.j_sampler"],
            hmc=HMCConfig(v["sampler.hmc.step_size"], v["sampler.hmc.n_leapfrog"]),
            nuts=NUTSConfig(v["sampler.nuts.step_size"], v["sampler.nuts.max_tree_depth"]),
            slice=SliceConfig(v["sampler.slice.width"], v["sampler.slice.max_stepouts"]),
            seed=v["sampler.seed"],
        )

    def emission_model(self, n_dims: int):
        v = self.values
        family = self.family
        if family == "poisson":
            return make_emission_model(
                "poisson", n_dims=n_dims, a=v["emission.poisson.a"], b=v["emission.poisson.b"]
            )
        if family == "gaussian":
            if n_dims != 1:
                raise DataError("the Gaussian family needs single-column observations")
            return make_emission_model(
                "gaussian",
                m0=v["emission.gaussian.m0"],
                kappa0=v["emission.gaussian.kappa0"],
                a0=v["emission.gaussian.a0"],
                b0=v["emission.gaussian.b0"],
            )
        if family == "multinomial":
            if n_dims != 1:
                raise DataError("the multinomial family needs single-column observations")
            return make_emission_model(
                "multinomial",
                n_symbols=v["emission.multinomial.symbols"],
                beta=v["emission.multinomial.beta"],
            )
        raise ConfigError(f"unknown emission family {family!r}")


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment, blank lines ignored."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def load_config(path, env=None, overrides=None) -> RunConfig:
    """Read a config file, apply environment and explicit overrides, type-check."""
    env = os.environ if env is None else env
    try:
        with open(path, encoding="utf-8") as fh:
            entries = parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc

    unknown = sorted(set(entries) - set(CONFIG_DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    values = {}
    for key, (parser, default) in CONFIG_DEFAULTS.items():
        raw = entries.get(key)
        env_key = ENV_PREFIX + key.replace(".", "_").upper()
        if env_key in env:
            raw = env[env_key]
        if overrides and key in overrides and overrides[key] is not None:
            raw = str(overrides[key])
        if raw is None:
            values[key] = default
        else:
            try:
                values[key] = parser(raw)
            except ValueError as exc:
                raise ConfigError(f"config key {key}: {exc}") from exc

    if not 0.0 <= values["data.holdout_fraction"] < 1.0:
        raise ConfigError("data.holdout_fraction must lie in [0, 1)")
    if values["predict.metric"] not in ("mae", "rmse"):
        raise ConfigError("predict.metric must be 'mae' or 'rmse'")
    for key in ("data.path", "data.mask"):
        if values[key] and not os.path.exists(values[key]):
            raise ConfigError(f"{key} references a missing file: {values[key]}")
    return RunConfig(values)


def config_hash(cfg: RunConfig) -> str:
    canonical = "\n".join(f"{k}={cfg.values[k]}" for k in sorted(cfg.values))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# matrices and masks


def save_matrix(path, arr, col_prefix="y", fmt="%.17g"):
    arr = np.asarray(arr)
    if arr.ndim == 1:
        arr = arr[:, None]
    header = ",".join(f"{col_prefix}{i}" for i in range(arr.shape[1]))
    np.savetxt(path, arr, fmt=fmt, delimiter=",", header=header, comments="")


def load_matrix(path) -> np.ndarray:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError as exc:
        raise DataError(f"cannot read matrix {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"malformed matrix file {path}: {exc}") from exc
    if data.size == 0:
        raise DataError(f"matrix file {path} is empty")
    return data


def save_mask(path, mask):
    save_matrix(path, np.asarray(mask, dtype=int), col_prefix="m", fmt="%d")


def load_mask(path) -> np.ndarray:
    data = load_matrix(path)
    if not np.isin(data, (0, 1)).all():
        raise DataError(f"mask file {path} must contain only 0/1 entries")
    return data.astype(bool)


def generate_holdout_mask(shape, fraction: float, seed: int) -> np.ndarray:
    """Uniformly random held-out cells covering floor(fraction * size) entries."""
    rng = np.random.default_rng(seed)
    size = int(np.prod(shape))
    n_holdout = int(np.floor(fraction * size))
    mask = np.zeros(size, dtype=bool)
    mask[rng.choice(size, size=n_holdout, replace=False)] = True
    return mask.reshape(shape)


# ---------------------------------------------------------------------------
# traces

_TRACE_MAGIC = "# shgp-trace-v1"


def _model_dims(model) -> tuple[int, int]:
    n_symbols = getattr(model, "n_symbols", 0)
    return model.n_dims, n_symbols


def save_trace(path, trace: Trace, T: int, append=False):
    """One record per retained sweep; the header documents the dense layout.

    Record columns: iteration, log_post, alpha0, alpha, w (K), free log edge
    weights (row-major upper triangle incl. diagonal when reversible,
    row-major full matrix otherwise), states (T ints), flattened emission
    parameters.
    """
    model = trace.model
    n_dims, n_symbols = _model_dims(model)
    free_len = (
        trace.K * (trace.K + 1) // 2 if trace.reversible else trace.K * trace.K
    )
    header = [
        _TRACE_MAGIC,
        f"# config_hash={trace.config_hash}",
        f"# family={model.family} K={trace.K} reversible={int(trace.reversible)} "
        f"L={n_dims} V={n_symbols} T={T}",
        f"# columns: iteration log_post alpha0 alpha w[{trace.K}] "
        f"log_j[{free_len}] x[{T}] params[{model.param_len(trace.K)}]",
    ]
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8") as fh:
        if not append:
            fh.write("\n".join(header) + "\n")
        for s in trace:
            fields = [str(s.iteration), f"{s.log_post:.17g}", f"{s.alpha0:.17g}", f"{s.alpha:.17g}"]
            fields += [f"{v:.17g}" for v in s.w]
            fields += [f"{v:.17g}" for v in s.log_j]
            fields += [str(int(v)) for v in s.x]
            fields += [f"{v:.17g}" for v in model.flatten_params(s.params)]
            fh.write(" ".join(fields) + "\n")


def load_trace(path) -> Trace:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read trace {path}: {exc}") from exc
    if not lines or lines[0] != _TRACE_MAGIC:
        raise DataError(f"{path} is not a trace file")
    config_hash_line = lines[1].removeprefix("# config_hash=")
    meta = dict(part.split("=") for part in lines[2].removeprefix("# ").split())
    family = meta["family"]
    K = int(meta["K"])
    reversible = bool(int(meta["reversible"]))
    n_dims = int(meta["L"])
    n_symbols = int(meta["V"])
    T = int(meta["T"])
    model = make_emission_model(family, n_dims=n_dims, n_symbols=max(n_symbols, 2))
    trace = Trace(K, reversible, model, config_hash=config_hash_line)
    free_len = K * (K + 1) // 2 if reversible else K * K
    param_len = model.param_len(K)
    expected = 4 + K + free_len + T + param_len
    for raw in lines[4:]:
        if not raw.strip():
            continue
        parts = raw.split()
        if len(parts) != expected:
            raise DataError(f"trace record has {len(parts)} fields, expected {expected}")
        vals = np.array(parts[1 : 4 + K + free_len], dtype=float)
        offset = 3 + K + free_len
        x = np.array(parts[1 + offset : 1 + offset + T], dtype=np.int64)
        params_vec = np.array(parts[1 + offset + T :], dtype=float)
        trace.samples.append(
            TraceSample(
                iteration=int(parts[0]),
                log_post=vals[0],
                alpha0=vals[1],
                alpha=vals[2],
                w=vals[3 : 3 + K],
                log_j=vals[3 + K : 3 + K + free_len],
                x=x,
                params=model.unflatten_params(params_vec, K),
            )
        )
    return trace


# ---------------------------------------------------------------------------
# checkpoints (full state + RNG, for exact resume)


def save_checkpoint(path, state: SamplerState, rng: np.random.Generator, cfg_hash: str, model):
    payload = {
        "config_hash": cfg_hash,
        "iteration": state.iteration,
        "family": model.family,
        "alpha0": state.h.alpha0,
        "alpha": state.h.alpha,
        "w": state.w.tolist(),
        "log_j": state.J.log_free.tolist(),
        "x": state.x.tolist(),
        "params": model.flatten_params(state.params).tolist(),
        "rng_state": rng.bit_generator.state,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path, h: Hyperparams, model):
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    from dataclasses import replace

    h = replace(h, alpha0=payload["alpha0"], alpha=payload["alpha"])
    state = SamplerState(
        h=h,
        w=np.array(payload["w"]),
        J=WeightMatrix(np.array(payload["log_j"]), h.K, h.reversible),
        x=np.array(payload["x"], dtype=np.int64),
        params=model.unflatten_params(np.array(payload["params"]), h.K),
        iteration=payload["iteration"],
    )
    rng = np.random.default_rng()
    rng.bit_generator.state = payload["rng_state"]
    return state, rng, payload["config_hash"]


# ---------------------------------------------------------------------------
# prediction reports


def save_report(path, rep):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"metric = {rep.metric}\n")
        for name in ("train_error", "test_error", "train_loglik", "test_loglik"):
            fh.write(f"{name} = {getattr(rep, name):.17g}\n")


def load_report(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            entries = parse_config_text(fh.read())
    except OSError as exc:
        raise DataError(f"cannot read report {path}: {exc}") from exc
    out = {"metric": entries["metric"]}
    for name in ("train_error", "test_error", "train_loglik", "test_loglik"):
        out[name] = float(entries[name])
    return out
