"""Command line surface: ``shgp simulate|fit|predict|diagnose``.

Every subcommand takes ``--config`` plus optional ``--seed``, ``--chains`` and
``--output`` overrides, is deterministic given (config, seed, inputs), exits 0
on success and prints a single machine-parseable ``shgp-error <Class>: <msg>``
line on stderr otherwise.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import io as shgp_io
from .chain import detailed_balance_residual, simulate, tv_convergence_curve
from .gibbs import run_sampler
from .io import ConfigError, DataError
from .predict import report
from .prior import sample_base_weights, sample_weight_matrix

__all__ = ["main", "run"]

# Minimum share of total edge weight for a state to count as active.
ACTIVE_STATE_THRESHOLD = 0.01


def _load_observations(cfg):
    path = cfg["data.path"]
    if not path:
        raise ConfigError("data.path must point to an observation file")
    y = shgp_io.load_matrix(path)
    if cfg["data.mask"]:
        mask = shgp_io.load_mask(cfg["data.mask"])
        if mask.shape != y.shape:
            raise DataError(
                f"mask shape {mask.shape} does not match observations {y.shape}"
            )
    elif cfg["data.holdout_fraction"] > 0:
        mask = shgp_io.generate_holdout_mask(
            y.shape, cfg["data.holdout_fraction"], cfg["data.holdout_seed"]
        )
    else:
        mask = np.zeros(y.shape, dtype=bool)
    return y, mask


def _validate_before_sampling(cfg, y, model):
    if y.shape[1] != model.n_dims:
        raise DataError(
            f"{model.family} family expects {model.n_dims} columns, data has {y.shape[1]}"
        )
    if model.family == "multinomial":
        symbols = cfg["emission.multinomial.symbols"]
        if y.max() >= symbols or y.min() < 0:
            raise DataError(
                f"multinomial symbols must lie in [0, {symbols}); data spans "
                f"[{y.min():g}, {y.max():g}]"
            )
    if model.family == "poisson" and y.min() < 0:
        raise DataError("Poisson counts must be nonnegative")


def cmd_simulate(cfg, out_dir):
    """Draw a full ground-truth configuration and dataset, write it to disk."""
    h = cfg.hyperparams()
    T = cfg["simulate.T"]
    n_dims = cfg["simulate.L"]
    model = cfg.emission_model(n_dims)
    rng = np.random.default_rng(cfg["sampler.seed"])

    w = sample_base_weights(h, rng)
    J = sample_weight_matrix(w, h, rng)
    x = simulate(J, w, T, rng)
    params = model.sample_params(h.K, rng)
    y = model.sample_data(params, x, rng)
    if cfg["data.holdout_fraction"] > 0:
        mask = shgp_io.generate_holdout_mask(
            y.shape, cfg["data.holdout_fraction"], cfg["data.holdout_seed"]
        )
    else:
        mask = np.zeros(y.shape, dtype=bool)

    shgp_io.save_matrix(os.path.join(out_dir, "y.csv"), y)
    shgp_io.save_mask(os.path.join(out_dir, "mask.csv"), mask)
    shgp_io.save_matrix(os.path.join(out_dir, "truth_states.csv"), x, col_prefix="x", fmt="%d")
    shgp_io.save_matrix(os.path.join(out_dir, "truth_base_weights.csv"), w, col_prefix="w")
    shgp_io.save_matrix(os.path.join(out_dir, "truth_weight_matrix.csv"), J.dense, col_prefix="j")
    shgp_io.save_matrix(
        os.path.join(out_dir, "truth_emission_params.csv"),
        model.flatten_params(params),
        col_prefix="p",
    )
    print(f"simulate: wrote T={T} L={y.shape[1]} dataset to {out_dir}")
    return 0


def cmd_fit(cfg, out_dir):
    """Run the Gibbs sampler on the configured data and persist the results."""
    y, mask = _load_observations(cfg)
    model = cfg.emission_model(y.shape[1])
    _validate_before_sampling(cfg, y, model)
    h = cfg.hyperparams()
    scfg = cfg.sampler_config()
    cfg_hash = shgp_io.config_hash(cfg)

    trace_path = os.path.join(out_dir, "trace.txt")
    checkpoint_path = os.path.join(out_dir, "checkpoint.json")
    resume = cfg["fit.resume"]
    init = None
    if resume:
        if not os.path.exists(checkpoint_path):
            raise DataError(f"fit.resume is set but {checkpoint_path} does not exist")
        init, rng, _ = shgp_io.load_checkpoint(checkpoint_path, h, model)
    else:
        rng = np.random.default_rng(scfg.seed)

    trace, scalars, state = run_sampler(y, mask, model, h, scfg, rng=rng, init=init)
    trace.config_hash = cfg_hash

    shgp_io.save_trace(trace_path, trace, T=y.shape[0], append=resume)
    scalars_path = os.path.join(out_dir, "scalars.csv")
    mode = "a" if resume else "w"
    with open(scalars_path, mode, encoding="utf-8") as fh:
        if not resume:
            fh.write("iteration,log_posterior,alpha0,alpha,n_occupied\n")
        for row in scalars:
            fh.write(
                f"{int(row[0])},{row[1]:.17g},{row[2]:.17g},{row[3]:.17g},{int(row[4])}\n"
            )
    shgp_io.save_mask(os.path.join(out_dir, "mask_used.csv"), mask)
    shgp_io.save_checkpoint(checkpoint_path, state, rng, cfg_hash, model)
    print(
        f"fit: {scfg.n_iter} sweeps, retained {len(trace)} samples, "
        f"final log posterior {scalars[-1, 1]:.4f}"
    )
    return 0


def cmd_predict(cfg, out_dir):
    """Evaluate held-out prediction for a stored trace."""
    y, mask = _load_observations(cfg)
    trace_path = cfg["predict.trace"] or os.path.join(out_dir, "trace.txt")
    trace = shgp_io.load_trace(trace_path)
    if trace.samples and len(trace.samples[0].x) != y.shape[0]:
        raise DataError("trace was fitted on data of a different length")
    rep = report(y, mask, trace, metric=cfg["predict.metric"])
    shgp_io.save_report(os.path.join(out_dir, "report.txt"), rep)
    shgp_io.save_matrix(os.path.join(out_dir, "predictive_mean.csv"), rep.pred_mean)
    shgp_io.save_matrix(os.path.join(out_dir, "predictive_var.csv"), rep.pred_var)
    print(
        f"predict: train_error={rep.train_error:.6g} test_error={rep.test_error:.6g} "
        f"train_loglik={rep.train_loglik:.6g} test_loglik={rep.test_loglik:.6g}"
    )
    return 0


def cmd_diagnose(cfg, out_dir):
    """Reversibility and convergence diagnostics over a stored trace."""
    trace_path = cfg["diagnose.trace"] or os.path.join(out_dir, "trace.txt")
    trace = shgp_io.load_trace(trace_path)
    if len(trace) == 0:
        raise DataError(f"trace {trace_path} holds no samples")

    residuals = []
    active_rows = []
    occupied = []
    for i, s in enumerate(trace):
        J = trace.weight_matrix(i)
        residuals.append(detailed_balance_residual(J))
        row_mass = J.row_sums()
        share = row_mass / row_mass.sum()
        active = np.flatnonzero(share > ACTIVE_STATE_THRESHOLD)
        active_rows.append((s.iteration, active))
        occupied.append(len(np.unique(s.x)))

    last_J = trace.weight_matrix(len(trace) - 1)
    curve = tv_convergence_curve(last_J, t_max=1000)

    with open(os.path.join(out_dir, "diagnostics.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"n_samples = {len(trace)}\n")
        fh.write(f"max_detailed_balance_residual = {max(residuals):.17g}\n")
        fh.write(f"mean_occupied_states = {np.mean(occupied):.17g}\n")
        fh.write(f"tv_curve_final = {curve[-1]:.17g}\n")
    with open(os.path.join(out_dir, "active_states.csv"), "w", encoding="utf-8") as fh:
        fh.write("iteration,n_active,active\n")
        for iteration, active in active_rows:
            fh.write(f"{iteration},{len(active)},{';'.join(map(str, active))}\n")
    shgp_io.save_matrix(
        os.path.join(out_dir, "tv_curve.csv"),
        np.column_stack([np.arange(1, len(curve) + 1), curve]),
        col_prefix="c",
    )
    print(
        f"diagnose: max detailed-balance residual {max(residuals):.3g}, "
        f"active states (last sample): {list(active_rows[-1][1])}"
    )
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "diagnose": cmd_diagnose,
}


def _run_single(command, config_path, seed, output):
    cfg = shgp_io.load_config(
        config_path,
        overrides={"sampler.seed": seed, "output.dir": output},
    )
    out_dir = cfg["output.dir"]
    os.makedirs(out_dir, exist_ok=True)
    return COMMANDS[command](cfg, out_dir)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="shgp",
        description="Reversible-chain hidden Markov model: simulate, fit, predict, diagnose.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler in COMMANDS.items():
        p = sub.add_parser(name, help=handler.__doc__)
        p.add_argument("--config", required=True, help="path to a key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override sampler.seed")
        p.add_argument(
            "--chains", type=int, default=1, help="independent seeded runs (fit only)"
        )
        p.add_argument("--output", default=None, help="override output.dir")
    args = parser.parse_args(argv)

    try:
        if args.chains > 1:
            if args.command != "fit":
                raise ConfigError("--chains applies to the fit subcommand only")
            cfg = shgp_io.load_config(
                args.config, overrides={"sampler.seed": args.seed, "output.dir": args.output}
            )
            base_seed = cfg["sampler.seed"]
            base_dir = cfg["output.dir"]
            jobs = [
                (args.command, args.config, base_seed + i, os.path.join(base_dir, f"chain_{i:02d}"))
                for i in range(args.chains)
            ]
            with ProcessPoolExecutor(max_workers=args.chains) as pool:
                codes = list(pool.map(_run_single_star, jobs))
            return max(codes)
        return _run_single(args.command, args.config, args.seed, args.output)
    except Exception as exc:  # noqa: BLE001 - single reporting point for the CLI
        message = " ".join(str(exc).split())
        print(f"shgp-error {type(exc).__name__}: {message}", file=sys.stderr)
        return 1


def _run_single_star(job):
    return _run_single(*job)


def run():
    raise SystemExit(main())


if __name__ == "__main__":
    run()
