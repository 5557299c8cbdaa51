"""Gradient-based Metropolis moves over unconstrained vectors.

``hmc_step`` runs a fixed-length leapfrog trajectory with an accept/reject
correction; ``nuts_step`` grows the trajectory by doubling until the path
starts to double back on itself (the no-u-turn criterion), so no trajectory
length needs tuning.  Targets are callables returning ``(log_density,
gradient)``; the identity mass matrix is used throughout.
"""

from __future__ import annotations

import numpy as np

__all__ = ["hmc_step", "nuts_step"]

# Energy-error ceiling beyond which a doubling subtree is declared divergent.
_DELTA_MAX = 1000.0


def _leapfrog(target, q, r, grad, step_size):
    r = r + 0.5 * step_size * grad
    q = q + step_size * r
    value, grad = target(q)
    if np.isfinite(value) and np.all(np.isfinite(grad)):
        r = r + 0.5 * step_size * grad
        return q, r, value, grad
    return q, r, -np.inf, grad


def hmc_step(target, current, rng, step_size=0.01, n_leapfrog=10, return_info=False):
    """One Hamiltonian Monte Carlo transition.

    Returns the new position (the current one on rejection); with
    ``return_info`` also a dict carrying acceptance and the energy error.
    Non-finite proposals are rejected automatically.
    """
    q0 = np.asarray(current, dtype=float)
    value0, grad0 = target(q0)
    if not (np.isfinite(value0) and np.all(np.isfinite(grad0))):
        raise ValueError("target must be finite at the current point")
    r0 = rng.standard_normal(q0.shape)

    q, r, value, grad = q0, r0, value0, grad0
    for _ in range(n_leapfrog):
        q, r, value, grad = _leapfrog(target, q, r, grad, step_size)
        if not np.isfinite(value):
            break

    h0 = -value0 + 0.5 * float(r0 @ r0)
    h1 = -value + 0.5 * float(r @ r) if np.isfinite(value) else np.inf
    delta_h = h1 - h0
    accept = np.isfinite(delta_h) and np.log(rng.random()) < -delta_h
    new = q if accept else q0
    if return_info:
        return new, {"accepted": bool(accept), "delta_h": float(delta_h)}
    return new


def _no_uturn(q_minus, q_plus, r_minus, r_plus) -> bool:
    span = q_plus - q_minus
    return float(span @ r_minus) >= 0.0 and float(span @ r_plus) >= 0.0


def _build_tree(target, q, r, grad, log_u, direction, depth, step_size, rng):
    """Doubling recursion; returns both path ends plus a proposal and its weight."""
    if depth == 0:
        q1, r1, value1, grad1 = _leapfrog(target, q, r, grad, direction * step_size)
        joint = value1 - 0.5 * float(r1 @ r1) if np.isfinite(value1) else -np.inf
        n1 = 1 if log_u <= joint else 0
        s1 = log_u < joint + _DELTA_MAX
        return q1, r1, grad1, q1, r1, grad1, q1, n1, s1

    (q_m, r_m, g_m, q_p, r_p, g_p, sample, n1, s1) = _build_tree(
        target, q, r, grad, log_u, direction, depth - 1, step_size, rng
    )
    if s1:
        if direction == -1:
            q_m, r_m, g_m, _, _, _, sample2, n2, s2 = _build_tree(
                target, q_m, r_m, g_m, log_u, direction, depth - 1, step_size, rng
            )
        else:
            _, _, _, q_p, r_p, g_p, sample2, n2, s2 = _build_tree(
                target, q_p, r_p, g_p, log_u, direction, depth - 1, step_size, rng
            )
        if n2 > 0 and rng.random() < n2 / (n1 + n2):
            sample = sample2
        s1 = s2 and _no_uturn(q_m, q_p, r_m, r_p)
        n1 += n2
    return q_m, r_m, g_m, q_p, r_p, g_p, sample, n1, s1


def nuts_step(target, current, rng, step_size=0.01, max_tree_depth=10, return_info=False):
    """One no-u-turn transition with a fixed step size.

    The trajectory doubles in a random direction until it turns back on
    itself, diverges, or reaches ``max_tree_depth`` doublings; the new point
    is sampled uniformly from the slice-admissible states along the path.
    """
    q0 = np.asarray(current, dtype=float)
    value0, grad0 = target(q0)
    if not (np.isfinite(value0) and np.all(np.isfinite(grad0))):
        raise ValueError("target must be finite at the current point")
    r0 = rng.standard_normal(q0.shape)
    joint0 = value0 - 0.5 * float(r0 @ r0)
    log_u = joint0 - rng.exponential()

    q_m = q_p = q0
    r_m = r_p = r0
    g_m = g_p = grad0
    sample = q0
    n = 1
    depth = 0
    keep_going = True
    while keep_going and depth < max_tree_depth:
        direction = 1 if rng.random() < 0.5 else -1
        if direction == -1:
            q_m, r_m, g_m, _, _, _, candidate, n1, s1 = _build_tree(
                target, q_m, r_m, g_m, log_u, direction, depth, step_size, rng
            )
        else:
            _, _, _, q_p, r_p, g_p, candidate, n1, s1 = _build_tree(
                target, q_p, r_p, g_p, log_u, direction, depth, step_size, rng
            )
        if s1 and n1 > 0 and rng.random() < min(1.0, n1 / n):
            sample = candidate
        n += n1
        keep_going = s1 and _no_uturn(q_m, q_p, r_m, r_p)
        depth += 1
    if return_info:
        return sample, {"depth": depth, "terminated_early": depth < max_tree_depth}
    return sample
