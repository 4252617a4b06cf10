"""Exact and approximate samplers for the branching diffusion.

Everything is seeded through a ``RandomStream``; batch variants (the
``*_batch`` functions) vectorize over replicas through the kernel
backends and are what the verification suites call.

The exact one-step transition samples Poisson(x*c(t)) surviving family
lines, each with an Exponential(c_tilde(t)) mass; path sampling chains
exact transitions over the grid, so there is no discretization error
anywhere except in the Euler scheme, which exists only as an independent
cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import analytics, kernels
from .params import ModelParams
from .rng import RandomStream


@dataclass
class PathSample:
    """One CSBP trajectory observed on a grid."""

    grid: np.ndarray
    values: np.ndarray
    meta: ModelParams = field(repr=False, default=None)

    def __post_init__(self):
        if np.any(self.values < 0):
            raise ValueError("path values must be non-negative")


def sample_transition(params: ModelParams, x: float, t: float, stream: RandomStream) -> float:
    """One draw of Z_t given Z_0 = x, exact (Poisson sum of exponentials)."""
    return float(sample_transition_batch(params, np.array([x]), t, stream)[0])


def sample_transition_batch(params, x, t: float, stream: RandomStream):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("sample_transition requires x >= 0")
    if t <= 0:
        raise ValueError("sample_transition requires t > 0")
    means = x * analytics.c_t(params, t)
    return kernels.transition_batch(
        stream.generator, means, analytics.c_tilde_t(params, t)
    )


def sample_entrance_survival(params: ModelParams, t: float, stream: RandomStream) -> float:
    """Entrance-law draw conditioned on survival: Exponential(c_tilde(t))."""
    return float(sample_entrance_batch(params, t, stream, 1)[0])


def sample_entrance_batch(params, t: float, stream: RandomStream, n: int):
    if t <= 0:
        raise ValueError("entrance sampling requires t > 0")
    return kernels.entrance_batch(stream.generator, n, analytics.c_tilde_t(params, t))


def sample_csbp_path(params, x: float, grid, stream: RandomStream) -> PathSample:
    """Markov chain of exact transitions along an increasing time grid."""
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    values = np.empty(len(grid))
    cur = np.array([float(x)])
    prev = 0.0
    for i, ti in enumerate(grid):
        cur = sample_transition_batch(params, cur, ti - prev, stream)
        values[i] = cur[0]
        prev = ti
    return PathSample(grid=grid, values=values, meta=params)


def immigration_total_intensity(params: ModelParams, horizon: float) -> float:
    """Integrated immigration intensity on [0, horizon]: alpha / c(horizon)."""
    return params.alpha / analytics.c_t(params, horizon)


def sample_immigration_jumps(params: ModelParams, horizon: float, stream: RandomStream):
    """Jump times of the immigration clock, intensity alpha*beta*e^{2 b th r}.

    Sampled by inversion of the cumulative intensity; returns an
    increasing array, empty when alpha = 0.
    """
    if horizon <= 0:
        raise ValueError("sample_immigration_jumps requires horizon > 0")
    if params.alpha == 0:
        return np.empty(0)
    gen = stream.generator
    n = gen.poisson(immigration_total_intensity(params, horizon))
    uu = gen.random(n)
    b, th = params.beta, params.theta
    if th == 0.0:
        times = uu * horizon
    else:
        times = np.log1p(uu * math.expm1(2.0 * b * th * horizon)) / (2.0 * b * th)
    return np.sort(times)


def sample_Zalpha_exact(params: ModelParams, t: float, stream: RandomStream) -> float:
    """Exact draw of the immigration process at time t (starts from 0)."""
    z, _ = sample_zalpha_joint_batch(params, t, stream, 1)
    return float(z[0])


def sample_zalpha_joint_batch(params: ModelParams, t: float, stream: RandomStream, n: int):
    """Batch of (mass, immigration count) pairs at time t.

    Each immigration jump at time tau contributes an independent
    Gamma(2, c_tilde(t - tau)) mass and the root line a Gamma(2,
    c_tilde(t)) mass; this aggregates the Poisson cloud of surviving
    excursions branch by branch and is exact in law.
    """
    if t <= 0:
        raise ValueError("sample_Zalpha requires t > 0")
    if params.alpha <= 0:
        raise ValueError("sample_Zalpha requires alpha > 0")
    return kernels.zalpha_exact_batch(
        stream.generator, n, t, params.beta, params.theta, params.alpha
    )


def sample_Zalpha_euler(params: ModelParams, t: float, dt: float, stream: RandomStream) -> float:
    """Euler-Maruyama draw of the immigration SDE (cross-check only)."""
    return float(sample_zalpha_euler_batch(params, t, dt, stream, 1)[0])


def sample_zalpha_euler_batch(params: ModelParams, t: float, dt: float, stream: RandomStream, n: int):
    if dt <= 0 or t <= 0:
        raise ValueError("euler sampling requires t > 0 and dt > 0")
    nsteps = max(1, int(round(t / dt)))
    return kernels.euler_zalpha_batch(
        stream.generator, n, t, nsteps, params.beta, params.theta, params.alpha
    )


def conditional_S_given_Y(alpha: float, y: float, k: int):
    """P(immigration count = k | mass = y): (alpha y)^k/(k!(k+1)!) normalized.

    Independent of the observation time; y = 0 returns the indicator of
    k = 0.
    """
    if y < 0 or k < 0:
        raise ValueError("conditional_S_given_Y requires y >= 0 and k >= 0")
    if y == 0.0:
        return 1.0 if k == 0 else 0.0
    ay = alpha * y
    log_term = k * math.log(ay) - math.lgamma(k + 1) - math.lgamma(k + 2)
    norm = analytics.bessel_ratio_series(ay) if ay <= analytics.SERIES_SWITCH \
        else analytics.bessel_ratio_ive(ay)
    return math.exp(log_term) / norm


def time_change_map(params: ModelParams, value: float, direction: str = "t_to_s") -> float:
    """Bijection between the native clock t and the scaled clock s = 1/c(t).

    The scaled process e^{2 b th t} Z_t read at s is a standard Feller
    diffusion (beta = 1, theta = 0).  ``direction`` is ``"t_to_s"`` or
    ``"s_to_t"``; the round trip is the identity to 1e-13.
    """
    b, th = params.beta, params.theta
    if direction == "t_to_s":
        if value <= 0:
            raise ValueError("time_change_map requires t > 0")
        return 1.0 / analytics.c_t(params, value)
    if direction != "s_to_t":
        raise ValueError(f"unknown direction {direction!r}")
    s = value
    if s <= 0:
        raise ValueError("time_change_map requires s > 0")
    if th == 0.0:
        return s / b
    # s < 1/(2 theta_-) required when theta < 0
    if th < 0 and s >= 1.0 / (-2.0 * th):
        raise ValueError("s outside the range of the time change")
    return math.log1p(2.0 * th * s) / (2.0 * b * th)


def batch_to_rows(params: ModelParams, stream: RandomStream, values, counts=None):
    """CSV-ready rows (seed, params, value[, count]) for serialized batches."""
    ent = stream.seed_entropy
    key = ".".join(map(str, stream.spawn_key)) or "-"
    rows = []
    for i, v in enumerate(np.asarray(values)):
        row = {
            "seed": ent,
            "substream": key,
            "beta": params.beta,
            "theta": params.theta,
            "alpha": params.alpha,
            "index": i,
            "value": float(v),
        }
        if counts is not None:
            row["count"] = int(counts[i])
        rows.append(row)
    return rows
