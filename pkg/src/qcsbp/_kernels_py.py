"""Pure numpy kernel backend.

Each kernel documents its variate-consumption protocol as numbered
passes.  The compiled backend replays exactly the same passes element by
element with numpy's C distribution functions, so both backends map a
given generator state to bit-identical output.  Deterministic transforms
(jump-time inversion, rate ladders) are written with the same operation
order as the Cython code and avoid ``pow`` in favour of exp/log.

Distribution conventions used throughout:

* a branch born at time tau and observed at horizon t contributes an
  independent Gamma(2, rate c_tilde(t - tau)) mass (the aggregated
  decoration mass of one immigrant line);
* decorations resolved above a cutoff eps are compound-Poisson atoms:
  count Poisson(2 log(c_tilde(eps)/c_tilde(L))) on a branch of length L,
  atom rate ladder c_tilde(L) * (c_tilde(eps)/c_tilde(L))**U, mass
  Exponential(rate) each, plus a Gamma(2, c_tilde(eps)) closure for the
  sub-eps cloud; the law of the total is exactly Gamma(2, c_tilde(L))
  for every eps in (0, L).
"""

from __future__ import annotations

import math

import numpy as np


def _ctilde(u, beta: float, theta: float):
    """Vector c_tilde(u) = 2 theta / (1 - exp(-2 beta theta u)); 1/(beta u) at theta=0."""
    if theta == 0.0:
        return 1.0 / (beta * np.asarray(u, dtype=float))
    return 2.0 * theta / -np.expm1(-2.0 * beta * theta * np.asarray(u, dtype=float))


def _ctilde_s(u: float, beta: float, theta: float) -> float:
    if theta == 0.0:
        return 1.0 / (beta * u)
    return 2.0 * theta / -math.expm1(-2.0 * beta * theta * u)


def _c_s(u: float, beta: float, theta: float) -> float:
    if theta == 0.0:
        return 1.0 / (beta * u)
    return 2.0 * theta / math.expm1(2.0 * beta * theta * u)


def _invert_jump_times(uu, t: float, beta: float, theta: float):
    """Map uniforms to atoms of the inhomogeneous rate exp(2 b th r) on [0, t]."""
    if theta == 0.0:
        return uu * t
    em1 = math.expm1(2.0 * beta * theta * t)
    return np.log1p(uu * em1) / (2.0 * beta * theta)


def _segment_sums(values, counts):
    """Sum ``values`` over consecutive segments of the given lengths."""
    ends = np.cumsum(counts)
    cs = np.concatenate(([0.0], np.cumsum(values)))
    return cs[ends] - cs[ends - counts]


def _flatten_branch_lengths(k, tau, s: float):
    """Per-sample branch lengths, root branch (length s) first.

    k    -- jump counts per sample
    tau  -- flattened jump times, sample-major
    Returns (lengths, branches_per_sample).
    """
    nb = k + 1
    b = int(nb.sum())
    lengths = np.empty(b)
    starts = np.concatenate(([0], np.cumsum(nb)))[:-1]
    lengths[starts] = s
    mask = np.ones(b, dtype=bool)
    mask[starts] = False
    lengths[mask] = s - tau
    return lengths, nb


def transition_batch(gen, means, rate: float):
    """Exact one-step transitions: Poisson(means_i) count, Gamma(count)/rate mass.

    P1: K_i ~ Poisson(means_i), i = 0..n-1
    P2: G_i ~ StdGamma(K_i),   i = 0..n-1
    out_i = G_i / rate
    """
    means = np.asarray(means, dtype=float)
    k = gen.poisson(means)
    g = gen.standard_gamma(k.astype(np.float64))
    return g / rate


def entrance_batch(gen, n: int, rate: float):
    """Entrance-law draws conditioned on survival: Exponential(rate).

    P1: E_i ~ StdExp, i = 0..n-1; out = E / rate
    """
    return gen.standard_exponential(n) / rate


def zalpha_exact_batch(gen, n: int, t: float, beta: float, theta: float, alpha: float):
    """Immigration process at time t: per-branch Gamma(2) masses.

    P1: K_i ~ Poisson(alpha / c(t)), i = 0..n-1          [jump counts]
    P2: U_j ~ StdUniform, j = 0..M-1 (M = sum K)         [jump times]
    P3: G0_i ~ StdGamma(2), i = 0..n-1                   [root-branch mass]
    P4: G_j ~ StdGamma(2), j = 0..M-1                    [per-jump masses]
    out_i = G0_i / c_tilde(t) + sum_j G_j / c_tilde(t - tau_j)

    Returns (mass array, jump count array).
    """
    lam = alpha / _c_s(t, beta, theta)
    k = gen.poisson(lam, size=n)
    m = int(k.sum())
    uu = gen.random(m)
    tau = _invert_jump_times(uu, t, beta, theta)
    rates = _ctilde(t - tau, beta, theta)
    g0 = gen.standard_gamma(2.0, size=n) / _ctilde_s(t, beta, theta)
    g = gen.standard_gamma(2.0, size=m) / rates
    return g0 + _segment_sums(g, k), k


def kesten_batch(gen, n: int, s: float, beta: float, theta: float, eps: float):
    """Level-s mass of the Kesten tree, decorations resolved above eps.

    P1: K_i ~ Poisson(2 log(c_tilde(eps)/c_tilde(s))), i = 0..n-1
    P2: U_j ~ StdUniform, j = 0..M-1   -> atom rates
        r_j = c_tilde(s) * exp(U_j * log(c_tilde(eps)/c_tilde(s)))
    P3: E_j ~ StdExp -> masses E_j / r_j
    P4: C_i ~ StdGamma(2) -> closure C_i / c_tilde(eps)
    out_i = segment sum + closure; total law Gamma(2, c_tilde(s)) exactly.
    """
    if not 0.0 < eps < s:
        raise ValueError("kesten_batch requires 0 < eps < s")
    ct_s = _ctilde_s(s, beta, theta)
    ct_e = _ctilde_s(eps, beta, theta)
    log_ratio = math.log(ct_e / ct_s)
    k = gen.poisson(2.0 * log_ratio, size=n)
    m = int(k.sum())
    uu = gen.random(m)
    rates = ct_s * np.exp(uu * log_ratio)
    e = gen.standard_exponential(m) / rates
    closure = gen.standard_gamma(2.0, size=n) / ct_e
    return _segment_sums(e, k) + closure


def decorated_batch(
    gen, n: int, s: float, beta: float, theta: float, alpha: float, eps: float
):
    """Level-s mass of the decorated backbone, built branch by branch.

    Backbone branches are born at the jump times of the immigration
    process (plus the root branch born at 0); each branch of length L
    carries resolved decoration atoms above eps and a closure term.

    P1: K_i ~ Poisson(alpha / c(s)), i = 0..n-1          [backbone jumps]
    P2: U_j ~ StdUniform, j = 0..M-1                     [branch births]
    branches flattened sample-major, root branch (L = s) first,
    then the K_i jump branches with L = s - tau in draw order
    P3: A_b ~ Poisson(2 log(c_tilde(eps)/c_tilde(L_b)) if L_b > eps else 0)
    P4: U'_a ~ StdUniform -> atom rates on the owning branch's ladder
    P5: E_a ~ StdExp -> atom masses
    P6: C_b ~ StdGamma(2) -> closure / (c_tilde(eps) if L_b > eps
                                        else c_tilde(L_b))
    out_i = sum over the sample's branches; returns (mass, jump count).
    """
    if not 0.0 < eps:
        raise ValueError("decorated_batch requires eps > 0")
    lam = alpha / _c_s(s, beta, theta)
    k = gen.poisson(lam, size=n)
    m = int(k.sum())
    uu = gen.random(m)
    tau = _invert_jump_times(uu, s, beta, theta)
    lengths, nb = _flatten_branch_lengths(k, tau, s)
    b = n + m

    ct_e = _ctilde_s(eps, beta, theta)
    ct_l = _ctilde(lengths, beta, theta)
    resolved = lengths > eps
    log_ratio = np.where(resolved, np.log(ct_e / ct_l), 0.0)
    a = gen.poisson(2.0 * log_ratio)
    ma = int(a.sum())
    u2 = gen.random(ma)
    atom_branch = np.repeat(np.arange(b), a)
    atom_rates = ct_l[atom_branch] * np.exp(u2 * log_ratio[atom_branch])
    e = gen.standard_exponential(ma) / atom_rates
    closure_rates = np.where(resolved, ct_e, ct_l)
    closures = gen.standard_gamma(2.0, size=b) / closure_rates

    per_branch = _segment_sums(e, a) + closures
    return _segment_sums(per_branch, nb), k


def euler_zalpha_batch(
    gen, n: int, t: float, nsteps: int, beta: float, theta: float, alpha: float
):
    """Euler-Maruyama for the immigration SDE, negatives clamped to zero.

    P1: K_i ~ Poisson(alpha / c(t))                      [jump counts]
    P2: U_j ~ StdUniform -> jump times tau
    P3: for step j = 0..nsteps-1: W_i ~ StdNormal, i = 0..n-1
    update z <- max(z + 2 b (S+1) dt - 2 b th z dt + sqrt(2 b z dt) W, 0)
    with S_i evaluated at the left endpoint of each step.
    """
    dt = t / nsteps
    lam = alpha / _c_s(t, beta, theta) if alpha > 0.0 else 0.0
    k = gen.poisson(lam, size=n)
    m = int(k.sum())
    uu = gen.random(m)
    tau = _invert_jump_times(uu, t, beta, theta)

    # first step index at which each jump is visible (left endpoint rule)
    j0 = np.ceil(tau / dt).astype(np.int64)
    sample_of = np.repeat(np.arange(n), k)
    order = np.argsort(j0, kind="stable")
    j0s = j0[order]
    samp = sample_of[order]
    bounds = np.searchsorted(j0s, np.arange(nsteps + 1))

    z = np.zeros(n)
    svec = np.zeros(n)
    drift_in = 2.0 * beta * dt
    drift_th = 2.0 * beta * theta * dt
    diff = math.sqrt(2.0 * beta * dt)
    for j in range(nsteps):
        lo, hi = bounds[j], bounds[j + 1]
        if hi > lo:
            np.add.at(svec, samp[lo:hi], 1.0)
        w = gen.standard_normal(n)
        z = z + drift_in * (svec + 1.0) - drift_th * z + diff * np.sqrt(z) * w
        np.maximum(z, 0.0, out=z)
    return z
