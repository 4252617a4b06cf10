"""Closed forms for the quadratic branching diffusion.

Everything here is a pure function of ``ModelParams`` and scalars: the
branching mechanism and its inverse, the rate functions ``c`` and
``c_tilde``, the Laplace flow ``u``, entrance/transition densities of the
excursion measure, moments, the immigration-biasing martingales M and
M-tilde, and the closed-form biased Laplace transform used by the
conditioning module.

Conventions.  ``c(t) = 2*theta / (exp(2*beta*theta*t) - 1)`` and
``c_tilde(t) = 2*theta / (1 - exp(-2*beta*theta*t))``, with the theta = 0
convention ``c = c_tilde = 1/(beta*t)``; both are positive and strictly
decreasing, and ``c_tilde - c = 2*theta`` identically.  The series

    S(z) = sum_k z^k / (k! * (k+1)!)  =  I1(2*sqrt(z)) / sqrt(z)

shows up in the transition density and in M; it is evaluated by
multiplicative term recursion for moderate arguments and through the
exponentially scaled Bessel function for large ones (the two routes are
cross-checked in the test suite).
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate
from scipy import special

from .params import ModelParams

# Series switch point: below, term recursion; above, scaled-Bessel route.
SERIES_SWITCH = 700.0
SERIES_RTOL = 1e-15

__all__ = [
    "ModelParams",
    "psi",
    "psi_inverse",
    "c_t",
    "c_tilde_t",
    "u",
    "survival_mass",
    "entrance_density",
    "entrance_cutoff",
    "transition_density",
    "transition_log_density",
    "transition_atom",
    "moment_n",
    "bessel_ratio_series",
    "bessel_ratio_ive",
    "log_bessel_ratio",
    "martingale_M",
    "martingale_Mtilde",
    "biased_laplace_poisson",
    "biased_laplace_kesten",
    "girsanov_identity_gap",
    "quad_expectation",
]


def psi(params: ModelParams, lam: float) -> float:
    """Branching mechanism beta*lam**2 + 2*beta*theta*lam."""
    return params.beta * lam * lam + 2.0 * params.beta * params.theta * lam


def psi_inverse(params: ModelParams, lam: float) -> float:
    """The root t of psi(t) = lam with t >= 2*max(-theta, 0).

    Larger branch of the quadratic; requires lam >= 0.
    """
    if lam < 0:
        raise ValueError(f"psi_inverse requires lam >= 0, got {lam}")
    th = params.theta
    return -th + math.sqrt(th * th + lam / params.beta)


def c_t(params: ModelParams, t: float) -> float:
    """Survival rate function c(t); equals the mass of excursions alive at t."""
    if t <= 0:
        raise ValueError(f"c_t requires t > 0, got {t}")
    th = params.theta
    if th == 0.0:
        return 1.0 / (params.beta * t)
    return 2.0 * th / math.expm1(2.0 * params.beta * th * t)


def c_tilde_t(params: ModelParams, t: float) -> float:
    """Companion rate c_tilde(t) = c(t) + 2*theta, the entrance-law rate."""
    if t <= 0:
        raise ValueError(f"c_tilde_t requires t > 0, got {t}")
    th = params.theta
    if th == 0.0:
        return 1.0 / (params.beta * t)
    return 2.0 * th / -math.expm1(-2.0 * params.beta * th * t)


def u(params: ModelParams, lam: float, t: float) -> float:
    """Laplace flow: u(lam, t) with u(lam, 0) = lam.

    Defined for lam > -c_tilde(t); satisfies the semigroup property
    u(u(lam, s), t) = u(lam, t + s) and u(c(r), t) = c(t + r).
    """
    if t < 0:
        raise ValueError(f"u requires t >= 0, got t={t}")
    if t == 0:
        return lam
    ct = c_t(params, t)
    ctt = c_tilde_t(params, t)
    if lam <= -ctt:
        raise ValueError(f"u requires lam > -c_tilde(t) = {-ctt}, got {lam}")
    return lam * ct / (ctt + lam)


def survival_mass(params: ModelParams, t: float) -> float:
    """Excursion mass alive at time t: lim_lam u(lam, t) = c(t)."""
    return c_t(params, t)


def entrance_density(params: ModelParams, t: float, x) -> float:
    """Density of the entrance law on (0, inf): c * c_tilde * exp(-c_tilde*x).

    Total mass is c(t), the survival mass; normalized, it is an
    exponential law of rate c_tilde(t).  Accepts scalar or ndarray x.
    """
    if t <= 0:
        raise ValueError(f"entrance_density requires t > 0, got {t}")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("entrance_density requires x >= 0")
    ct = c_t(params, t)
    ctt = c_tilde_t(params, t)
    out = ct * ctt * np.exp(-ctt * x)
    return float(out) if out.ndim == 0 else out


def entrance_cutoff(params: ModelParams, t: float, tail: float = 1e-14) -> float:
    """Upper integration limit X* with entrance mass beyond X* below ``tail``."""
    ctt = c_tilde_t(params, t)
    ct = c_t(params, t)
    return (math.log(max(ct, 1.0) / tail) + 5.0) / ctt


def bessel_ratio_series(z: float) -> float:
    """S(z) = sum_k z^k/(k!(k+1)!) by term recursion, stop at rel. 1e-15."""
    if z < 0:
        raise ValueError("series argument must be >= 0")
    term = 1.0
    total = 1.0
    k = 0
    while True:
        term *= z / ((k + 1.0) * (k + 2.0))
        total += term
        k += 1
        if term < SERIES_RTOL * total:
            return total
        if k > 100000:  # unreachable for z <= SERIES_SWITCH
            raise RuntimeError("series did not converge")


def bessel_ratio_ive(z: float) -> float:
    """S(z) via the exponentially scaled Bessel function I1."""
    if z == 0.0:
        return 1.0
    w = 2.0 * math.sqrt(z)
    return float(special.ive(1, w)) * math.exp(w) / math.sqrt(z)


def log_bessel_ratio(z) -> float:
    """log S(z), stable for large z.  Accepts scalar or ndarray."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z <= SERIES_SWITCH
    if np.any(small):
        out[small] = np.log([bessel_ratio_series(v) for v in np.atleast_1d(z[small])])
    if np.any(~small):
        zb = z[~small]
        w = 2.0 * np.sqrt(zb)
        out[~small] = np.log(special.ive(1, w)) + w - 0.5 * np.log(zb)
    return float(out) if out.ndim == 0 else out


def transition_atom(params: ModelParams, t: float, x: float) -> float:
    """Mass of the extinction atom at 0 of the time-t transition from x."""
    if t <= 0 or x < 0:
        raise ValueError("transition_atom requires t > 0 and x >= 0")
    return math.exp(-x * c_t(params, t))


def transition_log_density(params: ModelParams, t: float, x: float, y) -> float:
    """log of the absolutely continuous part of the transition kernel."""
    if t <= 0 or x <= 0:
        raise ValueError("transition density requires t > 0 and x > 0")
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("transition density requires y >= 0")
    ct = c_t(params, t)
    ctt = c_tilde_t(params, t)
    z = x * y * ct * ctt
    out = (
        math.log(x * ct * ctt)
        - (x + y) * ct
        - 2.0 * params.theta * y
        + log_bessel_ratio(z)
    )
    return float(out) if np.ndim(out) == 0 else out


def transition_density(params: ModelParams, t: float, x: float, y):
    """Transition kernel of the excursion at time lag t started from x > 0.

    Returns ``(atom, density)``: the extinction atom exp(-x*c(t)) at 0
    and the density at y of the absolutely continuous part,

        q_t(x, y) = x c ct~ exp(-(x+y)c - 2 theta y) S(x y c ct~).
    """
    atom = transition_atom(params, t, x)
    dens = np.exp(transition_log_density(params, t, x, y))
    return atom, (float(dens) if np.ndim(dens) == 0 else dens)


def moment_n(params: ModelParams, t: float, n: int) -> float:
    """n-th moment of Z_t under the excursion measure: n! c(t) / c_tilde(t)^n."""
    if t <= 0 or n < 1:
        raise ValueError("moment_n requires t > 0 and n >= 1")
    log_m = (
        math.lgamma(n + 1.0)
        + math.log(c_t(params, t))
        - n * math.log(c_tilde_t(params, t))
    )
    if log_m > 700.0:
        raise OverflowError(f"moment of order {n} overflows at t={t}")
    return math.exp(log_m)


def martingale_M(params: ModelParams, t: float, z) -> float:
    """The immigration-biasing martingale M at time t evaluated at mass z.

        M_t(z) = z * exp(-alpha/c(t)) * sum_i (alpha z)^i e^{(i+1) 2 beta theta t}
                 / (i! (i+1)!)
               = z * exp(2 beta theta t - alpha/c(t)) * S(alpha z e^{2 beta theta t}).

    Unit mean under the excursion measure.  alpha = 0 reduces to
    z * exp(2 beta theta t).
    """
    if t <= 0:
        raise ValueError("martingale_M requires t > 0")
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("martingale_M requires z >= 0")
    a = params.alpha
    g = 2.0 * params.beta * params.theta * t
    with np.errstate(divide="ignore"):
        logs = np.where(
            z > 0,
            np.log(np.where(z > 0, z, 1.0))
            + g
            - a / c_t(params, t)
            + log_bessel_ratio(a * z * math.exp(g)),
            -np.inf,
        )
    out = np.exp(logs)
    return float(out) if out.ndim == 0 else out


def martingale_Mtilde(params: ModelParams, t: float, z) -> float:
    """Companion martingale: M-tilde_t(z) = exp(2*theta*z) M_t(z; -theta)."""
    z = np.asarray(z, dtype=float)
    out = np.exp(2.0 * params.theta * z) * martingale_M(params.flipped(), t, z)
    return float(out) if np.ndim(out) == 0 else out


def biased_laplace_poisson(params: ModelParams, s: float, lam: float) -> float:
    """Closed form of the M-biased Laplace transform of the entrance mass.

        integral of M_s(x) e^{-lam x} against the entrance density
          = c ct~ exp(2 b th s - alpha/c) (ct~+lam)^-2 exp(alpha e^{2 b th s}/(ct~+lam)).

    Equals 1 at lam = 0 (unit martingale mean).  Validated against the
    quadrature of martingale_M * entrance_density in the test suite before
    anything else relies on it.
    """
    if s <= 0:
        raise ValueError("biased_laplace_poisson requires s > 0")
    if lam < 0:
        raise ValueError("biased_laplace_poisson requires lam >= 0")
    a = params.alpha
    cs = c_t(params, s)
    cts = c_tilde_t(params, s)
    g = 2.0 * params.beta * params.theta * s
    log_v = (
        math.log(cs)
        + math.log(cts)
        + g
        - a / cs
        - 2.0 * math.log(cts + lam)
        + a * math.exp(g) / (cts + lam)
    )
    return math.exp(log_v)


def biased_laplace_kesten(params: ModelParams, s: float, lam: float) -> float:
    """alpha = 0 case: size-biased Laplace transform of the entrance mass.

    exp(2 b th s) c ct~ (ct~+lam)^-2; the law of the Kesten level mass.
    """
    cs = c_t(params, s)
    cts = c_tilde_t(params, s)
    g = 2.0 * params.beta * params.theta * s
    return math.exp(g) * cs * cts / (cts + lam) ** 2


def girsanov_identity_gap(params: ModelParams, lam: float, t: float) -> float:
    """Defect of the drift-flip change of measure at the Laplace level.

    Returns u(lam, t; -theta) - u(lam - 2*theta, t; theta) - 2*theta,
    which is identically 0; |gap| < 1e-12 is asserted by the tests.
    Requires lam > max(0, 2*theta) - c_tilde(t; theta).
    """
    ctt = c_tilde_t(params, t)
    if lam <= max(0.0, 2.0 * params.theta) - ctt:
        raise ValueError("lam outside the domain of the flip identity")
    th = params.theta
    return (
        u(params.flipped(), lam, t)
        - u(params, lam - 2.0 * th, t)
        - 2.0 * th
    )


def quad_expectation(f, lo: float, hi: float, **kw) -> float:
    """Adaptive quadrature of f on [lo, hi] (thin wrapper, shared tolerances)."""
    val, _err = integrate.quad(f, lo, hi, limit=200, epsabs=1e-12, epsrel=1e-11, **kw)
    return val
