#cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend.

Replays the exact variate-consumption protocol of ``_kernels_py`` (see
that module for the pass-by-pass documentation) with fused per-element
loops over numpy's C distribution functions.  Deterministic vector
transforms are delegated to the same helpers as the pure backend, and
segment sums reproduce the cumsum-difference semantics, so both backends
return bit-identical arrays from the same generator state.
"""

import math

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_poisson,
    random_standard_exponential,
    random_standard_gamma,
    random_standard_normal,
    random_standard_uniform,
)

from ._kernels_py import (
    _c_s,
    _ctilde,
    _ctilde_s,
    _flatten_branch_lengths,
    _invert_jump_times,
)

cnp.import_array()


cdef bitgen_t *_bg(bit_generator) except NULL:
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid BitGenerator capsule")
    return <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")


def transition_batch(gen, means, double rate):
    cdef cnp.ndarray[double, ndim=1] mu = np.ascontiguousarray(means, dtype=np.float64)
    cdef Py_ssize_t n = mu.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] k = np.empty(n, dtype=np.int64)
    cdef bitgen_t *bg = _bg(gen.bit_generator)
    cdef Py_ssize_t i
    with gen.bit_generator.lock:
        for i in range(n):
            k[i] = random_poisson(bg, mu[i])
        for i in range(n):
            out[i] = random_standard_gamma(bg, <double> k[i]) / rate
    return out


def entrance_batch(gen, Py_ssize_t n, double rate):
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n)
    cdef bitgen_t *bg = _bg(gen.bit_generator)
    cdef Py_ssize_t i
    with gen.bit_generator.lock:
        for i in range(n):
            out[i] = random_standard_exponential(bg) / rate
    return out


def zalpha_exact_batch(gen, Py_ssize_t n, double t, double beta, double theta,
                       double alpha):
    cdef double lam = alpha / _c_s(t, beta, theta)
    cdef double ct_t = _ctilde_s(t, beta, theta)
    cdef bitgen_t *bg = _bg(gen.bit_generator)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] k = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i, j
    with gen.bit_generator.lock:
        for i in range(n):
            k[i] = random_poisson(bg, lam)
    cdef Py_ssize_t m = int(k.sum())
    cdef cnp.ndarray[double, ndim=1] uu = np.empty(m)
    with gen.bit_generator.lock:
        for j in range(m):
            uu[j] = random_standard_uniform(bg)
    tau = _invert_jump_times(uu, t, beta, theta)
    cdef cnp.ndarray[double, ndim=1] rates = np.ascontiguousarray(
        _ctilde(t - tau, beta, theta), dtype=np.float64).reshape(m)
    cdef cnp.ndarray[double, ndim=1] z = np.empty(n)
    cdef double running = 0.0, seg_start
    cdef Py_ssize_t c
    with gen.bit_generator.lock:
        for i in range(n):
            z[i] = random_standard_gamma(bg, 2.0) / ct_t
        j = 0
        for i in range(n):
            seg_start = running
            for c in range(k[i]):
                running = running + random_standard_gamma(bg, 2.0) / rates[j]
                j += 1
            z[i] = z[i] + (running - seg_start)
    return z, k


def kesten_batch(gen, Py_ssize_t n, double s, double beta, double theta, double eps):
    if not 0.0 < eps < s:
        raise ValueError("kesten_batch requires 0 < eps < s")
    cdef double ct_s = _ctilde_s(s, beta, theta)
    cdef double ct_e = _ctilde_s(eps, beta, theta)
    cdef double log_ratio = math.log(ct_e / ct_s)
    cdef bitgen_t *bg = _bg(gen.bit_generator)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] k = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i, j
    with gen.bit_generator.lock:
        for i in range(n):
            k[i] = random_poisson(bg, 2.0 * log_ratio)
    cdef Py_ssize_t m = int(k.sum())
    cdef cnp.ndarray[double, ndim=1] uu = np.empty(m)
    with gen.bit_generator.lock:
        for j in range(m):
            uu[j] = random_standard_uniform(bg)
    rates_obj = ct_s * np.exp(uu * log_ratio)
    cdef cnp.ndarray[double, ndim=1] rates = np.ascontiguousarray(rates_obj)
    cdef cnp.ndarray[double, ndim=1] z = np.empty(n)
    cdef double running = 0.0, seg_start
    cdef Py_ssize_t c
    with gen.bit_generator.lock:
        j = 0
        for i in range(n):
            seg_start = running
            for c in range(k[i]):
                running = running + random_standard_exponential(bg) / rates[j]
                j += 1
            z[i] = running - seg_start
        for i in range(n):
            z[i] = z[i] + random_standard_gamma(bg, 2.0) / ct_e
    return z


def decorated_batch(gen, Py_ssize_t n, double s, double beta, double theta,
                    double alpha, double eps):
    if not eps > 0.0:
        raise ValueError("decorated_batch requires eps > 0")
    cdef double lam = alpha / _c_s(s, beta, theta)
    cdef double ct_e = _ctilde_s(eps, beta, theta)
    cdef bitgen_t *bg = _bg(gen.bit_generator)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] k = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i, j
    with gen.bit_generator.lock:
        for i in range(n):
            k[i] = random_poisson(bg, lam)
    cdef Py_ssize_t m = int(k.sum())
    cdef cnp.ndarray[double, ndim=1] uu = np.empty(m)
    with gen.bit_generator.lock:
        for j in range(m):
            uu[j] = random_standard_uniform(bg)
    tau = _invert_jump_times(uu, s, beta, theta)
    lengths_obj, nb_obj = _flatten_branch_lengths(k, tau, s)
    cdef cnp.ndarray[double, ndim=1] lengths = np.ascontiguousarray(lengths_obj)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] nb = np.ascontiguousarray(nb_obj)
    cdef Py_ssize_t b = lengths.shape[0]

    ct_l_obj = _ctilde(lengths, beta, theta)
    resolved_obj = lengths > eps
    log_ratio_obj = np.where(resolved_obj, np.log(ct_e / ct_l_obj), 0.0)
    cdef cnp.ndarray[double, ndim=1] ct_l = np.ascontiguousarray(ct_l_obj)
    cdef cnp.ndarray[double, ndim=1] log_ratio = np.ascontiguousarray(log_ratio_obj)
    cdef cnp.ndarray[cnp.npy_bool, ndim=1, cast=True] resolved = resolved_obj

    cdef cnp.ndarray[cnp.int64_t, ndim=1] a = np.empty(b, dtype=np.int64)
    with gen.bit_generator.lock:
        for j in range(b):
            a[j] = random_poisson(bg, 2.0 * log_ratio[j])
    cdef Py_ssize_t ma = int(a.sum())
    cdef cnp.ndarray[double, ndim=1] u2 = np.empty(ma)
    with gen.bit_generator.lock:
        for j in range(ma):
            u2[j] = random_standard_uniform(bg)
    atom_branch_obj = np.repeat(np.arange(b), a)
    atom_rates_obj = ct_l_obj[atom_branch_obj] * np.exp(
        u2 * log_ratio_obj[atom_branch_obj])
    cdef cnp.ndarray[double, ndim=1] atom_rates = np.ascontiguousarray(atom_rates_obj)

    cdef cnp.ndarray[double, ndim=1] per_branch = np.empty(b)
    cdef cnp.ndarray[double, ndim=1] z = np.empty(n)
    cdef double running = 0.0, seg_start, closure_rate
    cdef Py_ssize_t c, idx
    with gen.bit_generator.lock:
        idx = 0
        for j in range(b):
            seg_start = running
            for c in range(a[j]):
                running = running + random_standard_exponential(bg) / atom_rates[idx]
                idx += 1
            per_branch[j] = running - seg_start
        for j in range(b):
            closure_rate = ct_e if resolved[j] else ct_l[j]
            per_branch[j] = per_branch[j] + random_standard_gamma(bg, 2.0) / closure_rate
    running = 0.0
    idx = 0
    for i in range(n):
        seg_start = running
        for c in range(nb[i]):
            running = running + per_branch[idx]
            idx += 1
        z[i] = running - seg_start
    return z, k


def euler_zalpha_batch(gen, Py_ssize_t n, double t, Py_ssize_t nsteps, double beta,
                       double theta, double alpha):
    cdef double dt = t / nsteps
    cdef double lam = alpha / _c_s(t, beta, theta) if alpha > 0.0 else 0.0
    cdef bitgen_t *bg = _bg(gen.bit_generator)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] k = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i, j
    with gen.bit_generator.lock:
        for i in range(n):
            k[i] = random_poisson(bg, lam)
    cdef Py_ssize_t m = int(k.sum())
    cdef cnp.ndarray[double, ndim=1] uu = np.empty(m)
    with gen.bit_generator.lock:
        for j in range(m):
            uu[j] = random_standard_uniform(bg)
    tau = _invert_jump_times(uu, t, beta, theta)

    j0 = np.ceil(tau / dt).astype(np.int64)
    sample_of = np.repeat(np.arange(n), k)
    order = np.argsort(j0, kind="stable")
    cdef cnp.ndarray[cnp.int64_t, ndim=1] j0s = np.ascontiguousarray(j0[order])
    cdef cnp.ndarray[cnp.int64_t, ndim=1] samp = np.ascontiguousarray(sample_of[order])
    cdef cnp.ndarray[cnp.int64_t, ndim=1] bounds = np.searchsorted(
        j0s, np.arange(nsteps + 1)).astype(np.int64)

    cdef cnp.ndarray[double, ndim=1] z = np.zeros(n)
    cdef cnp.ndarray[double, ndim=1] svec = np.zeros(n)
    cdef double drift_in = 2.0 * beta * dt
    cdef double drift_th = 2.0 * beta * theta * dt
    cdef double diff = sqrt(2.0 * beta * dt)
    cdef double w, zi
    cdef Py_ssize_t lo, hi, step
    with gen.bit_generator.lock:
        for step in range(nsteps):
            lo = bounds[step]
            hi = bounds[step + 1]
            for j in range(lo, hi):
                svec[samp[j]] = svec[samp[j]] + 1.0
            for i in range(n):
                w = random_standard_normal(bg)
                zi = z[i]
                zi = zi + drift_in * (svec[i] + 1.0) - drift_th * zi \
                    + (diff * sqrt(zi)) * w
                z[i] = zi if zi > 0.0 else 0.0
    return z
