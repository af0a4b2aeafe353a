# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the solver hot loops.

Same interface as the numpy fallback; single-threaded on purpose so results
are deterministic regardless of scheduling.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, sqrt

cnp.import_array()

NAME = "compiled"


def radii_row(double[::1] t, double norm, double ecc, out=None):
    cdef Py_ssize_t n = t.shape[0]
    if out is None:
        out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double scale = norm * (1.0 - ecc * ecc) / (2.0 * ecc)
    cdef Py_ssize_t i
    for i in range(n):
        o[i] = scale / (1.0 - ecc * t[i])
    return out


def rowmax_excluding(double[:, ::1] H, cnp.uint8_t[::1] exclude):
    cdef Py_ssize_t k = H.shape[0]
    cdef Py_ssize_t n = H.shape[1]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, j
    cdef bint started
    cdef double best, v
    started = False
    for j in range(k):
        if exclude[j]:
            continue
        if not started:
            for i in range(n):
                o[i] = H[j, i]
            started = True
        else:
            for i in range(n):
                v = H[j, i]
                if v > o[i]:
                    o[i] = v
    if not started:
        raise ValueError("cannot exclude every row")
    return out


def crossing_ecc_row(double[::1] t, double[::1] other, double norm):
    cdef Py_ssize_t n = t.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    cdef double R, disc, denom, E
    for i in range(n):
        R = other[i]
        disc = R * R - 2.0 * norm * R * t[i] + norm * norm
        if disc < 0.0:
            disc = 0.0
        denom = R - sqrt(disc)
        if denom <= 0.0:
            # Reference at or below the plane limit: wins at any eccentricity.
            o[i] = INFINITY
        else:
            E = norm / denom
            o[i] = E if E > 1.0 else 0.0
    return out


def winner_and_masses(double[:, ::1] H, double[::1] w, double rel_tol):
    cdef Py_ssize_t k = H.shape[0]
    cdef Py_ssize_t n = H.shape[1]
    winner = np.empty(n, dtype=np.int32)
    masses = np.zeros(k, dtype=np.float64)
    counts = np.zeros(k, dtype=np.int64)
    comp = np.zeros(k, dtype=np.float64)
    cdef int[::1] win = winner
    cdef double[::1] ms = masses
    cdef long long[::1] ct = counts
    cdef double[::1] cp = comp
    cdef Py_ssize_t i, j
    cdef int first
    cdef double best, cut, v, s, a_abs, v_abs
    for i in range(n):
        best = H[0, i]
        for j in range(1, k):
            if H[j, i] > best:
                best = H[j, i]
        cut = best - rel_tol * (best if best >= 0.0 else -best)
        first = 0
        for j in range(k):
            if H[j, i] >= cut:
                first = <int>j
                break
        win[i] = first
        # Neumaier compensated accumulation keeps per-row sums accurate.
        v = w[i]
        s = ms[first] + v
        a_abs = ms[first] if ms[first] >= 0.0 else -ms[first]
        v_abs = v if v >= 0.0 else -v
        if a_abs >= v_abs:
            cp[first] += (ms[first] - s) + v
        else:
            cp[first] += (v - s) + ms[first]
        ms[first] = s
        ct[first] += 1
    for j in range(k):
        ms[j] = ms[j] + cp[j]
    return winner, masses, counts


def threshold_mass(double[::1] E, double[::1] w, double ecc):
    cdef Py_ssize_t n = E.shape[0]
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        if E[i] >= ecc:
            acc += w[i]
    return acc
