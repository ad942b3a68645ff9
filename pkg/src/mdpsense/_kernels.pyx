# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled backward-recursion kernels.

Every inner product is accumulated left to right over target states, and
the reward is added after the sum, so policy evaluation and the Bellman
recursion produce bit-identical values for the same action choice.
"""
import numpy as np

BACKEND = "cython"


cdef inline double _dot(const double[:, ::1] P, Py_ssize_t row,
                        const double[:, ::1] V, Py_ssize_t t, Py_ssize_t S) nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t j
    for j in range(S):
        acc += P[row, j] * V[t, j]
    return acc


def policy_values(const double[:, ::1] P, const double[::1] r, const double[::1] rN,
                  const Py_ssize_t[:, ::1] offsets, const Py_ssize_t[:, ::1] choice):
    cdef Py_ssize_t N = offsets.shape[0], S = rN.shape[0]
    cdef Py_ssize_t n, i, row
    out = np.empty((N + 1, S), dtype=np.float64)
    cdef double[:, ::1] V = out
    with nogil:
        for i in range(S):
            V[N, i] = rN[i]
        for n in range(N - 1, -1, -1):
            for i in range(S):
                row = offsets[n, i] + choice[n, i]
                V[n, i] = r[row] + _dot(P, row, V, n + 1, S)
    return out


def optimal_values(const double[:, ::1] P, const double[::1] r, const double[::1] rN,
                   const Py_ssize_t[:, ::1] offsets, const Py_ssize_t[:, ::1] counts,
                   double sign):
    """Bellman recursion; returns the value tables and every row's q-value."""
    cdef Py_ssize_t N = offsets.shape[0], S = rN.shape[0], R = P.shape[0]
    cdef Py_ssize_t n, i, k, row
    cdef double best, val
    out = np.empty((N + 1, S), dtype=np.float64)
    qout = np.empty(R, dtype=np.float64)
    cdef double[:, ::1] V = out
    cdef double[::1] q = qout
    with nogil:
        for i in range(S):
            V[N, i] = rN[i]
        for n in range(N - 1, -1, -1):
            for i in range(S):
                best = 0.0
                for k in range(counts[n, i]):
                    row = offsets[n, i] + k
                    val = r[row] + _dot(P, row, V, n + 1, S)
                    q[row] = val
                    if k == 0 or sign * val > sign * best:
                        best = val
                V[n, i] = best
    return out, qout


def policy_derivative(const double[:, ::1] P, const double[:, ::1] D, const double[:, ::1] V,
                      const Py_ssize_t[:, ::1] offsets, const Py_ssize_t[:, ::1] choice):
    """Backward derivative scheme for a fixed strategy; ``D = Q - P`` row-wise."""
    cdef Py_ssize_t N = offsets.shape[0], S = V.shape[1]
    cdef Py_ssize_t n, i, row
    out = np.zeros((N + 1, S), dtype=np.float64)
    cdef double[:, ::1] Vd = out
    with nogil:
        for n in range(N - 1, -1, -1):
            for i in range(S):
                row = offsets[n, i] + choice[n, i]
                Vd[n, i] = _dot(P, row, Vd, n + 1, S) + _dot(D, row, V, n + 1, S)
    return out


def batch_initial_values(const double[:, ::1] P, const double[::1] r, const double[::1] rN,
                         const Py_ssize_t[:, ::1] offsets, const Py_ssize_t[:, :, ::1] choices):
    """Time-0 values of many strategies; ``choices`` has shape (M, N, S)."""
    cdef Py_ssize_t M = choices.shape[0], N = offsets.shape[0], S = rN.shape[0]
    cdef Py_ssize_t m, n, i, row
    out = np.empty((M, S), dtype=np.float64)
    work = np.empty((N + 1, S), dtype=np.float64)
    cdef double[:, ::1] res = out
    cdef double[:, ::1] V = work
    with nogil:
        for i in range(S):
            V[N, i] = rN[i]
        for m in range(M):
            for n in range(N - 1, -1, -1):
                for i in range(S):
                    row = offsets[n, i] + choices[m, n, i]
                    V[n, i] = r[row] + _dot(P, row, V, n + 1, S)
            for i in range(S):
                res[m, i] = V[0, i]
    return out


def batch_initial_derivatives(const double[:, ::1] P, const double[:, ::1] D,
                              const double[::1] r, const double[::1] rN,
                              const Py_ssize_t[:, ::1] offsets, const Py_ssize_t[:, :, ::1] choices):
    """Time-0 values and fixed-strategy derivatives of many strategies."""
    cdef Py_ssize_t M = choices.shape[0], N = offsets.shape[0], S = rN.shape[0]
    cdef Py_ssize_t m, n, i, row
    vals = np.empty((M, S), dtype=np.float64)
    ders = np.empty((M, S), dtype=np.float64)
    work = np.empty((N + 1, S), dtype=np.float64)
    dwork = np.zeros((N + 1, S), dtype=np.float64)
    cdef double[:, ::1] rv = vals
    cdef double[:, ::1] rd = ders
    cdef double[:, ::1] V = work
    cdef double[:, ::1] Vd = dwork
    with nogil:
        for i in range(S):
            V[N, i] = rN[i]
        for m in range(M):
            for n in range(N - 1, -1, -1):
                for i in range(S):
                    row = offsets[n, i] + choices[m, n, i]
                    V[n, i] = r[row] + _dot(P, row, V, n + 1, S)
                    Vd[n, i] = _dot(P, row, Vd, n + 1, S) + _dot(D, row, V, n + 1, S)
            for i in range(S):
                rv[m, i] = V[0, i]
                rd[m, i] = Vd[0, i]
    return vals, ders
