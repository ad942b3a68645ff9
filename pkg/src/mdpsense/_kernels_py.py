"""NumPy fallback for the compiled kernels, with identical signatures.

Within an epoch every q-value is computed as one matrix-vector product over
the whole row block, and policy evaluation selects from that same product,
so Bellman values and policy values agree bit for bit within this backend.
"""
import numpy as np

BACKEND = "numpy"

_BATCH_BUDGET = 1 << 22  # floats materialized per batch chunk


def _block(offsets, R, n):
    start = offsets[n, 0]
    stop = offsets[n + 1, 0] if n + 1 < offsets.shape[0] else R
    return start, stop


def policy_values(P, r, rN, offsets, choice):
    N, S = offsets.shape
    V = np.empty((N + 1, S))
    V[N] = rN
    for n in range(N - 1, -1, -1):
        start, stop = _block(offsets, P.shape[0], n)
        q = r[start:stop] + P[start:stop] @ V[n + 1]
        V[n] = q[offsets[n] - start + choice[n]]
    return V


def optimal_values(P, r, rN, offsets, counts, sign):
    N, S = offsets.shape
    V = np.empty((N + 1, S))
    q = np.empty(P.shape[0])
    V[N] = rN
    for n in range(N - 1, -1, -1):
        start, stop = _block(offsets, P.shape[0], n)
        qn = r[start:stop] + P[start:stop] @ V[n + 1]
        q[start:stop] = qn
        V[n] = sign * np.maximum.reduceat(sign * qn, offsets[n] - start)
    return V, q


def policy_derivative(P, D, V, offsets, choice):
    N, S = offsets.shape
    Vd = np.zeros((N + 1, S))
    for n in range(N - 1, -1, -1):
        rows = offsets[n] + choice[n]
        Vd[n] = P[rows] @ Vd[n + 1] + D[rows] @ V[n + 1]
    return Vd


def _chunks(M, S):
    step = max(1, _BATCH_BUDGET // max(1, S * S))
    for lo in range(0, M, step):
        yield lo, min(M, lo + step)


def batch_initial_values(P, r, rN, offsets, choices):
    M = choices.shape[0]
    N, S = offsets.shape
    out = np.empty((M, S))
    for lo, hi in _chunks(M, S):
        V = np.broadcast_to(rN, (hi - lo, S))
        for n in range(N - 1, -1, -1):
            rows = offsets[n] + choices[lo:hi, n, :]
            V = r[rows] + np.einsum("msj,mj->ms", P[rows], V)
        out[lo:hi] = V
    return out


def batch_initial_derivatives(P, D, r, rN, offsets, choices):
    M = choices.shape[0]
    N, S = offsets.shape
    vals = np.empty((M, S))
    ders = np.empty((M, S))
    for lo, hi in _chunks(M, S):
        V = np.broadcast_to(rN, (hi - lo, S))
        Vd = np.zeros((hi - lo, S))
        for n in range(N - 1, -1, -1):
            rows = offsets[n] + choices[lo:hi, n, :]
            Prows = P[rows]
            Vd = np.einsum("msj,mj->ms", Prows, Vd) + np.einsum("msj,mj->ms", D[rows], V)
            V = r[rows] + np.einsum("msj,mj->ms", Prows, V)
        vals[lo:hi] = V
        ders[lo:hi] = Vd
    return vals, ders
