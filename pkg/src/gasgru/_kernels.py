"""Numba loops for the two sequential hot spots: external attention over 500
memory slots and the GRU recurrence. Everything else stays in numpy/BLAS.

The attention kernels recompute each row's softmax in the backward pass from
the stored row max and normaliser instead of caching the B x T x S weights.
The GRU kernels work time-major with the batch innermost, (T, H, B), so the
per-step gate updates vectorise across batch members. All kernels release the
GIL, which lets independent folds train on separate threads.
"""

import numpy as np
from numba import njit

_LOG2E = 1.4426950408889634
_LN2_HI = 6.93147180369123816490e-01
_LN2_LO = 1.90821492927058770002e-10


@njit(fastmath=True, inline="always")
def _exp_shifted(logits, shift, out, bits):
    """out[i] = exp(logits[i] - shift) for logits <= shift; returns the sum.

    Cody-Waite reduction plus a degree-12 Taylor polynomial. Relative error is
    below 2e-15 for arguments in [-50, 0]; fastmath reassociation lets it grow
    with |k| to about 3e-14 near the -708 clamp, where values are < 1e-300.
    Written branch-free so the loop vectorises (libm exp does not).
    """
    n = logits.size
    for i in range(n):
        v = max(logits[i] - shift, -708.0)
        k = np.int64(v * _LOG2E - 0.5)  # v <= 0: truncation rounds to nearest
        kf = np.float64(k)
        r = (v - kf * _LN2_HI) - kf * _LN2_LO
        out[i] = 1.0 + r * (1.0 + r * (1 / 2 + r * (1 / 6 + r * (1 / 24 + r * (1 / 120 + r * (
            1 / 720 + r * (1 / 5040 + r * (1 / 40320 + r * (1 / 362880 + r * (
                1 / 3628800 + r * (1 / 39916800 + r * (1 / 479001600))))))))))))
        bits[i] = (k + 1023) << 52
    scale = bits.view(np.float64)
    total = 0.0
    for i in range(n):
        out[i] *= scale[i]
        total += out[i]
    return total


@njit(fastmath=True, inline="always")
def _row_max(x):
    # four accumulators so the reduction vectorises; ndarray.max() does not
    n = x.size
    m0 = m1 = m2 = m3 = x[0]
    i = 0
    while i + 4 <= n:
        m0 = max(m0, x[i])
        m1 = max(m1, x[i + 1])
        m2 = max(m2, x[i + 2])
        m3 = max(m3, x[i + 3])
        i += 4
    while i < n:
        m0 = max(m0, x[i])
        i += 1
    return max(max(m0, m1), max(m2, m3))


_BLOCK = 64  # time steps per GEMM block; B x 64 x S scratch stays cache-resident


@njit(fastmath=True, cache=True, nogil=True)
def attention_forward(X, keys_t, values):
    """X: (B, T, D); keys_t: (D, S); values: (S, D).

    Returns Y (B, T, D) and each row's softmax max and normaliser (B, T).
    The exponentials are left unnormalised; 1/z is applied to the D outputs.
    """
    B, T, D = X.shape
    S = keys_t.shape[1]
    Y = np.empty((B, T, D))
    rmax = np.empty((B, T))
    rsum = np.empty((B, T))
    bits = np.empty(S, np.int64)
    for b in range(B):
        for t0 in range(0, T, _BLOCK):
            t1 = min(T, t0 + _BLOCK)
            A = np.dot(X[b, t0:t1], keys_t)
            for i in range(t1 - t0):
                m = _row_max(A[i])
                rmax[b, t0 + i] = m
                rsum[b, t0 + i] = _exp_shifted(A[i], m, A[i], bits)
            Yb = np.dot(A, values)
            for i in range(t1 - t0):
                inv = 1.0 / rsum[b, t0 + i]
                for d in range(D):
                    Y[b, t0 + i, d] = Yb[i, d] * inv
    return Y, rmax, rsum


@njit(fastmath=True, cache=True, nogil=True)
def attention_weights(X, keys_t, rmax, rsum):
    """Materialise the (B, T, S) attention weights (for tests and inspection)."""
    B, T, D = X.shape
    S = keys_t.shape[1]
    out = np.empty((B, T, S))
    bits = np.empty(S, np.int64)
    for b in range(B):
        A = np.dot(X[b], keys_t)
        for i in range(T):
            _exp_shifted(A[i], rmax[b, i], A[i], bits)
            inv = 1.0 / rsum[b, i]
            for s in range(S):
                A[i, s] *= inv
        out[b] = A
    return out


@njit(fastmath=True, cache=True, nogil=True)
def attention_backward(X, keys_t, values_t, rmax, rsum, dY):
    """Gradients of the transposed (D, S) key and value memories."""
    B, T, D = X.shape
    S = keys_t.shape[1]
    dkeys_t = np.zeros((D, S))
    dvalues_t = np.zeros((D, S))
    bits = np.empty(S, np.int64)
    for b in range(B):
        for t0 in range(0, T, _BLOCK):
            t1 = min(T, t0 + _BLOCK)
            n = t1 - t0
            E = np.dot(X[b, t0:t1], keys_t)
            dy = np.empty((n, D))
            for i in range(n):
                _exp_shifted(E[i], rmax[b, t0 + i], E[i], bits)  # unnormalised weights
                inv = 1.0 / rsum[b, t0 + i]
                for d in range(D):
                    dy[i, d] = dY[b, t0 + i, d] * inv
            dA = np.dot(dy, values_t)  # = d(weights) / z
            for i in range(n):
                dot = 0.0
                for s in range(S):
                    dot += E[i, s] * dA[i, s]
                inv = 1.0 / rsum[b, t0 + i]
                dot *= inv
                for s in range(S):
                    dA[i, s] = E[i, s] * (dA[i, s] - dot)  # d(logits)
            dvalues_t += np.dot(np.ascontiguousarray(dy.T), E)
            dkeys_t += np.dot(np.ascontiguousarray(X[b, t0:t1].T), dA)
    return dkeys_t, dvalues_t


@njit(fastmath=True, inline="always")
def _exp_parts(v):
    """exp(v) = poly * 2**k for |v| <= 708 (v is clamped)."""
    v = min(max(v, -708.0), 708.0)
    k = np.int64(v * _LOG2E + 1024.5) - 1024  # round to nearest without a floor call
    kf = np.float64(k)
    r = (v - kf * _LN2_HI) - kf * _LN2_LO
    p = 1.0 + r * (1.0 + r * (1 / 2 + r * (1 / 6 + r * (1 / 24 + r * (1 / 120 + r * (
        1 / 720 + r * (1 / 5040 + r * (1 / 40320 + r * (1 / 362880 + r * (
            1 / 3628800 + r * (1 / 39916800 + r * (1 / 479001600))))))))))))
    return p, k


@njit(fastmath=True, inline="always")
def _gates(a, out, bits, tanh):
    """out = sigmoid(a), or tanh(a) when ``tanh``; 2-D (rows, batch) blocks."""
    n, m = a.shape
    for i in range(n):
        for j in range(m):
            x = -2.0 * a[i, j] if tanh else -a[i, j]
            p, k = _exp_parts(x)
            out[i, j] = p
            bits[i, j] = (k + 1023) << 52
    for i in range(n):
        scale = bits[i].view(np.float64)
        for j in range(m):
            e = out[i, j] * scale[j]
            out[i, j] = (1.0 - e) / (1.0 + e) if tanh else 1.0 / (1.0 + e)


@njit(fastmath=True, cache=True, nogil=True)
def gru_forward(pre, U, h0):
    """GRU recurrence given precomputed input projections, batch innermost.

    pre: (T, 3H, B) = W x_t + b, gate order [update z, reset r, candidate];
    U: (3, H, H); h0: (H, B). Returns (hidden, z, r, candidate), each (T, H, B).
    """
    T, H3, B = pre.shape
    H = H3 // 3
    hs = np.empty((T, H, B))
    zs = np.empty((T, H, B))
    rs = np.empty((T, H, B))
    cs = np.empty((T, H, B))
    h = h0.copy()
    a = np.empty((2 * H, B))
    g = np.empty((2 * H, B))
    rh = np.empty((H, B))
    ac = np.empty((H, B))
    c = np.empty((H, B))
    bits = np.empty((2 * H, B), np.int64)
    for t in range(T):
        a[:] = pre[t, :2 * H]
        ac[:] = pre[t, 2 * H:]
        for i in range(H):
            for j in range(H):
                uz = U[0, i, j]
                ur = U[1, i, j]
                for b in range(B):
                    a[i, b] += uz * h[j, b]
                    a[H + i, b] += ur * h[j, b]
        _gates(a, g, bits, False)
        for j in range(H):
            for b in range(B):
                rh[j, b] = g[H + j, b] * h[j, b]
        for i in range(H):
            for j in range(H):
                u = U[2, i, j]
                for b in range(B):
                    ac[i, b] += u * rh[j, b]
        _gates(ac, c, bits, True)
        for i in range(H):
            for b in range(B):
                z = g[i, b]
                h[i, b] = (1.0 - z) * h[i, b] + z * c[i, b]
                hs[t, i, b] = h[i, b]
                zs[t, i, b] = z
                rs[t, i, b] = g[H + i, b]
                cs[t, i, b] = c[i, b]
    return hs, zs, rs, cs


@njit(fastmath=True, cache=True, nogil=True)
def gru_backward(U, h0, hs, zs, rs, cs, dH, X):
    """Backprop through time in the (T, H, B) layout of :func:`gru_forward`.

    dH is the loss gradient arriving at each h_t from outside the recurrence and
    X (T, F, B) the layer input. Returns d(pre) (T, 3H, B), dW (3H, F), dU (3, H, H)
    and dh0 (H, B). Weight gradients accumulate per batch lane and are summed at the end.
    """
    T, H, B = hs.shape
    F = X.shape[1]
    dpre = np.empty((T, 3 * H, B))
    dWb = np.zeros((3 * H, F, B))
    dUb = np.zeros((3, H, H, B))
    carry = np.zeros((H, B))
    dprev = np.empty((H, B))
    drh = np.empty((H, B))
    rh = np.empty((H, B))
    for t in range(T - 1, -1, -1):
        hp = h0 if t == 0 else hs[t - 1]
        for i in range(H):
            for b in range(B):
                d = dH[t, i, b] + carry[i, b]
                z = zs[t, i, b]
                c = cs[t, i, b]
                dpre[t, i, b] = d * (c - hp[i, b]) * z * (1.0 - z)
                dpre[t, 2 * H + i, b] = d * z * (1.0 - c * c)
                dprev[i, b] = d * (1.0 - z)
                drh[i, b] = 0.0
                rh[i, b] = rs[t, i, b] * hp[i, b]
        for i in range(H):
            for j in range(H):
                u = U[2, i, j]
                for b in range(B):
                    drh[j, b] += u * dpre[t, 2 * H + i, b]
        for j in range(H):
            for b in range(B):
                r = rs[t, j, b]
                dpre[t, H + j, b] = drh[j, b] * hp[j, b] * r * (1.0 - r)
                carry[j, b] = dprev[j, b] + drh[j, b] * r
        for i in range(H):
            for j in range(H):
                uz = U[0, i, j]
                ur = U[1, i, j]
                for b in range(B):
                    daz = dpre[t, i, b]
                    dar = dpre[t, H + i, b]
                    carry[j, b] += uz * daz + ur * dar
                    dUb[0, i, j, b] += daz * hp[j, b]
                    dUb[1, i, j, b] += dar * hp[j, b]
                    dUb[2, i, j, b] += dpre[t, 2 * H + i, b] * rh[j, b]
        for i in range(3 * H):
            for j in range(F):
                for b in range(B):
                    dWb[i, j, b] += dpre[t, i, b] * X[t, j, b]
    return dpre, dWb.sum(axis=2), dUb.sum(axis=3), carry
