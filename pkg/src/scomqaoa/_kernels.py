"""Compiled amplitude kernels.

Every Pauli string is encoded by three integers: ``xmask`` (sites carrying X or
Y), ``zmask`` (sites carrying Z or Y) and ``ny`` (number of Y letters), so that

    P = i**ny * X^xmask * Z^zmask,    P|b> = i**ny * (-1)**popcount(b & zmask) |b ^ xmask>.

Gates are rotations ``exp(-i a P) = cos(a) - i sin(a) P`` applied in place.
Updates are windowed: indices are split as ``(outer, window, inner)`` around
the string's site window ``lo..hi`` so the inner loop runs over contiguous
amplitudes; no global matrix is ever formed.  Arithmetic is done on the
interleaved float64 view of the complex buffer.
"""

import numpy as np
from numba import njit

_IPOW = np.array([1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j])
_FAST = dict(cache=True, fastmath=True, error_model="numpy")


@njit(cache=True, inline="always")
def _parity(x):
    x ^= x >> 32
    x ^= x >> 16
    x ^= x >> 8
    x ^= x >> 4
    x ^= x >> 2
    x ^= x >> 1
    return x & 1


@njit(cache=True, inline="always")
def _window(mask):
    lo = 0
    while not (mask >> lo) & 1:
        lo += 1
    hi = lo
    while mask >> (hi + 1):
        hi += 1
    return lo, hi


@njit(**_FAST)
def rotate(psi, xmask, zmask, ny, c, s):
    """psi <- (c - i s P) psi, in place."""
    n = psi.shape[0]
    pr = psi.view(np.float64)
    lo, hi = _window(xmask | zmask)
    xw = xmask >> lo
    zw = zmask >> lo
    M = 1 << (hi - lo + 1)
    B = 1 << lo
    A = n >> (hi + 1)
    S = 4 << hi  # float offset between consecutive outer blocks
    ph = -1j * s * _IPOW[ny % 4]
    for k in range(M):
        k2 = k ^ xw
        if k2 < k:
            continue
        i1 = 2 * (k << lo)
        if k2 == k:
            d = c + ph * (1.0 - 2.0 * _parity(k & zw))
            er = d.real
            ei = d.imag
            for a in range(A):
                for bb in range(B):
                    j = i1 + a * S + 2 * bb
                    xr = pr[j]
                    xi = pr[j + 1]
                    pr[j] = er * xr - ei * xi
                    pr[j + 1] = er * xi + ei * xr
            continue
        o1 = ph * (1.0 - 2.0 * _parity(k2 & zw))
        o2 = ph * (1.0 - 2.0 * _parity(k & zw))
        o1r = o1.real
        o1i = o1.imag
        o2r = o2.real
        o2i = o2.imag
        i2 = 2 * (k2 << lo)
        for a in range(A):
            for bb in range(B):
                j1 = i1 + a * S + 2 * bb
                j2 = i2 + a * S + 2 * bb
                xr = pr[j1]
                xi = pr[j1 + 1]
                yr = pr[j2]
                yi = pr[j2 + 1]
                pr[j1] = c * xr + o1r * yr - o1i * yi
                pr[j1 + 1] = c * xi + o1r * yi + o1i * yr
                pr[j2] = c * yr + o2r * xr - o2i * xi
                pr[j2 + 1] = c * yi + o2r * xi + o2i * xr


@njit(**_FAST)
def add_pauli(psi, out, xmask, zmask, ny, coef):
    """out <- out + coef * P psi."""
    n = psi.shape[0]
    pin = psi.view(np.float64)
    pout = out.view(np.float64)
    lo, hi = _window(xmask | zmask)
    xw = xmask >> lo
    zw = zmask >> lo
    M = 1 << (hi - lo + 1)
    B = 1 << lo
    A = n >> (hi + 1)
    S = 4 << hi
    ph = coef * _IPOW[ny % 4]
    for k in range(M):
        # (P psi)[k] = i**ny * sign(k ^ xw) * psi[k ^ xw]
        f = ph * (1.0 - 2.0 * _parity((k ^ xw) & zw))
        er = f.real
        ei = f.imag
        i_out = 2 * (k << lo)
        i_in = 2 * ((k ^ xw) << lo)
        for a in range(A):
            for bb in range(B):
                jo = i_out + a * S + 2 * bb
                ji = i_in + a * S + 2 * bb
                xr = pin[ji]
                xi = pin[ji + 1]
                pout[jo] += er * xr - ei * xi
                pout[jo + 1] += er * xi + ei * xr


@njit(cache=True)
def apply_pauli(psi, out, xmask, zmask, ny, coef):
    """out <- coef * P psi."""
    out[:] = 0.0
    add_pauli(psi, out, xmask, zmask, ny, coef)


@njit(cache=True)
def run_gates(psi, xm, zm, ny, coef, param, weight, theta, g0, g1):
    """Apply gates g0..g1-1 of a compiled program to psi in place."""
    for g in range(g0, g1):
        a = weight[g] * theta[param[g]] * coef[g]
        rotate(psi, xm[g], zm[g], ny[g], np.cos(a), np.sin(a))


@njit(cache=True)
def forward_cache(psi0, xm, zm, ny, coef, param, weight, theta, cache):
    """Fill cache[g] with the state just before gate g; return the final state."""
    psi = psi0.copy()
    for g in range(xm.shape[0]):
        cache[g, :] = psi
        a = weight[g] * theta[param[g]] * coef[g]
        rotate(psi, xm[g], zm[g], ny[g], np.cos(a), np.sin(a))
    return psi


@njit(cache=True)
def tangents_cached(cache, xm, zm, ny, coef, param, weight, theta, pptr, pidx, out):
    """out[p] = sum over gates g of parameter p of w_g U_{>=g} K_g |psi_g>."""
    G = xm.shape[0]
    P = pptr.shape[0] - 1
    for p in range(P):
        v = out[p]
        v[:] = 0.0
        cur = pidx[pptr[p]]
        for k in range(pptr[p], pptr[p + 1]):
            g = pidx[k]
            run_gates(v, xm, zm, ny, coef, param, weight, theta, cur, g)
            add_pauli(cache[g], v, xm[g], zm[g], ny[g], weight[g] * coef[g])
            cur = g
        run_gates(v, xm, zm, ny, coef, param, weight, theta, cur, G)


@njit(cache=True)
def tangents_streamed(psi0, xm, zm, ny, coef, param, weight, theta, pptr, pidx, out):
    """Same as tangents_cached, recomputing intermediate states on the fly."""
    G = xm.shape[0]
    P = pptr.shape[0] - 1
    psi = psi0.copy()
    at = 0
    for p in range(P):
        first = pidx[pptr[p]]
        run_gates(psi, xm, zm, ny, coef, param, weight, theta, at, first)
        at = first
        probe = psi.copy()
        v = out[p]
        v[:] = 0.0
        cur = first
        for k in range(pptr[p], pptr[p + 1]):
            g = pidx[k]
            run_gates(v, xm, zm, ny, coef, param, weight, theta, cur, g)
            run_gates(probe, xm, zm, ny, coef, param, weight, theta, cur, g)
            add_pauli(probe, v, xm[g], zm[g], ny[g], weight[g] * coef[g])
            cur = g
        run_gates(v, xm, zm, ny, coef, param, weight, theta, cur, G)


@njit(cache=True)
def pauli_sum_apply(psi, out, xm, zm, ny, coef):
    """out <- sum_t coef_t P_t psi."""
    out[:] = 0.0
    for t in range(xm.shape[0]):
        add_pauli(psi, out, xm[t], zm[t], ny[t], coef[t])


@njit(cache=True)
def parity_weights(n):
    """(-1)**popcount(b) for b < n."""
    w = np.empty(n)
    for b in range(n):
        w[b] = 1.0 - 2.0 * _parity(b)
    return w
