"""Compiled in-place kernels for stacks of density matrices.

A single-qubit superoperator ``S`` acts on the 2x2 block of row bit ``a``
and column bit ``a'`` of qubit ``q``:

    rho'[a, a'] = sum_{c, c'} S[2a + a', 2c + c'] rho[c, c']

For a unitary ``S = kron(U, conj(U))``; for a Kraus channel
``S = sum_k kron(E_k, conj(E_k))``.  ``S`` may be shared (shape ``(1, 4, 4)``)
or given per stack entry (shape ``(B, 4, 4)``).
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def superop_inplace(rho, s, q, n):
    nb = rho.shape[0]
    d = rho.shape[1]
    mask = 1 << (n - 1 - q)
    shared = s.shape[0] == 1
    for b in range(nb):
        sb = 0 if shared else b
        m = s[sb]
        for i0 in range(d):
            if i0 & mask:
                continue
            i1 = i0 | mask
            for j0 in range(d):
                if j0 & mask:
                    continue
                j1 = j0 | mask
                r00 = rho[b, i0, j0]
                r01 = rho[b, i0, j1]
                r10 = rho[b, i1, j0]
                r11 = rho[b, i1, j1]
                rho[b, i0, j0] = m[0, 0] * r00 + m[0, 1] * r01 + m[0, 2] * r10 + m[0, 3] * r11
                rho[b, i0, j1] = m[1, 0] * r00 + m[1, 1] * r01 + m[1, 2] * r10 + m[1, 3] * r11
                rho[b, i1, j0] = m[2, 0] * r00 + m[2, 1] * r01 + m[2, 2] * r10 + m[2, 3] * r11
                rho[b, i1, j1] = m[3, 0] * r00 + m[3, 1] * r01 + m[3, 2] * r10 + m[3, 3] * r11


@njit(cache=True)
def cnot_inplace(rho, control, target, n):
    nb = rho.shape[0]
    d = rho.shape[1]
    cm = 1 << (n - 1 - control)
    tm = 1 << (n - 1 - target)
    for b in range(nb):
        for i in range(d):
            if (i & cm) and not (i & tm):
                k = i | tm
                for j in range(d):
                    tmp = rho[b, i, j]
                    rho[b, i, j] = rho[b, k, j]
                    rho[b, k, j] = tmp
        for i in range(d):
            for j in range(d):
                if (j & cm) and not (j & tm):
                    k = j | tm
                    tmp = rho[b, i, j]
                    rho[b, i, j] = rho[b, i, k]
                    rho[b, i, k] = tmp


@njit(cache=True)
def gram_1q(w, rho, q, n):
    """``G[b, 2a+a', 2c+c'] = sum W[b, (i,a), (j,a')] * rho[b, (i,c), (j,c')]``.

    With ``W`` the transposed observable, ``sum(S * G)`` equals
    ``Tr(O S(rho))`` for any superoperator ``S`` on qubit ``q``.
    """
    nb = rho.shape[0]
    d = rho.shape[1]
    mask = 1 << (n - 1 - q)
    g = np.zeros((nb, 4, 4), dtype=np.complex128)
    for b in range(nb):
        for i0 in range(d):
            if i0 & mask:
                continue
            i1 = i0 | mask
            for j0 in range(d):
                if j0 & mask:
                    continue
                j1 = j0 | mask
                wv = (w[b, i0, j0], w[b, i0, j1], w[b, i1, j0], w[b, i1, j1])
                rv = (rho[b, i0, j0], rho[b, i0, j1], rho[b, i1, j0], rho[b, i1, j1])
                for x in range(4):
                    for y in range(4):
                        g[b, x, y] += wv[x] * rv[y]
    return g


@njit(cache=True)
def pair_trace(w, rho):
    """``sum_ij W[b,i,j] rho[b,i,j]`` (real part) per stack entry."""
    nb = rho.shape[0]
    d = rho.shape[1]
    out = np.zeros(nb)
    for b in range(nb):
        acc = 0.0
        for i in range(d):
            for j in range(d):
                acc += (w[b, i, j] * rho[b, i, j]).real
        out[b] = acc
    return out
