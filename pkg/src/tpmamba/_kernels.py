"""Compiled inner loops for the operators that dominate desk-scale training time.

Each kernel has a fixed loop order so results are bitwise reproducible.
"""

import math

import numba
import numpy as np


@numba.njit(cache=True)
def depthwise_forward(xp, w, stride, Ho, Wo):
    B, C = xp.shape[0], xp.shape[1]
    kh, kw = w.shape[2], w.shape[3]
    out = np.zeros((B, C, Ho, Wo))
    for b in range(B):
        for c in range(C):
            for i in range(kh):
                for j in range(kw):
                    wt = w[c, 0, i, j]
                    for y in range(Ho):
                        for x in range(Wo):
                            out[b, c, y, x] += wt * xp[b, c, y * stride + i, x * stride + j]
    return out


@numba.njit(cache=True)
def depthwise_backward(xp, w, g, stride):
    B, C, Ho, Wo = g.shape
    kh, kw = w.shape[2], w.shape[3]
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for b in range(B):
        for c in range(C):
            for i in range(kh):
                for j in range(kw):
                    wt = w[c, 0, i, j]
                    acc = 0.0
                    for y in range(Ho):
                        for x in range(Wo):
                            gv = g[b, c, y, x]
                            acc += gv * xp[b, c, y * stride + i, x * stride + j]
                            gxp[b, c, y * stride + i, x * stride + j] += gv * wt
                    gw[c, 0, i, j] += acc
    return gxp, gw


@numba.njit(cache=True)
def attention_forward(q, k, v, bias, has_bias, scale):
    """q, k, v: [W, H, T, d]; bias: [H, T, T]. Returns (out, probabilities)."""
    nw, nh, t, d = q.shape
    out = np.empty((nw, nh, t, d))
    p = np.empty((nw, nh, t, t))
    for w in range(nw):
        for h in range(nh):
            s = np.dot(q[w, h], k[w, h].T)
            for i in range(t):
                m = -np.inf
                for j in range(t):
                    val = s[i, j] * scale
                    if has_bias:
                        val += bias[h, i, j]
                    s[i, j] = val
                    if val > m:
                        m = val
                tot = 0.0
                for j in range(t):
                    ev = math.exp(s[i, j] - m)
                    s[i, j] = ev
                    tot += ev
                inv = 1.0 / tot
                for j in range(t):
                    s[i, j] *= inv
            p[w, h] = s
            out[w, h] = np.dot(s, v[w, h])
    return out, p


@numba.njit(cache=True)
def attention_backward(q, k, v, p, g, scale, has_bias):
    nw, nh, t, d = q.shape
    gq = np.empty_like(q)
    gk = np.empty_like(k)
    gv = np.empty_like(v)
    gb = np.zeros((nh, t, t)) if has_bias else np.zeros((1, 1, 1))
    for w in range(nw):
        for h in range(nh):
            pw = p[w, h]
            gw = g[w, h]
            gv[w, h] = np.dot(pw.T, gw)
            gp = np.dot(gw, v[w, h].T)
            for i in range(t):
                dot = 0.0
                for j in range(t):
                    dot += gp[i, j] * pw[i, j]
                for j in range(t):
                    gs = pw[i, j] * (gp[i, j] - dot)
                    if has_bias:
                        gb[h, i, j] += gs
                    gp[i, j] = gs * scale
            gq[w, h] = np.dot(gp, k[w, h])
            gk[w, h] = np.dot(gp.T, q[w, h])
    return gq, gk, gv, gb
