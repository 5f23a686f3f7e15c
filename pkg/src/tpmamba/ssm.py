"""Selective state-space machinery: ZOH discretization, selection projections, scans.

The state matrix is diagonal per channel, so the zero-order hold has the
closed form ``a_bar = exp(delta*a)`` and ``b_bar = (exp(delta*a) - 1) / a * B``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from . import tensor as T
from .nn import Module, parameter
from .rng import SplitMix64
from .tensor import Tensor

# below this |delta*a| the ZOH input gain switches to its first-order series
ZOH_SERIES_CUTOFF = 1e-8


@dataclass
class DiscreteSsm:
    a_bar: np.ndarray
    b_bar: np.ndarray


def zoh_gain(delta, a):
    """(exp(delta*a) - 1) / a, continuous through a == 0."""
    delta = np.asarray(delta, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    z = delta * a
    small = np.abs(z) < ZOH_SERIES_CUTOFF
    safe_a = np.where(small, 1.0, a)
    return np.where(small, delta * (1.0 + 0.5 * z), np.expm1(z) / safe_a)


def discretize_zoh(a_diag, b, delta) -> DiscreteSsm:
    """Per-step ZOH of a diagonal continuous system.

    ``a_diag`` is [N] (or [D, N]), ``b`` is [L, N] and ``delta`` is [L]
    (or [L, D]).  Returns ``a_bar`` and ``b_bar`` broadcast to [L, ..., N].
    """
    a_diag = np.asarray(a_diag, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)[..., None]
    if a_diag.ndim == 2:
        b = b[:, None, :]
    return DiscreteSsm(np.exp(delta * a_diag), zoh_gain(delta, a_diag) * b)


# ---------------------------------------------------------------- kernels
@numba.njit(cache=True)
def _scan_forward(x, delta, A, Bm, Cm, Dv, store):
    nb, L, D = x.shape
    N = A.shape[1]
    y = np.empty_like(x)
    hs = np.empty((nb, L, D, N) if store else (1, 1, 1, 1))
    h = np.zeros((D, N))
    for b in range(nb):
        h[:, :] = 0.0
        for k in range(L):
            for d in range(D):
                dl = delta[b, k, d]
                xd = x[b, k, d]
                acc = Dv[d] * xd
                for n in range(N):
                    a = A[d, n]
                    z = dl * a
                    em = math.expm1(z)
                    if abs(z) < 1e-8:
                        phi = dl * (1.0 + 0.5 * z)
                    else:
                        phi = em / a
                    hv = (1.0 + em) * h[d, n] + phi * Bm[b, k, n] * xd
                    h[d, n] = hv
                    acc += Cm[b, k, n] * hv
                    if store:
                        hs[b, k, d, n] = hv
                y[b, k, d] = acc
    return y, hs


@numba.njit(cache=True)
def _scan_backward(x, delta, A, Bm, Cm, Dv, hs, dy):
    nb, L, D = x.shape
    N = A.shape[1]
    dx = np.zeros_like(x)
    ddelta = np.zeros_like(delta)
    dA = np.zeros_like(A)
    dB = np.zeros_like(Bm)
    dC = np.zeros_like(Cm)
    dD = np.zeros_like(Dv)
    carry = np.zeros((D, N))
    for b in range(nb):
        carry[:, :] = 0.0
        for k in range(L - 1, -1, -1):
            for d in range(D):
                dyd = dy[b, k, d]
                xd = x[b, k, d]
                dl = delta[b, k, d]
                gx = dyd * Dv[d]
                gdl = 0.0
                dD[d] += dyd * xd
                for n in range(N):
                    a = A[d, n]
                    z = dl * a
                    em = math.expm1(z)
                    abar = 1.0 + em
                    if abs(z) < 1e-8:
                        phi = dl * (1.0 + 0.5 * z)
                        dphi_dl = 1.0 + z
                        dphi_da = 0.5 * dl * dl
                    else:
                        phi = em / a
                        dphi_dl = abar
                        dphi_da = (dl * abar * a - em) / (a * a)
                    hv = hs[b, k, d, n]
                    hprev = hs[b, k - 1, d, n] if k > 0 else 0.0
                    g = dyd * Cm[b, k, n] + carry[d, n]
                    dC[b, k, n] += dyd * hv
                    bn = Bm[b, k, n]
                    dabar = g * hprev
                    dphi = g * bn * xd
                    gx += g * phi * bn
                    dB[b, k, n] += g * phi * xd
                    gdl += dabar * abar * a + dphi * dphi_dl
                    dA[d, n] += dabar * abar * dl + dphi * dphi_da
                    carry[d, n] = g * abar
                dx[b, k, d] = gx
                ddelta[b, k, d] = gdl
    return dx, ddelta, dA, dB, dC, dD


def _batched(arr: np.ndarray, ndim: int) -> np.ndarray:
    return np.ascontiguousarray(arr[None] if arr.ndim == ndim - 1 else arr, dtype=np.float64)


def selective_scan(x, delta, A, B, C, D) -> Tensor:
    """Selective scan ``h_k = a_bar_k h_{k-1} + b_bar_k x_k``, ``y_k = C_k h_k + D x_k``.

    Shapes: x, delta [Bt, L, D] (or [L, D]); A [D, N]; B, C [Bt, L, N]; D [D].
    Differentiable in every argument.
    """
    x, delta, A, B, C, D = (T.as_tensor(t) for t in (x, delta, A, B, C, D))
    if x.shape[-2] < 1:
        raise ValueError("selective_scan needs a sequence length of at least 1")
    squeeze = x.ndim == 2
    xs, ds = _batched(x.data, 3), _batched(delta.data, 3)
    Bs, Cs = _batched(B.data, 3), _batched(C.data, 3)
    Av, Dv = np.ascontiguousarray(A.data), np.ascontiguousarray(D.data)
    parents = (x, delta, A, B, C, D)
    store = T._GRAD_ENABLED and any(p.requires_grad for p in parents)
    y, hs = _scan_forward(xs, ds, Av, Bs, Cs, Dv, store)

    def bw(g):
        gs = _batched(g, 3)
        grads = _scan_backward(xs, ds, Av, Bs, Cs, Dv, hs, gs)
        if squeeze:
            grads = (grads[0][0], grads[1][0], grads[2], grads[3][0], grads[4][0], grads[5])
        return grads

    return T._result(y[0] if squeeze else y, parents, bw)


def selective_scan_reference(x, delta, A, B, C, D) -> np.ndarray:
    """Step-by-step recurrence with an explicit state vector; the oracle for ``selective_scan``."""
    x, delta, B, C = (np.asarray(getattr(t, "data", t), dtype=np.float64) for t in (x, delta, B, C))
    A = np.asarray(getattr(A, "data", A), dtype=np.float64)
    D = np.asarray(getattr(D, "data", D), dtype=np.float64)
    if x.shape[-2] < 1:
        raise ValueError("selective_scan needs a sequence length of at least 1")
    squeeze = x.ndim == 2
    if squeeze:
        x, delta, B, C = x[None], delta[None], B[None], C[None]
    out = np.empty_like(x)
    for b in range(x.shape[0]):
        h = np.zeros(A.shape)
        for k in range(x.shape[1]):
            step = discretize_zoh(A, B[b, k][None], delta[b, k][None])
            h = step.a_bar[0] * h + step.b_bar[0] * x[b, k][:, None]
            out[b, k] = h @ C[b, k] + D * x[b, k]
    return out[0] if squeeze else out


# ------------------------------------------------------------ parameters
def _inverse_softplus(y: np.ndarray) -> np.ndarray:
    return y + np.log(-np.expm1(-y))


class SsmParams(Module):
    """Learned selective SSM over ``d_inner`` channels with ``n_state`` states each.

    B and C are projected per position (shared across channels); delta comes
    through a rank-``ceil(d_inner/16)`` bottleneck, one value per channel.
    """

    def __init__(self, rng: SplitMix64, d_inner: int, n_state: int = 8,
                 dt_min: float = 1e-3, dt_max: float = 1e-1):
        self.d_inner, self.n_state = d_inner, n_state
        self.rank = math.ceil(d_inner / 16)
        self.a_log = parameter(np.log(np.tile(np.arange(1, n_state + 1, dtype=np.float64), (d_inner, 1))))
        self.d_skip = parameter(np.ones(d_inner))
        std = math.sqrt(2.0 / d_inner)
        self.x_proj = parameter(
            rng.trunc_normal(d_inner * (self.rank + 2 * n_state), std).reshape(d_inner, -1)
        )
        self.dt_weight = parameter(
            rng.trunc_normal(self.rank * d_inner, self.rank ** -0.5).reshape(self.rank, d_inner)
        )
        dt = np.exp(rng.uniform(math.log(dt_min), math.log(dt_max), d_inner))
        self.dt_bias = parameter(_inverse_softplus(dt))

    def a_diag(self) -> Tensor:
        return T.scale(T.exp(self.a_log), -1.0)

    def project_selection(self, x_seq: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """Input-dependent (B, C, delta) for a [..., L, d_inner] sequence."""
        proj = T.matmul(x_seq, self.x_proj)
        r, n = self.rank, self.n_state
        dt_low = T.narrow(proj, -1, 0, r)
        B = T.narrow(proj, -1, r, n)
        C = T.narrow(proj, -1, r + n, n)
        delta = T.softplus(T.add(T.matmul(dt_low, self.dt_weight), self.dt_bias))
        return B, C, delta

    def forward(self, x_seq: Tensor) -> Tensor:
        B, C, delta = self.project_selection(x_seq)
        return selective_scan(x_seq, delta, self.a_diag(), B, C, self.d_skip)

    def reference(self, x_seq: Tensor) -> np.ndarray:
        B, C, delta = self.project_selection(x_seq)
        return selective_scan_reference(x_seq, delta, self.a_diag(), B, C, self.d_skip)

    def macs(self, length: int) -> int:
        d, n, r = self.d_inner, self.n_state, self.rank
        projections = length * d * (r + 2 * n) + length * r * d
        # state update (a_bar*h, b_bar*x) plus readout C.h per channel-state
        recurrence = 3 * length * d * n
        return projections + recurrence
