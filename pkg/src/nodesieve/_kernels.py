"""Numba-compiled inner loops.

Everything here is sequential and order-stable, so results are bitwise
reproducible for identical inputs. The convolution kernels keep the
fastest-varying output axis innermost so LLVM can vectorize the row
updates.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def conv3d_forward(xp, w, stride, out):
    """out[co] += correlate(xp[ci], w[co, ci]) over all ci, sampled with stride.

    xp is the already zero-padded input (ci, dp, hp, wp); out must be
    zero-initialized with shape (co, do, ho, wo).
    """
    co_n, ci_n, k = w.shape[0], w.shape[1], w.shape[2]
    do, ho, wo = out.shape[1], out.shape[2], out.shape[3]
    for co in range(co_n):
        for ci in range(ci_n):
            for kz in range(k):
                for ky in range(k):
                    for kx in range(k):
                        wv = w[co, ci, kz, ky, kx]
                        for od in range(do):
                            iz = od * stride + kz
                            for oh in range(ho):
                                row_out = out[co, od, oh]
                                row_in = xp[ci, iz, oh * stride + ky]
                                if stride == 1:
                                    for ow in range(wo):
                                        row_out[ow] += wv * row_in[ow + kx]
                                else:
                                    for ow in range(wo):
                                        row_out[ow] += wv * row_in[ow * stride + kx]


@njit(cache=True)
def conv3d_input_grad(gout, w, stride, gxp):
    """Scatter the output gradient back onto the padded input buffer."""
    co_n, ci_n, k = w.shape[0], w.shape[1], w.shape[2]
    do, ho, wo = gout.shape[1], gout.shape[2], gout.shape[3]
    for co in range(co_n):
        for ci in range(ci_n):
            for kz in range(k):
                for ky in range(k):
                    for kx in range(k):
                        wv = w[co, ci, kz, ky, kx]
                        for od in range(do):
                            iz = od * stride + kz
                            for oh in range(ho):
                                row_g = gout[co, od, oh]
                                row_x = gxp[ci, iz, oh * stride + ky]
                                if stride == 1:
                                    for ow in range(wo):
                                        row_x[ow + kx] += wv * row_g[ow]
                                else:
                                    for ow in range(wo):
                                        row_x[ow * stride + kx] += wv * row_g[ow]


@njit(cache=True)
def conv3d_weight_grad(gout, xp, stride, gw):
    """Accumulate the weight gradient; gw must be zero-initialized."""
    co_n, ci_n, k = gw.shape[0], gw.shape[1], gw.shape[2]
    do, ho, wo = gout.shape[1], gout.shape[2], gout.shape[3]
    for co in range(co_n):
        for ci in range(ci_n):
            for kz in range(k):
                for ky in range(k):
                    for kx in range(k):
                        acc = 0.0
                        for od in range(do):
                            iz = od * stride + kz
                            for oh in range(ho):
                                row_g = gout[co, od, oh]
                                row_x = xp[ci, iz, oh * stride + ky]
                                if stride == 1:
                                    for ow in range(wo):
                                        acc += row_g[ow] * row_x[ow + kx]
                                else:
                                    for ow in range(wo):
                                        acc += row_g[ow] * row_x[ow * stride + kx]
                        gw[co, ci, kz, ky, kx] += acc


@njit(cache=True)
def edt_envelope_pass(f, spacing):
    """One lower-envelope pass of the exact squared distance transform.

    f holds squared distances with the scan axis last, shape (lanes, n),
    and is updated in place. Infinite entries mark lanes or positions
    with no source yet; sources at infinity never enter the envelope.
    """
    lanes, n = f.shape
    s2 = spacing * spacing
    v = np.empty(n, np.int64)
    z = np.empty(n + 1, np.float64)
    d = np.empty(n, np.float64)
    inf = np.inf
    for m in range(lanes):
        row = f[m]
        k = -1
        for q in range(n):
            fq = row[q]
            if fq == inf:
                continue
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -inf
                z[1] = inf
                continue
            while True:
                vk = v[k]
                s = ((fq + s2 * q * q) - (row[vk] + s2 * vk * vk)) / (
                    2.0 * s2 * (q - vk)
                )
                if s <= z[k]:
                    k -= 1
                else:
                    break
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = inf
        if k < 0:
            continue
        k = 0
        for q in range(n):
            while z[k + 1] < q:
                k += 1
            dq = (q - v[k]) * spacing
            d[q] = dq * dq + row[v[k]]
        for q in range(n):
            row[q] = d[q]
