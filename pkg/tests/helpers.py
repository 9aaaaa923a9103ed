"""Shared test oracles, kept independent of the library code paths."""

import numpy as np


def finite_difference_grads(loss_fn, params, eps=1e-4):
    """Central-difference gradient of loss_fn() w.r.t. each parameter.

    loss_fn must rebuild the forward pass from the current parameter
    values and return a float. Returns one array per parameter.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_fn()
            flat[i] = orig - eps
            lo = loss_fn()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def max_relative_error(approx, exact, floor=1e-6):
    """Elementwise |approx - exact| / max(|exact|, floor), reduced to the max."""
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    denom = np.maximum(np.abs(exact), floor)
    return float(np.max(np.abs(approx - exact) / denom))


def naive_conv3d(x, w, stride=1, padding=0):
    """Direct six-nested-loop 3d cross-correlation."""
    co_n, ci_n, k, _, _ = w.shape
    if padding:
        x = np.pad(x, ((0, 0),) + ((padding, padding),) * 3)
    d, h, ww = x.shape[1:]
    do = (d - k) // stride + 1
    ho = (h - k) // stride + 1
    wo = (ww - k) // stride + 1
    out = np.zeros((co_n, do, ho, wo))
    for co in range(co_n):
        for od in range(do):
            for oh in range(ho):
                for ow in range(wo):
                    acc = 0.0
                    for ci in range(ci_n):
                        for kz in range(k):
                            for ky in range(k):
                                for kx in range(k):
                                    acc += (
                                        x[ci, od * stride + kz, oh * stride + ky, ow * stride + kx]
                                        * w[co, ci, kz, ky, kx]
                                    )
                    out[co, od, oh, ow] = acc
    return out


def brute_force_edt(mask, spacing):
    """O(n^2) exact distance to the nearest foreground voxel center, in mm."""
    mask = np.asarray(mask, dtype=bool)
    spacing = np.asarray(spacing, dtype=np.float64)
    fg = np.argwhere(mask).astype(np.float64) * spacing
    coords = np.argwhere(np.ones_like(mask)).astype(np.float64) * spacing
    out = np.empty(mask.size)
    # chunked to bound memory on larger grids
    step = 4096
    for lo in range(0, coords.shape[0], step):
        block = coords[lo : lo + step]
        d2 = ((block[:, None, :] - fg[None, :, :]) ** 2).sum(axis=2)
        out[lo : lo + block.shape[0]] = np.sqrt(d2.min(axis=1))
    return out.reshape(mask.shape)
