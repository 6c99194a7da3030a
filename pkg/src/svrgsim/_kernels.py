"""Jitted inner loops for the sequential variance-reduced updates.

The step arithmetic matches FunctionFamily.run_segment exactly (same
update and same running-average recurrence); these kernels exist only
because the iterative phase is inherently sequential and a Python-level
loop would dominate every experiment.  `erm_segment.py_func` /
`quad_segment.py_func` expose the unjitted versions for equivalence
tests.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from .objective import LossKind

LOSS_IDS = {LossKind.SQUARE: 0, LossKind.LOGISTIC: 1, LossKind.SMOOTH_HINGE: 2}


@numba.njit(cache=True, inline="always")
def _dphi(loss_id, z, label):
    if loss_id == 0:
        return 2.0 * (z - label)
    if loss_id == 1:
        return -label / (1.0 + math.exp(label * z))
    t = label * z
    if t >= 1.0:
        return 0.0
    if t <= 0.0:
        return -label
    return -label * (1.0 - t)


@numba.njit(cache=True)
def erm_segment(A, labels, loss_id, lam_sigma, h, x, xbar, t, x_ref, eta, idx):
    """Variance-reduced steps over idx for dot-product losses.

    lam_sigma bundles the l2 coefficient and any proximal sigma; both
    enter the update only through (lam + sigma) * (x - x_ref).
    Mutates x and xbar in place; returns the advanced step counter.
    """
    d = x.shape[0]
    for p in range(idx.shape[0]):
        i = idx[p]
        z = 0.0
        zr = 0.0
        for j in range(d):
            z += A[i, j] * x[j]
            zr += A[i, j] * x_ref[j]
        dc = _dphi(loss_id, z, labels[i]) - _dphi(loss_id, zr, labels[i])
        for j in range(d):
            g = dc * A[i, j] + lam_sigma * (x[j] - x_ref[j]) + h[j]
            x[j] = x[j] - eta * g
        t += 1
        for j in range(d):
            xbar[j] = (x[j] + (t - 1) * xbar[j]) / t
    return t


@numba.njit(cache=True)
def quad_segment(H, block_id, type_id, b, sigma, h, x, xbar, t, x_ref, eta, idx):
    """Variance-reduced steps for block quadratics.

    Component i is a quadratic with Hessian H[type_id[i]] acting on the
    coordinate block block_id[i] of width b; type_id < 0 marks an
    identically-zero component.  Linear terms cancel in the gradient
    difference, so only Hessian-vector products appear.
    """
    d = x.shape[0]
    delta = np.empty(b)
    for p in range(idx.shape[0]):
        i = idx[p]
        s = type_id[i]
        base = block_id[i] * b
        if s >= 0:
            for r in range(b):
                acc = 0.0
                for c in range(b):
                    acc += H[s, r, c] * (x[base + c] - x_ref[base + c])
                delta[r] = acc
        for j in range(d):
            x[j] = x[j] - eta * (sigma * (x[j] - x_ref[j]) + h[j])
        if s >= 0:
            for r in range(b):
                x[base + r] = x[base + r] - eta * delta[r]
        t += 1
        for j in range(d):
            xbar[j] = (x[j] + (t - 1) * xbar[j]) / t
    return t
