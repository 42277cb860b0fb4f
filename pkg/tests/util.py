"""Shared test helpers: finite-difference gradient checks and tiny fixtures."""

import numpy as np

from bwbdesign import autodiff as ad
from bwbdesign.geometry import PlanformParams


def fd_gradient(f, x, h=1e-6):
    """Central finite-difference gradient of scalar f at 2-D array x."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        ij = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[ij] += h
        xm[ij] -= h
        g[ij] = (f(xp) - f(xm)) / (2.0 * h)
        it.iternext()
    return g


def rel_err(a, b, floor=1e-6):
    """Max elementwise |a-b| / max(|a|+|b|, floor)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(np.abs(a) + np.abs(b), floor)
    return float(np.max(np.abs(a - b) / denom))


def gradcheck(build, x0, h=1e-6):
    """Compare tape gradients against central differences.

    ``build(tape, x_tensor)`` must return a scalar tensor. Returns the max
    relative error between the tape gradient and the FD gradient at x0.
    """
    def scalar(x):
        tape = ad.Tape()
        xt = tape.leaf(x)
        return float(build(tape, xt).value[0, 0])

    tape = ad.Tape()
    xt = tape.leaf(x0)
    out = build(tape, xt)
    grads = ad.backward(tape, out)
    g_ad = grads[xt.idx]
    g_fd = fd_gradient(scalar, x0, h=h)
    return rel_err(g_ad, g_fd)


def mid_params() -> PlanformParams:
    return PlanformParams(
        b1=0.15, b2=0.125, b3=0.525, c2=0.70, c3=0.23, c4=0.075,
        s1=50.0, s3=30.0, x3=0.575,
    )
