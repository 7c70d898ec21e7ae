"""Shared test oracles: finite differences and error metrics.

The finite-difference routines here are the independent check for every
analytic gradient and log-determinant in the package; they never call back
into the autodiff machinery they verify.
"""

import numpy as np


def finite_diff_grad(f, x, eps=1e-6):
    """Central finite-difference gradient of scalar-valued f at 2-d array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            xp = x.copy()
            xm = x.copy()
            xp[i, j] += eps
            xm[i, j] -= eps
            g[i, j] = (f(xp) - f(xm)) / (2.0 * eps)
    return g


def finite_diff_jacobian(f, x, eps=1e-6):
    """Jacobian of vector-valued f (1-d in, 1-d out) by central differences."""
    x = np.asarray(x, dtype=np.float64)
    y0 = np.asarray(f(x))
    jac = np.zeros((y0.size, x.size))
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += eps
        xm[j] -= eps
        jac[:, j] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * eps)
    return jac


def max_rel_err(a, b, floor=1e-2):
    """Largest elementwise |a-b| relative to max(|a|, |b|, floor).

    The floor keeps the metric meaningful where the exact gradient is ~0:
    there the comparison degrades to |a-b| <= tol*floor, which still sits
    far above central-difference noise at eps=1e-6.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def wrap_angle_diff(a, b):
    """Smallest-magnitude angular difference a-b on the circle."""
    d = np.asarray(a) - np.asarray(b)
    return (d + np.pi) % (2.0 * np.pi) - np.pi
