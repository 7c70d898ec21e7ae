"""Monotonic rational-quadratic splines with analytic inverses.

Two variants of the same construction:

* linear-tail: acts on [-B, B], identity with unit slope outside, K bins and
  K+1 learned knot derivatives;
* circular: acts on [-pi, pi) with the derivative at -pi tied to the one at
  pi (K learned derivatives), inputs reduced modulo 2*pi first, no tails.

Raw (unconstrained) parameters map to constrained ones through a shifted
softmax (bin fractions, floored at min_bin_fraction of the interval) and a
shifted softplus (knot derivatives, floored at min_derivative).  The shifts
are chosen so that all-zero raw parameters give the identity map with zero
log-determinant, which is how conditioner nets start.

Inputs/outputs are one column per call (n x 1); per-sample raw parameters are
n x K matrices.  Bin membership is resolved on values (ties go to the right
bin, the domain edge to the last bin) and enters the graph as constant
one-hot selectors, so gradients flow through knot positions, derivatives and
the input itself.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ShapeError

TWO_PI = 2.0 * np.pi
MIN_DERIVATIVE = 1e-3


def wrap_angle(values):
    """Reduce an ndarray of angles to [-pi, pi)."""
    return (values + np.pi) % TWO_PI - np.pi


def wrap_angle_node(x):
    """Same reduction on a Node; the 2*pi*k shift is constant, gradient 1."""
    x = ad.as_node(x)
    shift = TWO_PI * np.floor((x.value + np.pi) / TWO_PI)
    if not shift.any():
        return x
    return ad.sub(x, ad.constant(shift))


def _softmax_rows(raw):
    shift = ad.constant(raw.value.max(axis=1, keepdims=True))
    e = ad.exp(ad.sub(raw, shift))
    return ad.div(e, ad.sum_(e, axis=1))


def _fractions(raw, num_bins, min_fraction):
    frac = _softmax_rows(raw)
    return ad.add(ad.mul(frac, 1.0 - num_bins * min_fraction), min_fraction)


def _knots(fractions, lo, hi):
    """Cumulative knot positions lo..hi as an n x (K+1) node."""
    n, k = fractions.value.shape
    upper = ad.constant(np.triu(np.ones((k, k))))
    cum = ad.add(ad.mul(ad.matmul(fractions, upper), hi - lo), lo)
    return ad.concat_cols(ad.constant(np.full((n, 1), lo)), cum)


def _gather(node, onehot):
    return ad.sum_(ad.mul(node, ad.constant(onehot)), axis=1)


def _onehot(idx, width):
    return (idx[:, None] == np.arange(width)[None, :]).astype(np.float64)


def rational_quadratic_spline(x, raw_widths, raw_heights, raw_derivs, *,
                              num_bins, inverse=False, circular=False,
                              tail_bound=None, min_bin_fraction=None,
                              min_derivative=MIN_DERIVATIVE):
    """Apply the spline (or its inverse) to one coordinate column.

    Returns (output n x 1, log|derivative| n x 1).  raw_derivs carries
    num_bins entries in circular mode (shared endpoint) and num_bins + 1
    otherwise.
    """
    x = ad.as_node(x)
    k = int(num_bins)
    if min_bin_fraction is None:
        min_bin_fraction = 1e-3 / k
    n = x.value.shape[0]
    expected_d = k if circular else k + 1
    for name, node, cols in (("widths", raw_widths, k), ("heights", raw_heights, k),
                             ("derivs", raw_derivs, expected_d)):
        if node.value.shape != (n, cols):
            raise ShapeError(f"spline raw {name}", node.value.shape, (n, cols))

    if circular:
        lo, hi = -np.pi, np.pi
        x_eval = wrap_angle_node(x)
        raw_d_full = ad.concat_cols(raw_derivs, ad.select_cols(raw_derivs, [0]))
        outside = None
    else:
        if tail_bound is None or tail_bound <= 0:
            raise ShapeError("spline", f"tail_bound must be positive, got {tail_bound}")
        lo, hi = -float(tail_bound), float(tail_bound)
        raw_d_full = raw_derivs
        outside = (x.value < lo) | (x.value > hi)
        if outside.any():
            # evaluate out-of-domain rows at a safe interior point; their
            # spline output is discarded in favor of the identity tails
            inside_m = ad.constant((~outside).astype(np.float64))
            x_eval = ad.add(ad.mul(x, inside_m), ad.constant(outside * 0.5 * (lo + hi)))
        else:
            outside = None
            x_eval = x

    widths = _fractions(raw_widths, k, min_bin_fraction)
    heights = _fractions(raw_heights, k, min_bin_fraction)
    x_knots = _knots(widths, lo, hi)
    y_knots = _knots(heights, lo, hi)
    deriv_shift = float(np.log(np.expm1(1.0 - min_derivative)))
    derivs = ad.add(ad.softplus(ad.add(raw_d_full, deriv_shift)), min_derivative)

    ref = y_knots if inverse else x_knots
    idx = np.clip(np.sum(x_eval.value >= ref.value[:, :k], axis=1) - 1, 0, k - 1)
    sel0 = _onehot(idx, k + 1)
    sel1 = _onehot(idx + 1, k + 1)

    x0 = _gather(x_knots, sel0)
    x1 = _gather(x_knots, sel1)
    y0 = _gather(y_knots, sel0)
    y1 = _gather(y_knots, sel1)
    d0 = _gather(derivs, sel0)
    d1 = _gather(derivs, sel1)
    w_bin = ad.sub(x1, x0)
    h_bin = ad.sub(y1, y0)
    slope = ad.div(h_bin, w_bin)
    curv = ad.sub(ad.add(d1, d0), ad.mul(slope, 2.0))  # d0 + d1 - 2s

    if not inverse:
        xi = ad.div(ad.sub(x_eval, x0), w_bin)
    else:
        ydiff = ad.sub(x_eval, y0)
        qa = ad.add(ad.mul(h_bin, ad.sub(slope, d0)), ad.mul(ydiff, curv))
        qb = ad.sub(ad.mul(h_bin, d0), ad.mul(ydiff, curv))
        qc = ad.mul(ad.mul(slope, ydiff), -1.0)
        disc = ad.sub(ad.mul(qb, qb), ad.mul(ad.mul(qa, qc), 4.0))
        xi = ad.div(ad.mul(qc, 2.0), ad.sub(ad.mul(qb, -1.0), ad.pow_(disc, 0.5)))

    one_m_xi = ad.sub(1.0, xi)
    xi_prod = ad.mul(xi, one_m_xi)
    denom = ad.add(slope, ad.mul(curv, xi_prod))
    deriv_num = ad.add(ad.add(ad.mul(d1, ad.mul(xi, xi)), ad.mul(ad.mul(slope, 2.0), xi_prod)),
                       ad.mul(d0, ad.mul(one_m_xi, one_m_xi)))
    log_deriv = ad.sub(ad.add(ad.mul(ad.log(slope), 2.0), ad.log(deriv_num)),
                       ad.mul(ad.log(denom), 2.0))

    if not inverse:
        numer = ad.mul(h_bin, ad.add(ad.mul(slope, ad.mul(xi, xi)), ad.mul(d0, xi_prod)))
        out = ad.add(y0, ad.div(numer, denom))
        log_det = log_deriv
    else:
        out = ad.add(x0, ad.mul(w_bin, xi))
        log_det = ad.mul(log_deriv, -1.0)

    if circular:
        over = out.value >= np.pi
        if over.any():
            out = ad.sub(out, ad.constant(over * TWO_PI))
    elif outside is not None:
        inside_m = ad.constant((~outside).astype(np.float64))
        outside_m = ad.constant(outside.astype(np.float64))
        out = ad.add(ad.mul(out, inside_m), ad.mul(x, outside_m))
        log_det = ad.mul(log_det, inside_m)
    return out, log_det
