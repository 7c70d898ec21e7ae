"""Built-in target densities for training and evaluation.

The cylinder target is the headline: a standard normal on the unbounded
coordinate and a von Mises conditional on the circular one whose mean
direction rotates with x.  The two auxiliary 2D targets are plain Gaussian
mixtures used by multimodality and MCMC tests.  All three are exactly
normalized (normalizer 1).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .distributions import CIRCULAR, GAUSSIAN, LOG_TWO_PI, von_mises_log_prob
from .errors import ConfigError


class TargetDensity:
    """Named unnormalized log density with per-dim coordinate kinds."""

    def __init__(self, name, kinds, log_prob_fn, exact_normalizer=None, params=None):
        self.name = name
        self.kinds = list(kinds)
        self.dim = len(self.kinds)
        self._log_prob_fn = log_prob_fn
        self.exact_normalizer = exact_normalizer
        self.params = dict(params or {})

    def log_prob(self, x):
        x = ad.as_node(x)
        if x.value.shape[1] != self.dim:
            raise ConfigError("target", f"{self.name} expects dim {self.dim}, got {x.value.shape[1]}")
        return self._log_prob_fn(x)


def cylinder_log_prob(x, phi, kappa=1.0, slope=3.0):
    """log p(x, phi) = log N(x|0,1) + log M(phi | slope*x, kappa)."""
    x = ad.as_node(x)
    phi = ad.as_node(phi)
    log_px = ad.sub(ad.mul(ad.mul(x, x), -0.5), 0.5 * LOG_TWO_PI)
    return ad.add(log_px, von_mises_log_prob(phi, ad.mul(x, slope), kappa))


def _log_sum_exp_cols(cols):
    """log(sum_j exp(col_j)) with a detached per-row max shift."""
    stacked = ad.concat_cols(*cols)
    shift = ad.constant(stacked.value.max(axis=1, keepdims=True))
    return ad.add(ad.log(ad.sum_(ad.exp(ad.sub(stacked, shift)), axis=1)), shift)


def _gaussian_mixture_log_prob(x, centers, std, weights):
    comps = []
    var = std * std
    for c, w in zip(centers, weights):
        d = ad.sub(x, ad.constant(np.asarray(c, dtype=np.float64)[None, :]))
        sq = ad.sum_(ad.mul(d, d), axis=1)
        comps.append(ad.add(ad.mul(sq, -0.5 / var),
                            float(np.log(w) - LOG_TWO_PI - np.log(var))))
    return _log_sum_exp_cols(comps)


def make_cylinder(kappa=1.0, slope=3.0):
    if kappa < 0:
        raise ConfigError("target.params.kappa", f"need kappa >= 0, got {kappa}")

    def log_prob(x):
        return cylinder_log_prob(ad.select_cols(x, [0]), ad.select_cols(x, [1]),
                                 kappa=kappa, slope=slope)

    return TargetDensity("cylinder", [GAUSSIAN, CIRCULAR], log_prob,
                         exact_normalizer=1.0, params={"kappa": kappa, "slope": slope})


def make_ring8(radius=2.5, std=0.3):
    angles = np.arange(8) * (2.0 * np.pi / 8.0)
    centers = [(radius * np.cos(a), radius * np.sin(a)) for a in angles]
    weights = [1.0 / 8.0] * 8

    def log_prob(x):
        return _gaussian_mixture_log_prob(x, centers, std, weights)

    return TargetDensity("ring8", [GAUSSIAN, GAUSSIAN], log_prob,
                         exact_normalizer=1.0, params={"radius": radius, "std": std})


def make_two_modes(offset=2.0):
    centers = [(offset, 0.0), (-offset, 0.0)]

    def log_prob(x):
        return _gaussian_mixture_log_prob(x, centers, 1.0, [0.5, 0.5])

    return TargetDensity("two_modes", [GAUSSIAN, GAUSSIAN], log_prob,
                         exact_normalizer=1.0, params={"offset": offset})


TARGETS = {
    "cylinder": make_cylinder,
    "ring8": make_ring8,
    "two_modes": make_two_modes,
}


def make_target(name, params=None):
    try:
        factory = TARGETS[name]
    except KeyError:
        raise ConfigError("target.name", f"unknown target {name!r} (have {sorted(TARGETS)})") from None
    return factory(**(params or {}))
