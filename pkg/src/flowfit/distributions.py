"""Base distributions over mixed unbounded/circular coordinates, and the
von Mises log density used by circular targets.

Circular coordinates live on [-pi, pi) everywhere in this package.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Param
from .errors import DomainError

LOG_TWO_PI = float(np.log(2.0 * np.pi))
GAUSSIAN = "gaussian"
CIRCULAR = "circular"


def log_bessel_i0(kappa):
    """log I0(kappa) by the power series sum_k (kappa^2/4)^k / (k!)^2.

    Terms are added until one falls below 1e-17 of the running sum; fine for
    the concentrations used here (kappa <= ~30 stays well inside float64).
    """
    kappa = float(kappa)
    if kappa < 0:
        raise DomainError("log_bessel_i0", f"concentration must be >= 0, got {kappa}")
    q = kappa * kappa / 4.0
    term = 1.0
    total = 1.0
    k = 1
    while term > 1e-17 * total:
        term *= q / (k * k)
        total += term
        k += 1
    return float(np.log(total))


def von_mises_log_prob(phi, mu, kappa):
    """log M(phi | mu, kappa) = kappa*cos(phi - mu) - log(2*pi*I0(kappa)).

    phi and mu may be Nodes or arrays (broadcasting elementwise); kappa is a
    fixed scalar.  Periodic by construction, no angle reduction needed.
    """
    kappa = float(kappa)
    if kappa < 0:
        raise DomainError("von_mises_log_prob", f"concentration must be >= 0, got {kappa}")
    phi = ad.as_node(phi)
    mu = ad.as_node(mu)
    log_norm = LOG_TWO_PI + log_bessel_i0(kappa)
    return ad.sub(ad.mul(ad.cos(ad.sub(phi, mu)), kappa), log_norm)


class DiagGaussian:
    """Diagonal Gaussian with (optionally trainable) location and log-scale."""

    def __init__(self, dim, loc=None, log_scale=None, trainable=True):
        self.dim = int(dim)
        self.trainable = bool(trainable)
        loc = np.zeros((1, self.dim)) if loc is None else np.asarray(loc, dtype=np.float64).reshape(1, self.dim)
        log_scale = np.zeros((1, self.dim)) if log_scale is None else np.asarray(log_scale, dtype=np.float64).reshape(1, self.dim)
        if trainable:
            self.loc = Param(loc, "loc")
            self.log_scale = Param(log_scale, "log_scale")
        else:
            self.loc = ad.constant(loc)
            self.log_scale = ad.constant(log_scale)

    @property
    def kinds(self):
        return [GAUSSIAN] * self.dim

    def parameters(self):
        return [("loc", self.loc), ("log_scale", self.log_scale)] if self.trainable else []

    def sample(self, n, rng, stream="base"):
        """Reparameterized draw: loc + exp(log_scale) * eps, plus its log density."""
        eps = ad.constant(rng.normal(n, self.dim, stream=stream))
        z = ad.add(self.loc, ad.mul(ad.exp(self.log_scale), eps))
        return z, self.log_prob(z)

    def log_prob(self, x):
        x = ad.as_node(x)
        u = ad.mul(ad.sub(x, self.loc), ad.exp(ad.sub(0.0, self.log_scale)))
        per_dim = ad.sub(ad.mul(ad.mul(u, u), -0.5), ad.add(self.log_scale, 0.5 * LOG_TWO_PI))
        return ad.sum_(per_dim, axis=1)


class UniformGaussianMix:
    """Mixed base: standard-normal on gaussian dims, uniform [-pi, pi) on
    circular dims.  Not trainable; the natural reference for cylinder-like
    targets."""

    def __init__(self, kinds):
        kinds = list(kinds)
        for k in kinds:
            if k not in (GAUSSIAN, CIRCULAR):
                raise ValueError(f"unknown coordinate kind {k!r}")
        self.dim = len(kinds)
        self.kinds = kinds
        self._gauss_idx = [i for i, k in enumerate(kinds) if k == GAUSSIAN]
        self._circ_count = self.dim - len(self._gauss_idx)

    def parameters(self):
        return []

    def sample(self, n, rng, stream="base"):
        cols = []
        for kind in self.kinds:
            if kind == GAUSSIAN:
                cols.append(rng.normal(n, 1, stream=stream))
            else:
                cols.append(rng.uniform(n, 1, -np.pi, np.pi, stream=stream))
        z = ad.constant(np.concatenate(cols, axis=1))
        return z, self.log_prob(z)

    def log_prob(self, x):
        """Sum of per-dim terms; circular dims contribute -log(2*pi) regardless
        of value (interpreted modulo 2*pi)."""
        x = ad.as_node(x)
        const = -self._circ_count * LOG_TWO_PI
        if self._gauss_idx:
            g = ad.select_cols(x, self._gauss_idx)
            per_dim = ad.sub(ad.mul(ad.mul(g, g), -0.5), 0.5 * LOG_TWO_PI)
            return ad.add(ad.sum_(per_dim, axis=1), const)
        # no gaussian dims: constant per row, kept on the graph for shape
        return ad.add(ad.mul(ad.sum_(x, axis=1), 0.0), const)
