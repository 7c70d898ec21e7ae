"""Composite flow model: base distribution plus an ordered layer stack."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import CapabilityError


class FlowModel:
    """Flow q(x): sample by pushing base draws forward through the layers,
    evaluate log q by pulling points back through the inverses.

    Layer order is forward order (base -> data).  Stochastic layers
    contribute their detailed-balance delta in the forward log-det slot and
    block log_prob.
    """

    def __init__(self, base, layers, target=None):
        self.base = base
        self.layers = list(layers)
        self.target = target

    @property
    def dim(self):
        return self.base.dim

    @property
    def fully_invertible(self):
        return all(l.has_inverse and not l.is_stochastic for l in self.layers)

    def named_parameters(self):
        out = [(f"base.{name}", p) for name, p in self.base.parameters()]
        for i, layer in enumerate(self.layers):
            out.extend((f"layers.{i}.{name}", p) for name, p in layer.parameters())
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def sample(self, n, rng):
        """Draw n samples; returns (x, log_q) Nodes with reparameterized
        gradients flowing back into base and layer parameters."""
        z, log_q = self.base.sample(n, rng)
        for layer in self.layers:
            if layer.is_stochastic:
                z, ld = layer.forward(z, rng)
            else:
                z, ld = layer.forward(z)
            log_q = ad.sub(log_q, ld)
        return z, log_q

    def log_prob(self, x):
        """Exact log q(x); requires every layer to be deterministic and
        two-directional."""
        for i, layer in enumerate(self.layers):
            if layer.is_stochastic or not layer.has_inverse:
                raise CapabilityError(
                    f"log_prob needs invertible deterministic layers; layer {i} "
                    f"({type(layer).__name__}) is not")
        z = ad.as_node(x)
        log_p = None
        for layer in reversed(self.layers):
            z, ld = layer.inverse(z)
            log_p = ld if log_p is None else ad.add(log_p, ld)
        base_lp = self.base.log_prob(z)
        return base_lp if log_p is None else ad.add(base_lp, log_p)

    # -- bulk evaluation helpers (no gradients, bounded memory) --------------

    def sample_values(self, n, rng, chunk=20000):
        """Sample n rows without building a tape; returns (x, log_q) arrays."""
        xs, lqs = [], []
        with ad.no_grad():
            remaining = n
            while remaining > 0:
                m = min(chunk, remaining)
                x, lq = self.sample(m, rng)
                xs.append(x.value)
                lqs.append(lq.value)
                remaining -= m
        return np.concatenate(xs, axis=0), np.concatenate(lqs, axis=0)

    def log_prob_values(self, x, chunk=65536):
        x = np.asarray(x, dtype=np.float64)
        out = np.empty((x.shape[0], 1))
        with ad.no_grad():
            for lo in range(0, x.shape[0], chunk):
                hi = min(lo + chunk, x.shape[0])
                out[lo:hi] = self.log_prob(ad.constant(x[lo:hi])).value
        return out

    # -- losses (thin delegates; see training module) -------------------------

    def reverse_kld(self, n, rng, target=None):
        from .training import reverse_kld
        return reverse_kld(self, target if target is not None else self.target, n, rng)

    def forward_kld(self, data):
        from .training import forward_kld
        return forward_kld(self, data)
