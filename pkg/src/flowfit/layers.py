"""Invertible flow layers plus the stochastic Metropolis-Hastings layer.

Direction convention: forward maps base to data; log-densities therefore use
inverse passes.  Every deterministic layer returns (output, log|det J|) of
the direction applied, per sample as an n x 1 column.  The MH layer returns
(output, delta) where delta = log pi(z) - log pi(z') occupies the same
algebraic slot as a forward log-determinant in the model's weight accounting.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Param
from .distributions import CIRCULAR, GAUSSIAN
from .errors import CapabilityError, ConfigError, DomainError, ShapeError
from .nets import MadeNet, Mlp
from .splines import rational_quadratic_spline


def _zeros_col(n):
    return ad.constant(np.zeros((n, 1)))


class FlowLayer:
    """Base interface; subclasses override the directions they support."""

    has_forward = True
    has_inverse = True
    is_stochastic = False

    def forward(self, z):
        raise CapabilityError(f"{type(self).__name__} has no forward pass")

    def inverse(self, x):
        raise CapabilityError(f"{type(self).__name__} has no inverse pass")

    def parameters(self):
        return []

    def extra_state(self):
        return None

    def set_extra_state(self, state):
        pass


class ActNorm(FlowLayer):
    """Per-dimension affine layer, initialized from the first inverse batch so
    that batch's latent image has mean 0 and std 1; trains freely afterwards."""

    def __init__(self, dim):
        self.dim = int(dim)
        self.shift = Param(np.zeros((1, dim)), "shift")
        self.log_scale = Param(np.zeros((1, dim)), "log_scale")
        self.initialized = False

    def parameters(self):
        return [("shift", self.shift), ("log_scale", self.log_scale)]

    def extra_state(self):
        return {"initialized": self.initialized}

    def set_extra_state(self, state):
        self.initialized = bool(state["initialized"])

    def forward(self, z):
        z = ad.as_node(z)
        out = ad.add(ad.mul(z, ad.exp(self.log_scale)), self.shift)
        ld = ad.broadcast_rows(ad.sum_(self.log_scale), z.value.shape[0])
        return out, ld

    def inverse(self, x):
        x = ad.as_node(x)
        if not self.initialized:
            std = x.value.std(axis=0, keepdims=True)
            if np.any(std == 0.0):
                raise DomainError("actnorm", "zero per-dim std in init batch")
            self.shift.value = x.value.mean(axis=0, keepdims=True)
            self.log_scale.value = np.log(std)
            self.initialized = True
        out = ad.mul(ad.sub(x, self.shift), ad.exp(ad.mul(self.log_scale, -1.0)))
        ld = ad.broadcast_rows(ad.sum_(ad.mul(self.log_scale, -1.0)), x.value.shape[0])
        return out, ld


class Permute(FlowLayer):
    """Fixed coordinate permutation; log-det 0."""

    def __init__(self, perm):
        perm = list(int(p) for p in perm)
        if sorted(perm) != list(range(len(perm))):
            raise ConfigError("permute.perm", f"not a permutation: {perm}")
        self.perm = perm
        self.inv_perm = list(np.argsort(perm))

    def forward(self, z):
        z = ad.as_node(z)
        return ad.select_cols(z, self.perm), _zeros_col(z.value.shape[0])

    def inverse(self, x):
        x = ad.as_node(x)
        return ad.select_cols(x, self.inv_perm), _zeros_col(x.value.shape[0])


class AffineCoupling(FlowLayer):
    """Real-NVP style coupling: masked dims pass through and drive scale/shift
    heads for the rest; the scale head is bounded by s_max*tanh for stability."""

    def __init__(self, mask, net, s_max=3.0):
        self.mask = np.asarray(mask, dtype=np.float64).reshape(1, -1)
        if not np.all((self.mask == 0) | (self.mask == 1)):
            raise ConfigError("affine_coupling.mask", "mask entries must be 0/1")
        if self.mask.min() == self.mask.max():
            raise ConfigError("affine_coupling.mask", "mask must keep and transform at least one dim each")
        self.dim = self.mask.shape[1]
        if net.sizes[0] != self.dim or net.sizes[-1] != 2 * self.dim:
            raise ConfigError("affine_coupling.net", f"conditioner must map {self.dim} -> {2 * self.dim}")
        self.net = net
        self.s_max = float(s_max)
        self._b = ad.constant(self.mask)
        self._nb = ad.constant(1.0 - self.mask)

    def parameters(self):
        return [(f"net.{name}", p) for name, p in self.net.parameters()]

    def _heads(self, masked):
        st = self.net(masked)
        s = ad.mul(ad.tanh(ad.select_cols(st, list(range(self.dim)))), self.s_max)
        t = ad.select_cols(st, list(range(self.dim, 2 * self.dim)))
        return s, t

    def forward(self, z):
        z = ad.as_node(z)
        zm = ad.mul(z, self._b)
        s, t = self._heads(zm)
        out = ad.add(zm, ad.mul(self._nb, ad.add(ad.mul(z, ad.exp(s)), t)))
        return out, ad.sum_(ad.mul(s, self._nb), axis=1)

    def inverse(self, x):
        x = ad.as_node(x)
        xm = ad.mul(x, self._b)
        s, t = self._heads(xm)
        out = ad.add(xm, ad.mul(self._nb, ad.mul(ad.sub(x, t), ad.exp(ad.mul(s, -1.0)))))
        return out, ad.mul(ad.sum_(ad.mul(s, self._nb), axis=1), -1.0)


class MaskedAffineAutoregressive(FlowLayer):
    """MAF layer: the inverse (data -> latent) is one parallel pass, the
    forward direction reconstructs coordinates sequentially in D passes."""

    def __init__(self, made):
        if made.num_params != 2:
            raise ConfigError("maf.made", "MAF conditioner needs 2 parameter heads (scale, shift)")
        self.made = made
        self.dim = made.dim

    def parameters(self):
        return [(f"made.{name}", p) for name, p in self.made.parameters()]

    def _heads(self, x):
        out = self.made(x)
        s = ad.select_cols(out, self.made.param_cols(0))
        t = ad.select_cols(out, self.made.param_cols(1))
        return s, t

    def inverse(self, x):
        x = ad.as_node(x)
        s, t = self._heads(x)
        u = ad.mul(ad.sub(x, t), ad.exp(ad.mul(s, -1.0)))
        return u, ad.mul(ad.sum_(s, axis=1), -1.0)

    def forward(self, u):
        u = ad.as_node(u)
        n = u.value.shape[0]
        x = u
        log_det = _zeros_col(n)
        for i in range(self.dim):
            s, t = self._heads(x)
            unit = np.zeros((1, self.dim))
            unit[0, i] = 1.0
            e_i = ad.constant(unit)
            keep = ad.constant(1.0 - unit)
            x = ad.add(ad.mul(x, keep), ad.mul(ad.add(ad.mul(u, ad.exp(s)), t), e_i))
            log_det = ad.add(log_det, ad.sum_(ad.mul(s, e_i), axis=1))
        return x, log_det


class SplineCoupling(FlowLayer):
    """Coupling layer whose transformed dims go through monotonic rational-
    quadratic splines; circular dims get the periodic variant on [-pi, pi),
    gaussian dims the linear-tail variant on [-B, B].

    Conditioning dims enter the conditioner net raw (gaussian) or as
    (sin, cos) pairs (circular), so the net never sees the seam.
    """

    def __init__(self, mask, kinds, num_bins, hidden_sizes, rng, tail_bound=None,
                 stream="init"):
        self.mask = np.asarray(mask, dtype=np.int64).ravel()
        if not np.all((self.mask == 0) | (self.mask == 1)):
            raise ConfigError("spline_coupling.mask", "mask entries must be 0/1")
        self.kinds = list(kinds)
        self.dim = len(self.kinds)
        if self.mask.shape[0] != self.dim:
            raise ConfigError("spline_coupling.mask", f"mask length {self.mask.shape[0]} != dim {self.dim}")
        self.cond_dims = [i for i in range(self.dim) if self.mask[i] == 1]
        self.trans_dims = [i for i in range(self.dim) if self.mask[i] == 0]
        if not self.cond_dims or not self.trans_dims:
            raise ConfigError("spline_coupling.mask", "mask must keep and transform at least one dim each")
        self.num_bins = int(num_bins)
        if self.num_bins < 1:
            raise ConfigError("spline_coupling.num_bins", f"need >= 1 bin, got {num_bins}")
        self.tail_bound = None if tail_bound is None else float(tail_bound)
        if any(self.kinds[i] == GAUSSIAN for i in self.trans_dims) and not self.tail_bound:
            raise ConfigError("spline_coupling.tail_bound", "gaussian transformed dims need a tail bound")

        cond_width = sum(2 if self.kinds[i] == CIRCULAR else 1 for i in self.cond_dims)
        self._head_slices = {}
        offset = 0
        for i in self.trans_dims:
            circ = self.kinds[i] == CIRCULAR
            k = self.num_bins
            width = 3 * k if circ else 3 * k + 1
            self._head_slices[i] = (offset, offset + k, offset + 2 * k, offset + width)
            offset += width
        self.net = Mlp([cond_width] + list(hidden_sizes) + [offset], rng,
                       zero_init_last=True, stream=stream)

    def parameters(self):
        return [(f"net.{name}", p) for name, p in self.net.parameters()]

    def _conditioner_input(self, z):
        parts = []
        for i in self.cond_dims:
            col = ad.select_cols(z, [i])
            if self.kinds[i] == CIRCULAR:
                parts.append(ad.sin(col))
                parts.append(ad.cos(col))
            else:
                parts.append(col)
        return parts[0] if len(parts) == 1 else ad.concat_cols(*parts)

    def _apply(self, z, inverse):
        z = ad.as_node(z)
        raw = self.net(self._conditioner_input(z))
        n = z.value.shape[0]
        cols = [None] * self.dim
        log_det = _zeros_col(n)
        for i in range(self.dim):
            col = ad.select_cols(z, [i])
            if i in self._head_slices:
                w0, h0, d0, end = self._head_slices[i]
                circ = self.kinds[i] == CIRCULAR
                out, ld = rational_quadratic_spline(
                    col,
                    ad.select_cols(raw, list(range(w0, h0))),
                    ad.select_cols(raw, list(range(h0, d0))),
                    ad.select_cols(raw, list(range(d0, end))),
                    num_bins=self.num_bins, inverse=inverse, circular=circ,
                    tail_bound=None if circ else self.tail_bound)
                cols[i] = out
                log_det = ad.add(log_det, ld)
            else:
                cols[i] = col
        return ad.concat_cols(*cols), log_det

    def forward(self, z):
        return self._apply(z, inverse=False)

    def inverse(self, x):
        return self._apply(x, inverse=True)


class Planar(FlowLayer):
    """Forward-only planar flow z + u_hat * tanh(w.z + b); u_hat is the
    standard reparameterization keeping w.u_hat >= -1 (invertibility)."""

    has_inverse = False

    def __init__(self, dim, rng, stream="init"):
        self.dim = int(dim)
        lim_w = np.sqrt(2.0 / dim)
        self.w = Param(rng.uniform(1, dim, -lim_w, lim_w, stream=stream), "w")
        self.u = Param(rng.uniform(1, dim, -np.sqrt(2.0), np.sqrt(2.0), stream=stream), "u")
        self.b = Param(np.zeros((1, 1)), "b")

    def parameters(self):
        return [("w", self.w), ("u", self.u), ("b", self.b)]

    def forward(self, z):
        z = ad.as_node(z)
        lin = ad.add(ad.sum_(ad.mul(z, self.w), axis=1), self.b)
        wu = ad.sum_(ad.mul(self.w, self.u))
        coef = ad.div(ad.sub(ad.sub(ad.softplus(wu), 1.0), wu), ad.sum_(ad.mul(self.w, self.w)))
        u_hat = ad.add(self.u, ad.mul(self.w, coef))
        h = ad.tanh(lin)
        out = ad.add(z, ad.mul(u_hat, h))
        w_uhat = ad.sum_(ad.mul(self.w, u_hat))
        ld = ad.log(ad.add(ad.mul(ad.sub(1.0, ad.mul(h, h)), w_uhat), 1.0))
        return out, ld


class Radial(FlowLayer):
    """Forward-only radial flow around a learned center; beta is
    reparameterized so 1 + beta/(alpha+r) stays positive."""

    has_inverse = False

    def __init__(self, dim, rng, stream="init"):
        self.dim = int(dim)
        self.z0 = Param(rng.normal(1, dim, stream=stream), "z0")
        self.log_alpha = Param(np.zeros((1, 1)), "log_alpha")
        # softplus(beta_raw) - alpha = 0 at init: the layer starts as identity
        self.beta_raw = Param(np.full((1, 1), np.log(np.expm1(1.0))), "beta_raw")

    def parameters(self):
        return [("z0", self.z0), ("log_alpha", self.log_alpha), ("beta_raw", self.beta_raw)]

    def forward(self, z):
        z = ad.as_node(z)
        alpha = ad.exp(self.log_alpha)
        beta = ad.sub(ad.softplus(self.beta_raw), alpha)
        dz = ad.sub(z, self.z0)
        r = ad.pow_(ad.sum_(ad.mul(dz, dz), axis=1), 0.5)
        a_plus_r = ad.add(alpha, r)
        bh = ad.div(beta, a_plus_r)
        out = ad.add(z, ad.mul(bh, dz))
        term2 = ad.add(ad.mul(ad.mul(beta, alpha), ad.pow_(a_plus_r, -2.0)), 1.0)
        ld = ad.add(ad.mul(ad.log(ad.add(bh, 1.0)), float(self.dim - 1)), ad.log(term2))
        return out, ld


class MetropolisHastings(FlowLayer):
    """Gaussian random-walk MH kernel targeting the geometric interpolation
    pi_lambda = q_ref^(1-lambda) * p_target^lambda.

    Returns delta = log pi(z) - log pi(z'), the detailed-balance backward/
    forward kernel log-ratio, which the model subtracts like a forward
    log-det.  The accept decision itself is treated as non-differentiable;
    gradients flow through delta along the realized path.
    """

    has_inverse = False
    is_stochastic = True

    def __init__(self, target_log_prob, reference_log_prob, lam=1.0, sigma=0.1, steps=1):
        if not 0.0 <= lam <= 1.0:
            raise ConfigError("metropolis_hastings.lambda", f"need 0 <= lambda <= 1, got {lam}")
        if sigma <= 0.0:
            raise ConfigError("metropolis_hastings.sigma", f"need sigma > 0, got {sigma}")
        if steps < 1:
            raise ConfigError("metropolis_hastings.steps", f"need steps >= 1, got {steps}")
        self.target_log_prob = target_log_prob
        self.reference_log_prob = reference_log_prob
        self.lam = float(lam)
        self.sigma = float(sigma)
        self.steps = int(steps)

    def _log_pi(self, z):
        if self.lam == 1.0:
            return self.target_log_prob(z)
        if self.lam == 0.0:
            return self.reference_log_prob(z)
        return ad.add(ad.mul(self.reference_log_prob(z), 1.0 - self.lam),
                      ad.mul(self.target_log_prob(z), self.lam))

    def forward(self, z, rng):
        z = ad.as_node(z)
        n, d = z.value.shape
        delta = _zeros_col(n)
        log_pi_cur = self._log_pi(z)
        for _ in range(self.steps):
            step = self.sigma * rng.normal(n, d, stream="mcmc")
            proposal = ad.add(z, ad.constant(step))
            log_pi_prop = self._log_pi(proposal)
            u = 1.0 - rng.uniform(n, 1, stream="mcmc")  # (0, 1], log-safe
            accept = (np.log(u) < (log_pi_prop.value - log_pi_cur.value)).astype(np.float64)
            acc = ad.constant(accept)
            rej = ad.constant(1.0 - accept)
            delta = ad.add(delta, ad.mul(ad.sub(log_pi_cur, log_pi_prop), acc))
            z = ad.add(ad.mul(z, rej), ad.mul(proposal, acc))
            log_pi_cur = ad.add(ad.mul(log_pi_cur, rej), ad.mul(log_pi_prop, acc))
        return z, delta
