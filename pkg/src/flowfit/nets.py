"""Conditioner networks for flow layers: plain MLPs and masked (MADE-style)
autoregressive nets.

Both use zero-initialized final layers by default so that any flow layer
parameterized by them starts as the identity map.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Param
from .errors import ShapeError

_ACTIVATIONS = {"tanh": ad.tanh, "relu": ad.relu}


def _xavier(rng, fan_in, fan_out, stream):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(fan_in, fan_out, -lim, lim, stream=stream)


class Mlp:
    """Fully connected stack: affine + activation per hidden layer, linear output.

    With zero_init_last (default) the output equals the final bias at init.
    output_scale adds a zero-initialized multiplier on the pre-bias output,
    an extra identity-at-init device for layers that need nonzero final
    weights: out = scale * (h @ W) + b.
    """

    def __init__(self, sizes, rng, activation="tanh", zero_init_last=True,
                 output_scale=False, stream="init"):
        if len(sizes) < 2:
            raise ValueError(f"Mlp needs at least input and output sizes, got {sizes}")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.sizes = [int(s) for s in sizes]
        self.activation = activation
        self.weights = []
        self.biases = []
        n_layers = len(self.sizes) - 1
        for i, (fi, fo) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            last = i == n_layers - 1
            w = np.zeros((fi, fo)) if (last and zero_init_last) else _xavier(rng, fi, fo, stream)
            self.weights.append(Param(w, f"w{i}"))
            self.biases.append(Param(np.zeros((1, fo)), f"b{i}"))
        self.out_scale = Param(np.zeros((1, self.sizes[-1])), "out_scale") if output_scale else None

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append((w.name, w))
            out.append((b.name, b))
        if self.out_scale is not None:
            out.append((self.out_scale.name, self.out_scale))
        return out

    def __call__(self, x):
        h = ad.as_node(x)
        if h.value.shape[1] != self.sizes[0]:
            raise ShapeError("mlp_forward", h.value.shape, (None, self.sizes[0]))
        act = _ACTIVATIONS[self.activation]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = ad.matmul(h, w)
            if i == last and self.out_scale is not None:
                z = ad.mul(z, self.out_scale)
            z = ad.add(z, b)
            h = z if i == last else act(z)
        return h


def made_degrees(dim, hidden_sizes):
    """Degree labels: inputs 1..D, hidden units cycling 1..max(D-1, 1)."""
    degrees = [np.arange(1, dim + 1)]
    span = max(dim - 1, 1)
    for h in hidden_sizes:
        degrees.append(np.arange(h) % span + 1)
    return degrees


def made_masks(dim, hidden_sizes, num_params=1):
    """Binary masks enforcing that output block i sees only inputs < i.

    Masks are (fan_in, fan_out) to match x @ W weights.  Interior masks
    connect unit j to unit k iff degree(k) >= degree(j); the output mask
    connects hidden j to dimension i iff i > degree(j), tiled num_params
    times (output column k*D + (i-1) is the k-th parameter of dimension i).
    """
    degrees = made_degrees(dim, hidden_sizes)
    masks = []
    for prev, cur in zip(degrees[:-1], degrees[1:]):
        masks.append((cur[None, :] >= prev[:, None]).astype(np.float64))
    out_dims = np.arange(1, dim + 1)
    last = degrees[-1]
    out_mask = (out_dims[None, :] > last[:, None]).astype(np.float64)
    masks.append(np.tile(out_mask, (1, num_params)))
    return masks


class MadeNet:
    """Masked autoregressive conditioner emitting num_params values per dim.

    Output layout is parameter-major: columns [k*D, (k+1)*D) hold the k-th
    parameter for all D dimensions.
    """

    def __init__(self, dim, hidden_sizes, num_params, rng, activation="tanh",
                 zero_init_last=True, stream="init"):
        if dim < 1:
            raise ValueError(f"MadeNet needs dim >= 1, got {dim}")
        self.dim = int(dim)
        self.hidden_sizes = [int(h) for h in hidden_sizes]
        self.num_params = int(num_params)
        self.activation = activation
        self.masks = [ad.constant(m) for m in made_masks(dim, self.hidden_sizes, num_params)]
        sizes = [self.dim] + self.hidden_sizes + [self.dim * self.num_params]
        self.weights = []
        self.biases = []
        n_layers = len(sizes) - 1
        for i, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == n_layers - 1
            w = np.zeros((fi, fo)) if (last and zero_init_last) else _xavier(rng, fi, fo, stream)
            self.weights.append(Param(w, f"w{i}"))
            self.biases.append(Param(np.zeros((1, fo)), f"b{i}"))

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append((w.name, w))
            out.append((b.name, b))
        return out

    def param_cols(self, k):
        """Columns of the k-th parameter head (one per dimension)."""
        return list(range(k * self.dim, (k + 1) * self.dim))

    def dim_cols(self, i):
        """Columns of every parameter for 1-based dimension i."""
        return [k * self.dim + (i - 1) for k in range(self.num_params)]

    def __call__(self, x):
        h = ad.as_node(x)
        if h.value.shape[1] != self.dim:
            raise ShapeError("made_forward", h.value.shape, (None, self.dim))
        act = _ACTIVATIONS[self.activation]
        last = len(self.weights) - 1
        for i, (w, b, m) in enumerate(zip(self.weights, self.biases, self.masks)):
            z = ad.add(ad.matmul(h, ad.mul(w, m)), b)
            h = z if i == last else act(z)
        return h
