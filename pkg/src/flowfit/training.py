"""Losses, Adam optimizer, training loop, and evaluation metrics."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import TrainingError
from .rng import Rng


def reverse_kld(model, target, n, rng):
    """Pathwise estimate of KL(q || p~): mean(log q(x) - log p~(x)) over n
    model samples; differentiable through the reparameterized draw."""
    if n < 1:
        raise TrainingError(f"reverse_kld needs n >= 1, got {n}")
    x, log_q = model.sample(n, rng)
    return ad.mean_(ad.sub(log_q, target.log_prob(x)))


def forward_kld(model, data):
    """Negative mean log-likelihood of data under the model (forward KL up to
    the entropy constant of the data distribution)."""
    data = np.asarray(data, dtype=np.float64)
    return ad.mul(ad.mean_(model.log_prob(ad.constant(data))), -1.0)


class Adam:
    """Bias-corrected adaptive-moment optimizer with optional global-norm
    gradient clipping applied before the moment updates."""

    def __init__(self, named_params, lr=5e-4, beta1=0.9, beta2=0.999, eps=1e-8,
                 clip_norm=10.0):
        self.named_params = list(named_params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.clip_norm = None if clip_norm is None else float(clip_norm)
        self.step_count = 0
        self.m = {name: np.zeros_like(p.value) for name, p in self.named_params}
        self.v = {name: np.zeros_like(p.value) for name, p in self.named_params}

    def clip_gradients(self, grads):
        """Scale the whole gradient so its global norm is min(norm, clip)."""
        if self.clip_norm is None:
            return grads
        total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        if total > self.clip_norm:
            factor = self.clip_norm / total
            grads = {p: g * factor for p, g in grads.items()}
        return grads

    def step(self, grads):
        """grads: map Param -> gradient array (as returned by backward)."""
        for name, p in self.named_params:
            if not np.all(np.isfinite(grads[p])):
                raise TrainingError(f"non-finite gradient for parameter {name!r}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.named_params:
            g = grads[p]
            m = self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            p.value = p.value - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_dict(self):
        return {
            "step": self.step_count,
            "m": {name: self.m[name].tolist() for name, _ in self.named_params},
            "v": {name: self.v[name].tolist() for name, _ in self.named_params},
        }

    def load_state_dict(self, state):
        self.step_count = int(state["step"])
        for name, p in self.named_params:
            self.m[name] = np.asarray(state["m"][name], dtype=np.float64).reshape(p.value.shape)
            self.v[name] = np.asarray(state["v"][name], dtype=np.float64).reshape(p.value.shape)


@dataclass
class TrainReport:
    """Per-iteration losses plus the final evaluation block."""

    losses: list = field(default_factory=list)
    iterations: int = 0
    wall_time: float = 0.0
    kl_estimate: float | None = None
    ess_fraction: float | None = None


def train_loop(model, target_or_data, config, rng=None, optimizer=None,
               start_iteration=0, on_iteration=None):
    """Run the configured number of optimization steps.

    config needs: loss ("reverse_kld" | "forward_kld"), iterations,
    batch_size, lr, clip, seed, and optionally eval_samples.  Deterministic
    given seed; a non-finite loss or gradient aborts with the parameters
    still at their last finite state.
    """
    loss_kind = config["loss"]
    iterations = int(config["iterations"])
    batch_size = int(config["batch_size"])
    if loss_kind not in ("reverse_kld", "forward_kld"):
        raise TrainingError(f"unknown loss {loss_kind!r}")
    if batch_size < 1 or iterations < 0:
        raise TrainingError(f"invalid iterations/batch_size: {iterations}/{batch_size}")

    rng = rng if rng is not None else Rng(int(config["seed"]))
    named = model.named_parameters()
    params = [p for _, p in named]
    if optimizer is None:
        optimizer = Adam(named, lr=float(config["lr"]), clip_norm=config.get("clip", 10.0))

    if loss_kind == "forward_kld":
        data = np.asarray(target_or_data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != model.dim:
            raise TrainingError(f"forward_kld data must be n x {model.dim}")

    report = TrainReport()
    start = time.monotonic()
    for it in range(start_iteration, iterations):
        if loss_kind == "reverse_kld":
            loss = reverse_kld(model, target_or_data, batch_size, rng)
        else:
            idx = (rng.uniform(batch_size, 1, 0.0, 1.0, stream="data")[:, 0] * data.shape[0]).astype(np.intp)
            loss = forward_kld(model, data[idx])
        loss_val = loss.item()
        if not np.isfinite(loss_val):
            raise TrainingError(f"non-finite loss {loss_val} at iteration {it}")
        grads = ad.backward(loss, params=params)
        grads = optimizer.clip_gradients(grads)
        optimizer.step(grads)
        report.losses.append(loss_val)
        if on_iteration is not None:
            on_iteration(it, loss_val)
    report.iterations = len(report.losses)

    eval_n = int(config.get("eval_samples", 10000))
    if loss_kind == "reverse_kld" and eval_n > 0:
        metrics = eval_metrics(model, target_or_data, eval_n, rng)
        report.kl_estimate = metrics["kl_estimate"]
        report.ess_fraction = metrics["ess_fraction"]
    report.wall_time = time.monotonic() - start
    return report


def eval_metrics(model, target, n, rng, chunk=20000):
    """Sampled divergence diagnostics.

    kl_estimate = mean(log q - log p) over n model samples (exact reverse KL
    when the target is normalized); ess_fraction = (sum w)^2 / (n sum w^2)
    with self-normalized importance weights w = p~(x)/q(x), computed under a
    max-log shift for stability.
    """
    x, log_q = model.sample_values(n, rng, chunk=chunk)
    log_p = np.empty_like(log_q)
    with ad.no_grad():
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            log_p[lo:hi] = target.log_prob(ad.constant(x[lo:hi])).value
    if target.exact_normalizer is not None and target.exact_normalizer != 1.0:
        log_p = log_p - np.log(target.exact_normalizer)
    kl = float(np.mean(log_q - log_p))
    log_w = (log_p - log_q).ravel()
    w = np.exp(log_w - log_w.max())
    ess = float(w.sum() ** 2 / (n * np.sum(w * w)))
    return {"kl_estimate": kl, "ess_fraction": ess, "n": int(n)}
