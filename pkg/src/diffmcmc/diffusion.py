"""Noise schedule, forward corruption, training loop and ancestral sampler."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import adgraph as ag
from . import models as mdl


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step constants, index 0 is the identity padding (alpha_bar_0 = 1)."""

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_tilde: np.ndarray
    sigma: np.ndarray
    name: str = ""


def cosine_schedule(T: int = 100, offset: float = 0.008, max_beta: float = 0.999) -> NoiseSchedule:
    """Cosine alpha_bar profile with the usual beta cap.

    beta is derived from consecutive ratios of the squared-cosine profile and
    clipped at max_beta; alpha_bar is then rebuilt as the running product so
    the schedule identities hold exactly even where the cap bites.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    steps = np.arange(T + 1, dtype=np.float64)
    f = np.cos((steps / T + offset) / (1.0 + offset) * (np.pi / 2.0)) ** 2
    profile = f / f[0]
    beta = np.zeros(T + 1)
    beta[1:] = np.minimum(1.0 - profile[1:] / profile[:-1], max_beta)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    sigma = np.sqrt(1.0 - alpha_bar)
    beta_tilde = np.zeros(T + 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        beta_tilde[1:] = beta[1:] * (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:])
    beta_tilde[1] = 0.0  # alpha_bar_0 = 1 makes the numerator vanish
    return NoiseSchedule(T, beta, alpha, alpha_bar, beta_tilde, sigma, name=f"cosine-{T}")


def q_sample(x0, t, noise, schedule: NoiseSchedule):
    """Closed-form forward corruption sqrt(abar_t) x0 + sqrt(1-abar_t) noise."""
    x0 = np.asarray(x0, dtype=np.float64)
    t = np.asarray(t, dtype=np.intp)
    root_abar = np.sqrt(schedule.alpha_bar[t])
    sig = schedule.sigma[t]
    if x0.ndim == 2:
        root_abar = root_abar[..., None] if root_abar.ndim else root_abar
        sig = sig[..., None] if sig.ndim else sig
    return root_abar * x0 + sig * np.asarray(noise, dtype=np.float64)


@dataclass
class TrainConfig:
    dataset_size: int = 50_000
    batch_size: int = 256
    steps: int = 10_000
    learning_rate: float = 1e-3
    lr_schedule: str = "cosine"  # anneal to 0; constant lr leaves visible endpoint noise
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if min(self.dataset_size, self.batch_size, self.steps) <= 0 or self.learning_rate <= 0:
            raise ValueError("TrainConfig fields must be positive")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")

    def lr_at(self, step: int) -> float:
        if self.lr_schedule == "constant":
            return self.learning_rate
        return self.learning_rate * 0.5 * (1.0 + np.cos(np.pi * (step - 1) / self.steps))


def loss_graph(
    model: mdl.DiffusionModel,
    x_t: np.ndarray,
    t: np.ndarray,
    eps: np.ndarray,
    schedule: NoiseSchedule,
    pnodes: dict[str, ag.Node] | None = None,
) -> tuple[ag.Node, dict[str, ag.Node]]:
    """Batch MSE between drawn noise and the model's noise prediction.

    Mean is over the batch, the squared error sums over the two coordinates.
    """
    if pnodes is None:
        pnodes = mdl.param_nodes(model)
    x_node = ag.input_node(x_t)
    if model.parameterisation == mdl.SCORE:
        pred = mdl.network_graph(model.arch, pnodes, x_node, t)
    else:
        total_energy = ag.reduce_sum(mdl.energy_graph(model.arch, pnodes, x_node, t))
        grad_x = ag.input_gradient_node(total_energy, x_node)
        pred = ag.mul(grad_x, ag.constant(schedule.sigma[t][:, None]))
    resid = ag.sub(ag.constant(eps), pred)
    loss = ag.scale(ag.sum_of_squares(resid), 1.0 / x_t.shape[0])
    return loss, pnodes


def _draw_batch(x0: np.ndarray, rng: np.random.Generator, schedule: NoiseSchedule):
    n = x0.shape[0]
    t = rng.integers(1, schedule.T + 1, size=n)
    eps = rng.standard_normal((n, x0.shape[1]))
    return q_sample(x0, t, eps, schedule), t, eps


def diffusion_loss(model, x0, rng: np.random.Generator, schedule: NoiseSchedule) -> float:
    """Monte-Carlo diffusion loss on one batch; `model` may be a DiffusionModel
    or a plain callable (x_t, t) -> eps prediction (test stubs)."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.size == 0:
        raise ValueError("empty batch")
    x_t, t, eps = _draw_batch(x0, rng, schedule)
    if isinstance(model, mdl.DiffusionModel):
        node, _ = loss_graph(model, x_t, t, eps, schedule)
        return float(node.value)
    pred = model(x_t, t)
    return float(np.mean(((eps - pred) ** 2).sum(axis=-1)))


class TrainingDiverged(RuntimeError):
    pass


def train_model(
    model: mdl.DiffusionModel,
    dataset: np.ndarray,
    config: TrainConfig,
    schedule: NoiseSchedule,
    trace_every: int = 1,
) -> tuple[mdl.DiffusionModel, list[tuple[int, float]]]:
    """Adam on the diffusion loss; returns a new model and the loss trace.

    Deterministic for a fixed config seed.  Energy models backpropagate
    through the input-gradient node, so their parameter updates see the full
    second-order path.
    """
    dataset = np.asarray(dataset, dtype=np.float64)
    if dataset.size == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    params = {k: v.copy() for k, v in model.params.items()}
    names = list(mdl.param_shapes(model.arch))
    m1 = {k: np.zeros_like(params[k]) for k in names}
    m2 = {k: np.zeros_like(params[k]) for k in names}
    b1, b2, eps_adam = config.adam_beta1, config.adam_beta2, config.adam_eps
    trace: list[tuple[int, float]] = []
    work = mdl.DiffusionModel(params, model.parameterisation, model.arch)
    for step in range(1, config.steps + 1):
        idx = rng.integers(0, dataset.shape[0], size=config.batch_size)
        x_t, t, eps = _draw_batch(dataset[idx], rng, schedule)
        node, pnodes = loss_graph(work, x_t, t, eps, schedule)
        loss = float(node.value)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss {loss} at step {step}")
        grads = ag.reverse_gradients(node, [pnodes[k] for k in names])
        bc1 = 1.0 - b1**step
        bc2 = 1.0 - b2**step
        lr = config.lr_at(step)
        for k in names:
            g = grads[pnodes[k]]
            m1[k] = b1 * m1[k] + (1.0 - b1) * g
            m2[k] = b2 * m2[k] + (1.0 - b2) * g * g
            params[k] -= lr * (m1[k] / bc1) / (np.sqrt(m2[k] / bc2) + eps_adam)
        if step % trace_every == 0 or step == config.steps:
            trace.append((step, loss))
    return work, trace


# ---------------------------------------------------------------------------
# reverse process


@dataclass
class SampleBatch:
    samples: np.ndarray
    origin: str = ""
    seed: int | None = None


def reverse_step(eps_fn: Callable, x_t, t: int, noise, schedule: NoiseSchedule) -> np.ndarray:
    """One ancestral step; the t = 1 step is deterministic (noise dropped)."""
    if not 1 <= t <= schedule.T:
        raise ValueError(f"step index {t} out of range 1..{schedule.T}")
    x_t = np.asarray(x_t, dtype=np.float64)
    eps = np.asarray(eps_fn(x_t, t), dtype=np.float64)
    mean = (x_t - schedule.beta[t] / schedule.sigma[t] * eps) / np.sqrt(schedule.alpha[t])
    if t == 1:
        return mean
    return mean + np.sqrt(schedule.beta_tilde[t]) * np.asarray(noise, dtype=np.float64)


def reverse_sample(
    eps_fn: Callable,
    n: int,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    hook: Callable | None = None,
    dim: int = 2,
    origin: str = "reverse",
) -> SampleBatch:
    """Ancestral chain from x_T ~ N(0, I) down to x_0.

    After each step the hook (if given) receives (batch, t-1) and may return
    a replacement batch; this is where the MCMC phase plugs in.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x = rng.standard_normal((n, dim))
    for t in range(schedule.T, 0, -1):
        noise = rng.standard_normal((n, dim)) if t > 1 else 0.0
        x = reverse_step(eps_fn, x, t, noise, schedule)
        if hook is not None:
            replaced = hook(x, t - 1)
            if replaced is not None:
                x = np.asarray(replaced, dtype=np.float64)
    return SampleBatch(x, origin=origin)
