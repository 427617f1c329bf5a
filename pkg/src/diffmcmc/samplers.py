"""MCMC phase for the reverse chain: U-LA, MALA, U-HMC and HMC.

The Metropolis acceptance uses an energy difference that is either read off
an energy-parameterised model directly, or estimated for score models by
trapezoidal line integration of the score field along a straight line (or,
for HMC, along the polyline through the leapfrog positions, whose score
evaluations are reused at no extra cost).

All steps are batched over particles: positions are (n, 2) arrays and every
particle carries its own accept/reject decision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np


class ScoreField:
    """Score field (x, t) -> (n, 2) with an optional exact energy (x, t) -> (n,).

    Invocations are counted (`calls`, `rows`) so tests can assert how many
    evaluations a sampler spends on its acceptance step.
    """

    def __init__(self, score_fn: Callable, energy_fn: Callable | None = None):
        self._score_fn = score_fn
        self._energy_fn = energy_fn
        self.calls = 0
        self.rows = 0
        self.energy_calls = 0

    @property
    def has_energy(self) -> bool:
        return self._energy_fn is not None

    def score(self, x: np.ndarray, t: int) -> np.ndarray:
        self.calls += 1
        self.rows += x.shape[0] if x.ndim > 1 else 1
        return np.asarray(self._score_fn(x, t), dtype=np.float64)

    def energy(self, x: np.ndarray, t: int) -> np.ndarray:
        if self._energy_fn is None:
            raise ValueError("field has no direct energy; use a line-integral estimator")
        self.energy_calls += 1
        return np.asarray(self._energy_fn(x, t), dtype=np.float64)


@dataclass(frozen=True)
class EnergyDiffEstimator:
    """How to estimate log p(x_hat) - log p(x_cur) for the acceptance test."""

    mode: str = "line"  # "direct" | "line"
    k: int = 2  # points on the trapezoid mesh, endpoints included
    path: str = "line"  # "line" | "curve" ("curve" only valid inside HMC)

    def __post_init__(self):
        if self.mode not in ("direct", "line"):
            raise ValueError(f"unknown estimator mode {self.mode!r}")
        if self.path not in ("line", "curve"):
            raise ValueError(f"unknown path kind {self.path!r}")
        if self.k < 2:
            raise ValueError("estimator needs at least 2 path points")


@dataclass
class McmcConfig:
    """Per-step MCMC parameters (defaults follow the 2D experiment)."""

    steps_per_t: int = 10
    leapfrogs: int = 3
    hmc_step_size: float = 0.03
    damping: float = 0.5
    la_step_size2: float = 0.001  # variance scale delta^2 of the Langevin kernel
    mcmc_at_t0: bool = True

    def __post_init__(self):
        if self.steps_per_t < 0 or self.leapfrogs < 1:
            raise ValueError("steps_per_t must be >= 0 and leapfrogs >= 1")
        if self.hmc_step_size <= 0 or self.la_step_size2 <= 0:
            raise ValueError("step sizes must be positive")
        if not 0.0 <= self.damping <= 1.0:
            raise ValueError("damping must lie in [0, 1]")


# ---------------------------------------------------------------------------
# paths and line integration


def straight_line_path(a, b, k: int) -> np.ndarray:
    """k equally spaced points from a to b inclusive; leading axis is the mesh."""
    if k < 2:
        raise ValueError("a path needs at least 2 points")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    w = np.linspace(0.0, 1.0, k).reshape((k,) + (1,) * a.ndim)
    return (1.0 - w) * a + w * b


def trapezoid_line_integral(values: np.ndarray, path: np.ndarray) -> np.ndarray:
    """Sum of 0.5 (v_k + v_{k+1}) . (p_{k+1} - p_k) over the mesh segments."""
    if path.shape[0] < 2:
        raise ValueError("a path needs at least 2 points")
    mids = 0.5 * (values[:-1] + values[1:])
    deltas = path[1:] - path[:-1]
    return (mids * deltas).sum(axis=(0, -1))


def line_energy_diff(field: ScoreField, path: np.ndarray, t: int) -> np.ndarray:
    """Trapezoidal estimate of log p(end) - log p(start) along the path.

    All mesh points go through the field in a single stacked evaluation.
    """
    path = np.asarray(path, dtype=np.float64)
    if path.shape[0] < 2:
        raise ValueError("a path needs at least 2 points")
    flat = path.reshape(-1, path.shape[-1])
    values = field.score(flat, t).reshape(path.shape)
    return trapezoid_line_integral(values, path)


def _line_diff_with_endpoints(
    field: ScoreField,
    path: np.ndarray,
    t: int,
    score_start: np.ndarray,
    score_end: np.ndarray,
) -> np.ndarray:
    """Line integral reusing known endpoint scores; only interior points cost."""
    k = path.shape[0]
    values = np.empty_like(path)
    values[0] = score_start
    values[-1] = score_end
    if k > 2:
        interior = path[1:-1].reshape(-1, path.shape[-1])
        values[1:-1] = field.score(interior, t).reshape(path[1:-1].shape)
    return trapezoid_line_integral(values, path)


# ---------------------------------------------------------------------------
# Langevin


def ula_step(field: ScoreField, x, t: int, step2: float, rng: np.random.Generator) -> np.ndarray:
    """Unadjusted Langevin update x + (delta^2/2) score + delta xi."""
    if step2 <= 0:
        raise ValueError("step2 must be positive")
    x = np.asarray(x, dtype=np.float64)
    xi = rng.standard_normal(x.shape)
    return x + 0.5 * step2 * field.score(x, t) + np.sqrt(step2) * xi


class MalaResult(NamedTuple):
    x: np.ndarray
    accepted: np.ndarray
    log_accept: np.ndarray
    score: np.ndarray
    energy: np.ndarray | None


def mala_step(
    field: ScoreField,
    estimator: EnergyDiffEstimator,
    x,
    t: int,
    step2: float,
    rng: np.random.Generator,
    score_x: np.ndarray | None = None,
    energy_x: np.ndarray | None = None,
) -> MalaResult:
    """Langevin proposal plus the Metropolis test.

    The energy difference comes from the estimator (direct energies or a
    straight-line trapezoid); the Gaussian kernel ratio is exact.  Rejected
    particles keep their position, score and energy caches.
    """
    if estimator.path == "curve":
        raise ValueError("curve paths are only valid inside HMC")
    x = np.asarray(x, dtype=np.float64)
    if score_x is None:
        score_x = field.score(x, t)
    xi = rng.standard_normal(x.shape)
    delta = np.sqrt(step2)
    x_hat = x + 0.5 * step2 * score_x + delta * xi
    score_hat = field.score(x_hat, t)

    energy_hat = None
    if estimator.mode == "direct":
        if energy_x is None:
            energy_x = field.energy(x, t)
        energy_hat = field.energy(x_hat, t)
        f = energy_x - energy_hat
    else:
        path = straight_line_path(x, x_hat, estimator.k)
        f = _line_diff_with_endpoints(field, path, t, score_x, score_hat)

    log_q_rev = -((x - x_hat - 0.5 * step2 * score_hat) ** 2).sum(axis=-1) / (2.0 * step2)
    log_q_fwd = -((x_hat - x - 0.5 * step2 * score_x) ** 2).sum(axis=-1) / (2.0 * step2)
    log_accept = f + log_q_rev - log_q_fwd
    accepted = np.log(rng.uniform(size=x.shape[0])) < log_accept

    keep = accepted[:, None]
    x_new = np.where(keep, x_hat, x)
    score_new = np.where(keep, score_hat, score_x)
    energy_new = None
    if estimator.mode == "direct":
        energy_new = np.where(accepted, energy_hat, energy_x)
    return MalaResult(x_new, accepted, log_accept, score_new, energy_new)


# ---------------------------------------------------------------------------
# Hamiltonian


class LeapfrogResult(NamedTuple):
    x: np.ndarray
    p: np.ndarray
    positions: np.ndarray  # (leapfrogs + 1, n, 2) including the start point
    scores: np.ndarray  # field values at those positions


def _leapfrog(field: ScoreField, x, p, t, config: McmcConfig, score_x: np.ndarray) -> LeapfrogResult:
    h = config.hmc_step_size
    positions = [x]
    scores = [score_x]
    p = p + 0.5 * h * score_x
    for i in range(config.leapfrogs):
        x = x + h * p
        s = field.score(x, t)
        positions.append(x)
        scores.append(s)
        p = p + (h if i < config.leapfrogs - 1 else 0.5 * h) * s
    return LeapfrogResult(x, p, np.stack(positions), np.stack(scores))


class UhmcResult(NamedTuple):
    x: np.ndarray
    p: np.ndarray
    positions: np.ndarray
    scores: np.ndarray


def uhmc_step(
    field: ScoreField,
    x,
    p,
    t: int,
    config: McmcConfig,
    rng: np.random.Generator,
    score_x: np.ndarray | None = None,
) -> UhmcResult:
    """Partial momentum refresh then a leapfrog flight, always accepted.

    Unit mass; the visited positions and their scores are returned so curve
    paths can reuse them.
    """
    x = np.asarray(x, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    d = config.damping
    p = d * p + np.sqrt(1.0 - d * d) * rng.standard_normal(p.shape)
    if score_x is None:
        score_x = field.score(x, t)
    leap = _leapfrog(field, x, p, t, config, score_x)
    return UhmcResult(leap.x, leap.p, leap.positions, leap.scores)


class HmcResult(NamedTuple):
    x: np.ndarray
    p: np.ndarray
    accepted: np.ndarray
    log_accept: np.ndarray
    score: np.ndarray
    energy: np.ndarray | None


def hmc_step(
    field: ScoreField,
    estimator: EnergyDiffEstimator,
    x,
    p,
    t: int,
    config: McmcConfig,
    rng: np.random.Generator,
    score_x: np.ndarray | None = None,
    energy_x: np.ndarray | None = None,
) -> HmcResult:
    """One adjusted HMC step: refresh, leapfrog, Metropolis test.

    With a curve-path estimator the acceptance reuses the leapfrog scores and
    makes no additional field calls.  On rejection the particle keeps its
    position and the refreshed momentum is negated.
    """
    if estimator.path == "curve" and estimator.k != config.leapfrogs + 1:
        raise ValueError(
            f"curve paths have leapfrogs + 1 = {config.leapfrogs + 1} points, estimator says {estimator.k}"
        )
    x = np.asarray(x, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    d = config.damping
    p_ref = d * p + np.sqrt(1.0 - d * d) * rng.standard_normal(p.shape)
    if score_x is None:
        score_x = field.score(x, t)
    leap = _leapfrog(field, x, p_ref, t, config, score_x)
    score_hat = leap.scores[-1]

    energy_hat = None
    if estimator.mode == "direct":
        if energy_x is None:
            energy_x = field.energy(x, t)
        energy_hat = field.energy(leap.x, t)
        f = energy_x - energy_hat
    elif estimator.path == "curve":
        f = trapezoid_line_integral(leap.scores, leap.positions)
    else:
        path = straight_line_path(x, leap.x, estimator.k)
        f = _line_diff_with_endpoints(field, path, t, score_x, score_hat)

    kinetic_drop = 0.5 * (p_ref**2).sum(axis=-1) - 0.5 * (leap.p**2).sum(axis=-1)
    log_accept = f + kinetic_drop
    accepted = np.log(rng.uniform(size=x.shape[0])) < log_accept

    keep = accepted[:, None]
    x_new = np.where(keep, leap.x, x)
    p_new = np.where(keep, leap.p, -p_ref)
    score_new = np.where(keep, score_hat, score_x)
    energy_new = None
    if estimator.mode == "direct":
        energy_new = np.where(accepted, energy_hat, energy_x)
    return HmcResult(x_new, p_new, accepted, log_accept, score_new, energy_new)


# ---------------------------------------------------------------------------
# phase driver

SAMPLER_KINDS = ("ula", "la", "uhmc", "hmc")


class PhaseResult(NamedTuple):
    batch: np.ndarray
    accept_rate: float


def run_mcmc_phase(
    field: ScoreField,
    estimator: EnergyDiffEstimator | None,
    batch,
    t: int,
    config: McmcConfig,
    rng: np.random.Generator,
    sampler: str,
) -> PhaseResult:
    """Apply L sampler steps to every particle at diffusion step t.

    HMC momenta are drawn fresh at the start of the phase and persist across
    the L steps.  Unadjusted samplers report acceptance 1.
    """
    if sampler not in SAMPLER_KINDS:
        raise ValueError(f"unknown sampler {sampler!r}")
    if sampler in ("la", "hmc") and estimator is None:
        raise ValueError(f"{sampler} needs an energy-difference estimator")
    x = np.asarray(batch, dtype=np.float64)
    L = config.steps_per_t
    if L == 0:
        return PhaseResult(x, 1.0)

    if sampler == "ula":
        for _ in range(L):
            x = ula_step(field, x, t, config.la_step_size2, rng)
        return PhaseResult(x, 1.0)

    if sampler == "la":
        score_x = field.score(x, t)
        energy_x = field.energy(x, t) if (estimator is not None and estimator.mode == "direct") else None
        taken = 0.0
        for _ in range(L):
            res = mala_step(field, estimator, x, t, config.la_step_size2, rng, score_x, energy_x)
            x, score_x, energy_x = res.x, res.score, res.energy
            taken += float(res.accepted.mean())
        return PhaseResult(x, taken / L)

    p = rng.standard_normal(x.shape)
    if sampler == "uhmc":
        score_x = field.score(x, t)
        for _ in range(L):
            res = uhmc_step(field, x, p, t, config, rng, score_x)
            x, p, score_x = res.x, res.p, res.scores[-1]
        return PhaseResult(x, 1.0)

    score_x = field.score(x, t)
    energy_x = field.energy(x, t) if (estimator is not None and estimator.mode == "direct") else None
    taken = 0.0
    for _ in range(L):
        res = hmc_step(field, estimator, x, p, t, config, rng, score_x, energy_x)
        x, p, score_x, energy_x = res.x, res.p, res.score, res.energy
        taken += float(res.accepted.mean())
    return PhaseResult(x, taken / L)


def make_mcmc_hook(
    field: ScoreField,
    estimator: EnergyDiffEstimator | None,
    config: McmcConfig,
    rng: np.random.Generator,
    sampler: str,
    stats: list | None = None,
):
    """Reverse-chain hook running the MCMC phase after every ancestral step.

    The phase targets the step the chain just arrived at (t-1, down to 0 when
    `mcmc_at_t0` is set; the field itself decides how to evaluate step 0).
    """

    def hook(x, t_minus_1):
        if t_minus_1 == 0 and not config.mcmc_at_t0:
            return None
        res = run_mcmc_phase(field, estimator, x, t_minus_1, config, rng, sampler)
        if stats is not None:
            stats.append((t_minus_1, sampler, res.accept_rate))
        return res.batch

    return hook
