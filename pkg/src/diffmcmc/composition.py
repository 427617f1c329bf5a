"""Composing component models: products and negations.

Log-densities add under multiplication, so the composed noise prediction is
the weighted sum of component predictions and the composed energy difference
is either the summed direct energy difference (all-energy components) or one
line integral of the summed score field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import models as mdl
from .samplers import ScoreField, line_energy_diff


@dataclass
class CompositionSpec:
    """Weighted components; weights +1 for products, one -gamma for negation."""

    components: list[tuple[object, float]]

    def __post_init__(self):
        if not self.components:
            raise ValueError("composition needs at least one component")
        if not any(w > 0 for _, w in self.components):
            raise ValueError("composition needs at least one positive weight")
        timesteps = {
            c.arch.timesteps for c, _ in self.components if isinstance(c, mdl.DiffusionModel)
        }
        if len(timesteps) > 1:
            raise ValueError(f"components disagree on timesteps: {sorted(timesteps)}")

    @property
    def all_energy(self) -> bool:
        return all(
            isinstance(c, mdl.DiffusionModel) and c.parameterisation == mdl.ENERGY
            for c, _ in self.components
        )


def product(*components) -> CompositionSpec:
    return CompositionSpec([(c, 1.0) for c in components])


def negation(positive, negative, gamma: float = 1.0) -> CompositionSpec:
    if gamma <= 0:
        raise ValueError("negation strength gamma must be positive")
    return CompositionSpec([(positive, 1.0), (negative, -gamma)])


def make_composition(kind: str, components, weights=None) -> CompositionSpec:
    """Named constructor; mixtures are not expressible as an energy sum."""
    if kind == "product":
        return product(*components)
    if kind == "negation":
        gamma = 1.0 if weights is None else float(weights[1])
        return negation(components[0], components[1], gamma)
    if kind == "mixture":
        raise ValueError("mixture composition is unsupported (no energy-difference form)")
    raise ValueError(f"unknown composition kind {kind!r}")


def _component_eps(component, x, t, schedule) -> np.ndarray:
    if isinstance(component, mdl.DiffusionModel):
        if component.arch.timesteps != schedule.T:
            raise ValueError(
                f"component has {component.arch.timesteps} timesteps, schedule has {schedule.T}"
            )
        return mdl.model_eps(component, x, t, schedule)
    return np.asarray(component(x, t, schedule), dtype=np.float64)


def composed_eps(spec: CompositionSpec, x, t, schedule) -> np.ndarray:
    """Weighted sum of component noise predictions (log-densities add)."""
    total = None
    for component, w in spec.components:
        e = w * _component_eps(component, x, t, schedule)
        total = e if total is None else total + e
    return total


def composed_score_field(spec: CompositionSpec, schedule, floor_t: int = 1) -> ScoreField:
    """Score field -composed_eps/sigma_t, with direct energies when every
    component is energy-parameterised.

    Step indices below `floor_t` evaluate at `floor_t` (the reverse chain's
    final MCMC phase targets step 0 where sigma vanishes).
    """

    def score(x, t):
        tt = max(int(t), floor_t)
        return -composed_eps(spec, x, tt, schedule) / schedule.sigma[tt]

    energy = None
    if spec.all_energy:

        def energy(x, t):
            tt = max(int(t), floor_t)
            total = None
            for component, w in spec.components:
                e = w * mdl.energy_value(component, x, tt)
                total = e if total is None else total + e
            return total

    return ScoreField(score, energy)


def composed_energy_diff(spec: CompositionSpec, path, t, schedule) -> np.ndarray:
    """Estimated log p(end) - log p(start) for the composed model.

    All-energy compositions difference their energies at the endpoints; any
    score component forces the line-integral route for the whole sum.
    """
    path = np.asarray(path, dtype=np.float64)
    if path.shape[0] < 2:
        raise ValueError("a path needs at least 2 points")
    field = composed_score_field(spec, schedule)
    if spec.all_energy:
        start, end = path[0], path[-1]
        return field.energy(start, t) - field.energy(end, t)
    return line_energy_diff(field, path, t)
