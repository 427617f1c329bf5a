"""Synthetic 2D targets: the circle mixture, the bar uniform, their product.

These are the training distributions, the exact reference sampler and the
analytic oracles (log-density, score, box masses) used by the metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr


@dataclass
class GaussianMixture:
    means: np.ndarray  # (k, 2)
    covs: np.ndarray  # (k, 2, 2)
    weights: np.ndarray  # (k,)

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.covs = np.asarray(self.covs, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if not np.isclose(self.weights.sum(), 1.0):
            raise ValueError("mixture weights must sum to 1")
        if np.any(np.linalg.eigvalsh(self.covs) <= 0):
            raise ValueError("mixture covariances must be positive definite")
        self._inv = np.linalg.inv(self.covs)
        self._chol = np.linalg.cholesky(self.covs)
        _, logdet = np.linalg.slogdet(self.covs)
        self._log_norm = np.log(self.weights) - np.log(2 * np.pi) - 0.5 * logdet

    def _component_logpdf(self, x: np.ndarray) -> np.ndarray:
        diff = x[:, None, :] - self.means[None, :, :]  # (n, k, 2)
        quad = np.einsum("nki,kij,nkj->nk", diff, self._inv, diff)
        return self._log_norm[None, :] - 0.5 * quad

    def logpdf(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        comp = self._component_logpdf(x)
        m = comp.max(axis=1)
        return m + np.log(np.exp(comp - m[:, None]).sum(axis=1))

    def score(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        comp = self._component_logpdf(x)
        comp -= comp.max(axis=1, keepdims=True)
        resp = np.exp(comp)
        resp /= resp.sum(axis=1, keepdims=True)
        diff = x[:, None, :] - self.means[None, :, :]
        pulls = -np.einsum("kij,nkj->nki", self._inv, diff)
        return (resp[:, :, None] * pulls).sum(axis=1)

    def logpdf_and_score(self, x) -> tuple[np.ndarray, np.ndarray]:
        return self.logpdf(x), self.score(x)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        idx = rng.choice(len(self.weights), size=n, p=self.weights)
        z = rng.standard_normal((n, 2))
        return self.means[idx] + np.einsum("nij,nj->ni", self._chol[idx], z)

    def box_mass(self, lo, hi) -> float:
        """Mixture mass inside an axis-aligned box; needs diagonal covariances."""
        if not np.allclose(self.covs[:, 0, 1], 0.0) or not np.allclose(self.covs[:, 1, 0], 0.0):
            raise ValueError("box_mass needs diagonal covariances")
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        sd = np.sqrt(np.stack([self.covs[:, 0, 0], self.covs[:, 1, 1]], axis=1))
        per_axis = ndtr((hi[None, :] - self.means) / sd) - ndtr((lo[None, :] - self.means) / sd)
        return float((self.weights * per_axis.prod(axis=1)).sum())


def circle_gmm(n_modes: int = 8, radius: float = 0.5, sigma: float = 0.03) -> GaussianMixture:
    """Equal-weight modes evenly spaced on a circle, isotropic covariance."""
    angles = 2.0 * np.pi * np.arange(n_modes) / n_modes
    means = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    covs = np.repeat((sigma**2 * np.eye(2))[None], n_modes, axis=0)
    return GaussianMixture(means, covs, np.full(n_modes, 1.0 / n_modes))


@dataclass(frozen=True)
class BoxUniform:
    """Uniform on the centred box |x_i| <= half_widths[i]."""

    half_widths: tuple[float, float]

    @property
    def area(self) -> float:
        return 4.0 * self.half_widths[0] * self.half_widths[1]

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return (np.abs(x[:, 0]) <= self.half_widths[0]) & (np.abs(x[:, 1]) <= self.half_widths[1])

    def logpdf(self, x) -> np.ndarray:
        inside = self.contains(x)
        out = np.where(inside, -np.log(self.area), -np.inf)
        return out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        s1, s2 = self.half_widths
        return np.stack([rng.uniform(-s1, s1, size=n), rng.uniform(-s2, s2, size=n)], axis=1)


def bar_uniform() -> BoxUniform:
    return BoxUniform((0.2, 1.0))


@dataclass(frozen=True)
class ExtendedSupportUniform:
    """The bar with 1% of its mass spread over the rest of [-w, w]^2.

    Used only for evaluation: it keeps the log-likelihood finite on samples
    that fall just outside the bar.
    """

    inner: BoxUniform = field(default_factory=bar_uniform)
    outer_half_width: float = 1.1
    inner_mass: float = 0.99

    @property
    def inner_density(self) -> float:
        return self.inner_mass / self.inner.area

    @property
    def extension_density(self) -> float:
        outer_area = (2.0 * self.outer_half_width) ** 2
        return (1.0 - self.inner_mass) / (outer_area - self.inner.area)

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        w = self.outer_half_width
        return (np.abs(x[:, 0]) <= w) & (np.abs(x[:, 1]) <= w)

    def logpdf(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = np.full(x.shape[0], -np.inf)
        out[self.contains(x)] = np.log(self.extension_density)
        out[self.inner.contains(x)] = np.log(self.inner_density)
        return out


class ProductTarget:
    """Product of the circle mixture and the bar.

    Sampling multiplies the mixture by the hard bar (exact rejection);
    likelihood evaluation uses the extended-support uniform so the density
    stays positive out to the evaluation box.  The normaliser comes from
    exact per-mode box masses (products of 1D normal CDFs).
    """

    def __init__(
        self,
        gmm: GaussianMixture | None = None,
        bar: BoxUniform | None = None,
        extended: ExtendedSupportUniform | None = None,
    ):
        self.gmm = gmm if gmm is not None else circle_gmm()
        self.bar = bar if bar is not None else bar_uniform()
        self.extended = extended if extended is not None else ExtendedSupportUniform(self.bar)
        s1, s2 = self.bar.half_widths
        w = self.extended.outer_half_width
        self.mass_inner = self.gmm.box_mass((-s1, -s2), (s1, s2))
        self.mass_outer = self.gmm.box_mass((-w, -w), (w, w))
        self.norm = self.extended.inner_density * self.mass_inner + self.extended.extension_density * (
            self.mass_outer - self.mass_inner
        )
        if self.norm <= 0:
            raise ValueError("degenerate product target")

    def logpdf(self, x) -> np.ndarray:
        """Normalised log-density on the extended support, -inf outside."""
        return self.gmm.logpdf(x) + self.extended.logpdf(x) - np.log(self.norm)

    def sample(self, n: int, rng: np.random.Generator, chunk: int = 8192) -> np.ndarray:
        """Exact sampler: mixture draws accepted iff they land in the bar."""
        if n < 1:
            raise ValueError("n must be >= 1")
        kept = []
        total = 0
        while total < n:
            cand = self.gmm.sample(chunk, rng)
            good = cand[self.bar.contains(cand)]
            kept.append(good)
            total += len(good)
        return np.concatenate(kept)[:n]


def sample_component(dist, n: int, rng: np.random.Generator) -> np.ndarray:
    """Exact i.i.d. samples from a component distribution."""
    return dist.sample(n, rng)
