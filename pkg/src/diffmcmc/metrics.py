"""Evaluation metrics: extended-support log-likelihood, bimodal-GMM
covariance discrepancy, and exact-assignment Wasserstein-2 distance."""

from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .targets import ProductTarget

FLOOR_LOG_DENSITY = -69.0  # ~ log 1e-30, applied outside the evaluation box


class LlResult(NamedTuple):
    value: float
    out_of_support: int


def ll_metric(samples, target: ProductTarget | None = None) -> LlResult:
    """Mean log-density of the samples under the true product distribution.

    Samples outside the extended evaluation box get the floor log-density and
    are counted separately.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.size == 0:
        raise ValueError("empty batch")
    if target is None:
        target = ProductTarget()
    logp = target.logpdf(samples)
    outside = ~target.extended.contains(samples)
    logp[outside] = FLOOR_LOG_DENSITY
    return LlResult(float(logp.mean()), int(outside.sum()))


# ---------------------------------------------------------------------------
# bimodal GMM covariance metric


class GmmFit(NamedTuple):
    weights: np.ndarray  # (2,)
    means: np.ndarray  # (2, 2)
    covs: np.ndarray  # (2, 2, 2)
    mean_loglik: float
    iterations: int


DEFAULT_INIT_MEANS = np.array([[0.0, 0.5], [0.0, -0.5]])


def fit_two_mode_gmm(
    samples,
    init_means: np.ndarray = DEFAULT_INIT_MEANS,
    init_sigma: float = 0.03,
    max_iter: int = 200,
    tol: float = 1e-9,
) -> GmmFit:
    """Full-covariance EM with two components.

    Starts from the given means with isotropic init_sigma^2 covariances and
    equal weights; stops after max_iter sweeps or when the mean log-likelihood
    moves by less than tol.  Near-singular covariances (det < 1e-12) are
    regularised with 1e-9 I and reported as a warning.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples to fit")
    means = np.array(init_means, dtype=np.float64).copy()
    covs = np.repeat((init_sigma**2 * np.eye(2))[None], 2, axis=0)
    weights = np.full(2, 0.5)
    prev = -np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        inv = np.linalg.inv(covs)
        _, logdet = np.linalg.slogdet(covs)
        diff = x[:, None, :] - means[None, :, :]
        quad = np.einsum("nki,kij,nkj->nk", diff, inv, diff)
        log_comp = np.log(weights)[None, :] - np.log(2 * np.pi) - 0.5 * logdet[None, :] - 0.5 * quad
        m = log_comp.max(axis=1, keepdims=True)
        log_norm = m[:, 0] + np.log(np.exp(log_comp - m).sum(axis=1))
        loglik = float(log_norm.mean())
        resp = np.exp(log_comp - log_norm[:, None])
        nk = np.maximum(resp.sum(axis=0), 1e-12)  # collapsed components stay finite
        weights = nk / nk.sum()
        means = (resp.T @ x) / nk[:, None]
        for k in range(2):
            d = x - means[k]
            cov = (resp[:, k][:, None] * d).T @ d / nk[k]
            if np.linalg.det(cov) < 1e-12:
                warnings.warn(f"EM covariance {k} near singular; regularising")
                cov = cov + 1e-9 * np.eye(2)
            covs[k] = cov
        if abs(loglik - prev) < tol:
            break
        prev = loglik
    return GmmFit(weights, means, covs, loglik, iterations)


def _match_components(means_a: np.ndarray, means_b: np.ndarray) -> tuple[int, int]:
    """Pair the two fitted components by nearest means; ties keep identity."""
    straight = np.linalg.norm(means_a[0] - means_b[0]) + np.linalg.norm(means_a[1] - means_b[1])
    crossed = np.linalg.norm(means_a[0] - means_b[1]) + np.linalg.norm(means_a[1] - means_b[0])
    return (0, 1) if straight <= crossed else (1, 0)


def gmm_cov_metric(model_samples, true_samples) -> float:
    """Mean Frobenius distance between matched fitted covariance pairs."""
    model_samples = np.atleast_2d(np.asarray(model_samples, dtype=np.float64))
    true_samples = np.atleast_2d(np.asarray(true_samples, dtype=np.float64))
    if model_samples.size == 0 or true_samples.size == 0:
        raise ValueError("empty batch")
    fit_model = fit_two_mode_gmm(model_samples)
    fit_true = fit_two_mode_gmm(true_samples)
    j0, j1 = _match_components(fit_model.means, fit_true.means)
    d0 = np.linalg.norm(fit_model.covs[0] - fit_true.covs[j0])
    d1 = np.linalg.norm(fit_model.covs[1] - fit_true.covs[j1])
    return float(0.5 * (d0 + d1))


# ---------------------------------------------------------------------------
# Wasserstein-2 by exact assignment


def w2_metric(model_samples, true_samples, convention: str = "sum") -> float:
    """Optimal-assignment W2 between equal-size sample sets.

    The squared-Euclidean cost matrix goes through an exact linear assignment
    solve.  "sum" returns sqrt of the total assigned cost, "mean" divides the
    total by n before the root.
    """
    a = np.atleast_2d(np.asarray(model_samples, dtype=np.float64))
    b = np.atleast_2d(np.asarray(true_samples, dtype=np.float64))
    if a.shape != b.shape:
        raise ValueError(f"sample sets must match in size, got {a.shape} and {b.shape}")
    if convention not in ("sum", "mean"):
        raise ValueError(f"unknown convention {convention!r}")
    cost = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    rows, cols = linear_sum_assignment(cost)
    total = float(cost[rows, cols].sum())
    if convention == "mean":
        total /= a.shape[0]
    return float(np.sqrt(total))


def assignment_cost(model_samples, true_samples) -> float:
    """Total squared cost of the optimal assignment (for optimality checks)."""
    a = np.atleast_2d(np.asarray(model_samples, dtype=np.float64))
    b = np.atleast_2d(np.asarray(true_samples, dtype=np.float64))
    cost = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())
