"""Exact conjugate engines: Gamma-Poisson and normal-inverse-gamma regression.

Both engines accept resample counts, so a bootstrapped dataset is fitted
without copying rows. Gamma parameters are shape/rate throughout.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from .core import CandidateWeights, Dataset, DegenerateDataError, NumericError

logger = logging.getLogger(__name__)

__all__ = [
    "GammaParams",
    "NIGParams",
    "gamma_poisson_posterior",
    "neg_binom_log_predictive",
    "eb_moment_match_gamma",
    "blr_posterior",
    "blr_log_predictive",
    "blr_predictive_mean",
    "default_nig_prior",
    "GammaPoissonModel",
    "BayesLinearRegression",
]


@dataclass(frozen=True)
class GammaParams:
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError(f"Gamma needs shape, rate > 0; got ({self.shape}, {self.rate})")

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def var(self) -> float:
        return self.shape / self.rate**2


@dataclass(frozen=True, eq=False)
class NIGParams:
    """Normal-inverse-gamma: ``beta | s2 ~ N(mean, s2 * cov)``, ``s2 ~ IG(a, b)``."""

    mean: np.ndarray
    cov: np.ndarray
    a: float
    b: float

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        V = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if V.shape != (m.size, m.size):
            raise ValueError(f"cov shape {V.shape} does not match mean of size {m.size}")
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"NIG needs a, b > 0; got ({self.a}, {self.b})")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", V)

    @property
    def dim(self) -> int:
        return self.mean.size


def _counts(weights, n):
    if weights is None:
        return np.ones(n)
    c = weights.counts if isinstance(weights, CandidateWeights) else np.asarray(weights)
    if c.shape != (n,):
        raise ValueError(f"expected {n} resample counts, got shape {c.shape}")
    return c.astype(float)


# Gamma-Poisson


def gamma_poisson_posterior(prior: GammaParams, data: Dataset, weights=None) -> GammaParams:
    data.require("count")
    c = _counts(weights, data.n)
    return GammaParams(prior.shape + float(c @ data.values), prior.rate + float(c.sum()))


def neg_binom_log_predictive(post: GammaParams, k):
    """Log pmf of the Gamma-Poisson predictive, NB(r=shape, p=rate/(rate+1))."""
    k = np.asarray(k, dtype=float)
    if np.any(k < 0):
        raise ValueError("counts must be nonnegative")
    a, b = post.shape, post.rate
    out = (
        gammaln(k + a)
        - gammaln(a)
        - gammaln(k + 1)
        + a * (np.log(b) - np.log1p(b))
        - k * np.log1p(b)
    )
    return float(out) if out.ndim == 0 else out


def eb_moment_match_gamma(data: Dataset) -> GammaParams:
    """Gamma prior whose mean and (1/N) variance match the data."""
    x = data.require("count").values.astype(float)
    if x.size < 2:
        raise DegenerateDataError("moment matching needs at least two observations")
    mean = x.mean()
    var = np.mean((x - mean) ** 2)
    if var <= 0 or mean <= 0:
        raise DegenerateDataError(f"cannot moment-match mean={mean}, var={var}")
    return GammaParams(mean**2 / var, mean / var)


class GammaPoissonModel:
    """Poisson likelihood with a conjugate Gamma prior."""

    def __init__(self, prior: GammaParams):
        self.prior = prior

    def fit(self, data, weights=None):
        return gamma_poisson_posterior(self.prior, data, weights)

    def log_predictive(self, post, data):
        if isinstance(data, Dataset):
            data = data.require("count").values
        return np.atleast_1d(neg_binom_log_predictive(post, data))

    def predictive_mean(self, post, data):
        return np.full(len(data), post.mean)


# Bayesian linear regression


def default_nig_prior(dim: int) -> NIGParams:
    """Proper but numerically flat prior used when none is given."""
    return NIGParams(np.zeros(dim), 1e6 * np.eye(dim), 1e-3, 1e-3)


def blr_posterior(prior: NIGParams, data: Dataset, weights=None, label=None) -> NIGParams:
    """NIG update with row ``n`` counted ``counts[n]`` times."""
    data.require("regression")
    X, y = data.values, data.targets
    if X.shape[1] != prior.dim:
        raise ValueError(f"prior has dimension {prior.dim}, data has {X.shape[1]}")
    c = _counts(weights, data.n)
    if label is None and isinstance(weights, CandidateWeights):
        label = weights.label
    try:
        prior_prec = linalg.inv(prior.cov, check_finite=True)
        prior_prec = 0.5 * (prior_prec + prior_prec.T)
        Xc = X * c[:, None]
        prec = prior_prec + X.T @ Xc
        chol = linalg.cho_factor(prec, lower=True)
        rhs = prior_prec @ prior.mean + Xc.T @ y
        mean = linalg.cho_solve(chol, rhs)
        cov = linalg.cho_solve(chol, np.eye(prior.dim))
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"posterior precision not positive definite ({exc})", label) from exc
    cov = 0.5 * (cov + cov.T)
    quad = prior.mean @ prior_prec @ prior.mean + c @ (y * y) - mean @ rhs
    # quad is a sum of squares in exact arithmetic; clip roundoff only
    b = prior.b + 0.5 * max(quad, 0.0)
    a = prior.a + 0.5 * c.sum()
    if not np.isfinite(b) or b <= 0:
        raise NumericError(f"invalid posterior scale b={b}", label)
    return NIGParams(mean, cov, a, b)


def blr_log_predictive(post: NIGParams, x, y):
    """Student-t log density of ``y`` given features ``x`` (one row or many)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape[1] != post.dim:
        raise ValueError(f"feature dimension {x.shape[1]} != {post.dim}")
    nu = 2.0 * post.a
    loc = x @ post.mean
    scale2 = (post.b / post.a) * (1.0 + np.einsum("ij,jk,ik->i", x, post.cov, x))
    z2 = (y - loc) ** 2 / scale2
    out = (
        gammaln(0.5 * (nu + 1))
        - gammaln(0.5 * nu)
        - 0.5 * np.log(nu * np.pi * scale2)
        - 0.5 * (nu + 1) * np.log1p(z2 / nu)
    )
    return out


def blr_predictive_mean(post: NIGParams, x):
    return np.atleast_2d(np.asarray(x, dtype=float)) @ post.mean


class BayesLinearRegression:
    """Gaussian likelihood, NIG prior; predictive is Student-t."""

    def __init__(self, prior: NIGParams | None = None):
        self.prior = prior

    def fit(self, data, weights=None):
        prior = self.prior if self.prior is not None else default_nig_prior(data.dim)
        return blr_posterior(prior, data, weights)

    def log_predictive(self, post, data):
        data.require("regression")
        return blr_log_predictive(post, data.values, data.targets)

    def predictive_mean(self, post, data):
        return blr_predictive_mean(post, data.values)
