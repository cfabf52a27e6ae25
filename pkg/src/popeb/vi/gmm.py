"""Mean-field VI for a diagonal Gaussian mixture with resample-count weights.

Model, per component ``k`` and dimension ``d``::

    pi ~ Dirichlet(alpha0)
    tau_kd ~ Gamma(a0, b0),  mu_kd | tau_kd ~ N(m0, 1 / (kappa0 tau_kd))
    z_n ~ Cat(pi),  x_nd | z_n = k ~ N(mu_kd, 1 / tau_kd)

``q`` factorises into Cat(r_n), Dirichlet(alpha) and one normal-gamma
``(m, kappa, a, b)`` per component and dimension. Observation ``n`` enters
every global statistic and the ELBO with multiplicity ``c_n``.

Global parameters are exchanged with :mod:`popeb.bumpvi` in natural form::

    alpha,  kappa * m,  kappa,  a - 1/2,  b + kappa m^2 / 2

in which the conjugate update is linear in the weighted sufficient
statistics, so a convex combination of two valid states is valid.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln, xlogy

from ..core import CandidateWeights, Dataset, NumericError

logger = logging.getLogger(__name__)

__all__ = [
    "GmmPrior",
    "GmmState",
    "gmm_init",
    "gmm_local_step",
    "gmm_global_step",
    "gmm_elbo",
    "gmm_log_predictive",
    "gmm_cavi",
    "GaussianMixture",
]

LOG_2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class GmmPrior:
    K: int
    alpha0: float | None = None
    m0: float = 0.0
    kappa0: float = 1.0
    a0: float = 1.0
    b0: float = 1.0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("need at least one component")
        if self.alpha0 is None:
            object.__setattr__(self, "alpha0", 1.0 / self.K)
        if min(self.alpha0, self.kappa0, self.a0, self.b0) <= 0:
            raise ValueError("GMM prior hyperparameters must be positive")


@dataclass(frozen=True, eq=False)
class GmmState:
    """Variational parameters. ``resp`` is ``None`` until a local step has run."""

    alpha: np.ndarray  # (K,)
    m: np.ndarray  # (K, D)
    kappa: np.ndarray  # (K, D)
    a: np.ndarray  # (K, D)
    b: np.ndarray  # (K, D)
    resp: np.ndarray | None = field(default=None, repr=False)

    @property
    def K(self):
        return self.alpha.size

    @property
    def weights(self):
        return self.alpha / self.alpha.sum()

    def natural(self) -> dict:
        return {
            "alpha": self.alpha.copy(),
            "eta_m": self.kappa * self.m,
            "kappa": self.kappa.copy(),
            "eta_a": self.a - 0.5,
            "eta_b": self.b + 0.5 * self.kappa * self.m**2,
        }

    @classmethod
    def from_natural(cls, nat: dict, resp=None) -> "GmmState":
        kappa = nat["kappa"]
        m = nat["eta_m"] / kappa
        b = nat["eta_b"] - 0.5 * nat["eta_m"] * m
        return cls(nat["alpha"].copy(), m, kappa.copy(), nat["eta_a"] + 0.5, b, resp)

    def permute(self, perm) -> "GmmState":
        perm = np.asarray(perm)
        resp = None if self.resp is None else self.resp[:, perm]
        return GmmState(
            self.alpha[perm], self.m[perm], self.kappa[perm], self.a[perm], self.b[perm], resp
        )


def _counts(weights, n):
    if weights is None:
        return np.ones(n)
    c = weights.counts if isinstance(weights, CandidateWeights) else np.asarray(weights)
    if c.shape != (n,):
        raise ValueError(f"expected {n} resample counts, got shape {c.shape}")
    return c.astype(float)


def _log_rho(X, state):
    """Unnormalised log responsibilities, ``(n, K)``."""
    elog_pi = digamma(state.alpha) - digamma(state.alpha.sum())
    e_tau = state.a / state.b
    elog_tau = digamma(state.a) - np.log(state.b)
    const = elog_pi + 0.5 * np.sum(elog_tau - LOG_2PI - 1.0 / state.kappa, axis=1)
    # sum_d e_tau (x - m)^2 expanded so the (n, K, D) tensor is never formed
    quad = (X**2) @ e_tau.T - 2.0 * X @ (e_tau * state.m).T + np.sum(e_tau * state.m**2, axis=1)
    return const - 0.5 * quad


def gmm_local_step(data: Dataset, weights, state: GmmState) -> np.ndarray:
    """Optimal responsibilities for every observation given the globals.

    ``weights`` is accepted for symmetry with the global step and ignored:
    duplicated observations share their responsibilities.
    """
    X = data.values
    log_rho = _log_rho(X, state)
    if not np.all(np.isfinite(log_rho)):
        bad = np.argwhere(~np.isfinite(log_rho))[0]
        raise NumericError(f"non-finite log responsibility at (n={bad[0]}, k={bad[1]})")
    log_rho -= log_rho.max(axis=1, keepdims=True)
    r = np.exp(log_rho)
    r /= r.sum(axis=1, keepdims=True)
    return r


def sufficient_stats(X, resp, counts):
    cr = resp * counts[:, None]
    N = cr.sum(axis=0)
    s1 = cr.T @ X
    s2 = cr.T @ (X * X)
    return N, s1, s2


def natural_from_stats(prior: GmmPrior, N, s1, s2) -> dict:
    """Conjugate update in natural coordinates from weighted statistics."""
    D = s1.shape[1]
    Nd = np.repeat(N[:, None], D, axis=1)
    return {
        "alpha": prior.alpha0 + N,
        "eta_m": prior.kappa0 * prior.m0 + s1,
        "kappa": prior.kappa0 + Nd,
        "eta_a": prior.a0 - 0.5 + 0.5 * Nd,
        "eta_b": prior.b0 + 0.5 * prior.kappa0 * prior.m0**2 + 0.5 * s2,
    }


def gmm_global_step(data: Dataset, weights, resp, prior: GmmPrior) -> GmmState:
    """Dirichlet and normal-gamma updates from count-weighted statistics."""
    X = data.values
    N, s1, s2 = sufficient_stats(X, resp, _counts(weights, data.n))
    return GmmState.from_natural(natural_from_stats(prior, N, s1, s2), resp)


def _kl_dirichlet(alpha, alpha0):
    K = alpha.size
    dig = digamma(alpha) - digamma(alpha.sum())
    return (
        gammaln(alpha.sum())
        - gammaln(alpha).sum()
        - gammaln(K * alpha0)
        + K * gammaln(alpha0)
        + np.sum((alpha - alpha0) * dig)
    )


def _kl_normal_gamma(state, prior):
    m, kappa, a, b = state.m, state.kappa, state.a, state.b
    kl_gamma = (
        (a - prior.a0) * digamma(a)
        - gammaln(a)
        + gammaln(prior.a0)
        + prior.a0 * (np.log(b) - np.log(prior.b0))
        + a * (prior.b0 - b) / b
    )
    ratio = prior.kappa0 / kappa
    kl_mean = 0.5 * (ratio + prior.kappa0 * (a / b) * (m - prior.m0) ** 2 - 1.0 - np.log(ratio))
    return np.sum(kl_gamma + kl_mean)


def gmm_data_term(data, weights, state) -> float:
    """``sum_n c_n (E[log p(x_n, z_n)] - E[log q(z_n)])``."""
    r = state.resp
    if r is None:
        raise ValueError("state has no responsibilities")
    c = _counts(weights, data.n)
    log_rho = _log_rho(data.values, state)
    per_obs = np.sum(r * log_rho, axis=1) - np.sum(xlogy(r, r), axis=1)
    return float(c @ per_obs)


def gmm_elbo(data: Dataset, weights, state: GmmState, prior: GmmPrior) -> float:
    """Evidence lower bound of the count-weighted dataset."""
    data_term = gmm_data_term(data, weights, state)
    return data_term - float(_kl_dirichlet(state.alpha, prior.alpha0)) - float(
        _kl_normal_gamma(state, prior)
    )


def component_log_predictive(state: GmmState, X) -> np.ndarray:
    """``(n, K)`` log Student-t densities, i.e. the normal-gamma marginals."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    nu = 2.0 * state.a
    scale2 = state.b * (1.0 + state.kappa) / (state.a * state.kappa)
    norm = np.sum(gammaln(0.5 * (nu + 1)) - gammaln(0.5 * nu) - 0.5 * np.log(nu * np.pi * scale2), axis=1)
    out = np.empty((X.shape[0], state.K))
    for k in range(state.K):
        z = (X - state.m[k]) ** 2 / (nu[k] * scale2[k])
        out[:, k] = norm[k] - 0.5 * np.log1p(z) @ (nu[k] + 1)
    return out


def gmm_log_predictive(state: GmmState, prior, X) -> np.ndarray:
    """Per-row log predictive density under ``q``: a mixture of Student-t products."""
    if isinstance(X, Dataset):
        X = X.values
    comp = component_log_predictive(state, X) + np.log(state.weights)
    top = comp.max(axis=1, keepdims=True)
    return (top + np.log(np.exp(comp - top).sum(axis=1, keepdims=True)))[:, 0]


def gmm_init(data: Dataset, prior: GmmPrior, rng: np.random.Generator) -> GmmState:
    """k-means++ seeding, hard nearest-centre labels softened to 0.9 / 0.1."""
    X = data.values
    n, K = X.shape[0], prior.K
    centres = [X[rng.integers(n)]]
    d2 = np.sum((X - centres[0]) ** 2, axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centres.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    C = np.asarray(centres)
    dist = (X**2).sum(axis=1)[:, None] - 2 * X @ C.T + (C**2).sum(axis=1)
    labels = np.argmin(dist, axis=1)
    if K == 1:
        resp = np.ones((n, 1))
    else:
        resp = np.full((n, K), 0.1 / (K - 1))
        resp[np.arange(n), labels] = 0.9
    return gmm_global_step(data, None, resp, prior)


def _change_norm(new: dict, old: dict) -> float:
    return float(np.sqrt(sum(np.sum((new[k] - old[k]) ** 2) for k in new)))


def gmm_cavi(data: Dataset, prior: GmmPrior, init: GmmState, max_iter=500, tol=1e-3, weights=None, track_elbo=False):
    """Batch coordinate ascent from ``init`` until the natural-parameter step is below ``tol``.

    Returns ``(state, history)``; ``history`` holds one dict per sweep with the
    step norm and, when ``track_elbo`` is set, the ELBO after the sweep.
    """
    state = init
    history = []
    for it in range(max_iter):
        resp = gmm_local_step(data, weights, state)
        new = gmm_global_step(data, weights, resp, prior)
        step = _change_norm(new.natural(), state.natural())
        rec = {"iteration": it, "change": step}
        if track_elbo:
            rec["elbo"] = gmm_elbo(data, weights, new, prior)
        history.append(rec)
        state = new
        if step < tol:
            break
    return state, history


class GaussianMixture:
    """Adapter exposing the mixture to :func:`popeb.bumpvi.bumpvi_run`."""

    def __init__(self, prior: GmmPrior):
        self.prior = prior

    def initial_globals(self, data, rng):
        return gmm_init(data, self.prior, rng).natural()

    def local_step(self, data, globals_):
        return gmm_local_step(data, None, GmmState.from_natural(globals_))

    def global_stats(self, data, locals_):
        X = data.values
        return locals_, X, X * X

    def global_fixed_point(self, data, weights, locals_, stats=None):
        if stats is None:
            stats = self.global_stats(data, locals_)
        resp, X, X2 = stats
        c = _counts(weights, data.n)
        cr = resp * c[:, None]
        return natural_from_stats(self.prior, cr.sum(axis=0), cr.T @ X, cr.T @ X2)

    def predictive_score(self, data, globals_):
        return float(np.sum(gmm_log_predictive(GmmState.from_natural(globals_), self.prior, data)))

    def state(self, globals_, locals_=None):
        return GmmState.from_natural(globals_, locals_)

    def heldout_log_predictive(self, globals_, data):
        return gmm_log_predictive(GmmState.from_natural(globals_), self.prior, data)
