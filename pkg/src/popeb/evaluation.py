"""Held-out metrics and pmf diagnostics."""
from __future__ import annotations

import numpy as np
from scipy import stats

__all__ = [
    "mean_log_predictive",
    "mse_mae",
    "pmf_total_variation",
    "truncated_pmf",
    "KMAX",
    "poisson_pmf",
]

KMAX = 500
TAIL_TOL = 1e-8


def mean_log_predictive(log_densities) -> float:
    v = np.asarray(log_densities, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("no log densities to average")
    return float(v.mean())


def mse_mae(predictions, targets) -> tuple[float, float]:
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(targets, dtype=float).ravel()
    if p.size != t.size:
        raise ValueError(f"{p.size} predictions for {t.size} targets")
    if p.size == 0:
        raise ValueError("no predictions")
    r = p - t
    return float(np.mean(r * r)), float(np.mean(np.abs(r)))


def pmf_total_variation(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("pmfs must share a support")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("pmf entries must be nonnegative")
    return float(0.5 * np.abs(p - q).sum())


def truncated_pmf(log_pmf, kmax: int = KMAX) -> np.ndarray:
    """Evaluate a count log-pmf on ``0..kmax`` and check the tail is negligible."""
    k = np.arange(kmax + 1)
    pmf = np.exp(log_pmf(k))
    tail = 1.0 - pmf.sum()
    if tail > TAIL_TOL:
        raise ValueError(f"pmf leaves {tail:.3g} mass beyond k={kmax}")
    return pmf


def poisson_pmf(rate: float, kmax: int = KMAX) -> np.ndarray:
    return stats.poisson.pmf(np.arange(kmax + 1), rate)
