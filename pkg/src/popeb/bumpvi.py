"""Bumping variational inference.

Each iteration runs the local step once on the observed data, then builds
``B`` natural-gradient directions by reweighting the same local parameters
with bootstrap resample counts. Every direction is scored by the predictive
density of the observed data after a step of size ``rho``; the best one is
taken. Candidate 0 is always the observed dataset, so with ``B = 1`` this is
full-batch stochastic VI with a constant step.

A model plugs in through the :class:`BumpableModel` surface. Global
parameters are dicts of arrays in natural coordinates.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np

from .core import Dataset, NoValidCandidateError, make_candidate_set, make_rng

logger = logging.getLogger(__name__)

__all__ = [
    "BumpableModel",
    "BumpViError",
    "BumpViConfig",
    "IterationRecord",
    "BumpViTrace",
    "natural_gradient",
    "take_step",
    "bumpvi_iteration",
    "bumpvi_run",
]

Globals = dict[str, np.ndarray]


class BumpViError(RuntimeError):
    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration


class BumpableModel(Protocol):
    def local_step(self, data: Dataset, globals_: Globals) -> Any: ...

    def global_fixed_point(self, data: Dataset, weights, locals_, stats=None) -> Globals: ...

    def predictive_score(self, data: Dataset, globals_: Globals) -> float: ...


@dataclass(frozen=True)
class BumpViConfig:
    """Run settings.

    ``criterion="params"`` stops when the L2 norm of the global step is below
    ``tol``. A constant-step bumped iteration keeps moving by ``rho`` times
    the bootstrap noise, so that rule rarely fires for ``B > 1``;
    ``criterion="score"`` instead stops once the relative change of the
    selected predictive score, averaged over the last ``window`` iterations,
    is below ``tol``.
    """

    B: int = 10
    rho: float = 0.1
    tol: float = 1e-3
    max_iter: int = 500
    seed: int = 0
    criterion: str = "params"
    window: int = 5

    def __post_init__(self):
        if self.criterion not in ("params", "score"):
            raise ValueError(f"unknown convergence criterion {self.criterion!r}")
        if self.window < 1:
            raise ValueError("window must be at least 1")
        if self.B < 1:
            raise ValueError("B must be at least 1")
        if not 0 < self.rho <= 1:
            raise ValueError("step size must lie in (0, 1]")
        if self.tol <= 0:
            raise ValueError("convergence threshold must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")


@dataclass(frozen=True)
class IterationRecord:
    chosen: int
    score: float
    identity_score: float
    change: float
    seconds: float


@dataclass
class BumpViTrace:
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.records)

    def __len__(self):
        return len(self.records)

    @property
    def chosen(self) -> list[int]:
        return [r.chosen for r in self.records]


def natural_gradient(target: Globals, current: Globals) -> Globals:
    """Natural gradient of a conditionally conjugate model: coordinate-update target minus current."""
    if target.keys() != current.keys():
        raise ValueError(f"parameter sets differ: {sorted(target)} vs {sorted(current)}")
    out = {}
    for k in target:
        if target[k].shape != current[k].shape:
            raise ValueError(f"{k}: shape {target[k].shape} != {current[k].shape}")
        out[k] = target[k] - current[k]
    return out


def take_step(current: Globals, grad: Globals, rho: float) -> Globals:
    return {k: current[k] + rho * grad[k] for k in current}


def _norm(g: Globals) -> float:
    return float(np.sqrt(sum(np.sum(v * v) for v in g.values())))


def bumpvi_iteration(model, data: Dataset, globals_: Globals, config: BumpViConfig, rng):
    """One bumping step. Returns ``(next_globals, chosen_index, chosen_score, identity_score)``."""
    locals_ = model.local_step(data, globals_)
    stats = model.global_stats(data, locals_) if hasattr(model, "global_stats") else None
    candidates = make_candidate_set(data, config.B, rng)
    steps, scores = [], np.full(config.B, -np.inf)
    for b, cand in enumerate(candidates):
        try:
            target = model.global_fixed_point(data, cand, locals_, stats)
            grad = natural_gradient(target, globals_)
            step = take_step(globals_, grad, config.rho)
            score = model.predictive_score(data, step)
            if np.isnan(score):
                raise ArithmeticError("NaN predictive score")
        except (ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
            logger.warning("candidate %d failed and is scored -inf: %s", cand.label, exc)
            steps.append(None)
            continue
        steps.append(step)
        scores[b] = score
    if np.all(scores == -np.inf):
        raise NoValidCandidateError("every bumping candidate failed")
    best = int(np.argmax(scores))
    return steps[best], best, float(scores[best]), float(scores[0])


def bumpvi_run(model, data: Dataset, config: BumpViConfig, init: Globals | None = None):
    """Iterate bumping steps until the global step norm drops below ``config.tol``.

    ``init`` defaults to ``model.initial_globals`` drawn from the run's seeded
    stream. Returns ``(globals, trace)``.
    """
    rng = make_rng(config.seed, 1)
    if init is None:
        init = model.initial_globals(data, make_rng(config.seed, 0))
    globals_ = {k: np.array(v, dtype=float) for k, v in init.items()}
    trace = BumpViTrace()
    for it in range(config.max_iter):
        start = time.perf_counter()
        try:
            nxt, best, score, ident = bumpvi_iteration(model, data, globals_, config, rng)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            raise BumpViError(f"iteration {it}: {exc}", it) from exc
        change = _norm(natural_gradient(nxt, globals_))
        trace.records.append(
            IterationRecord(best, score, ident, change, time.perf_counter() - start)
        )
        globals_ = nxt
        if _converged(trace, config):
            trace.converged = True
            break
    return globals_, trace


def _converged(trace, config) -> bool:
    if config.criterion == "params":
        return trace.records[-1].change < config.tol
    if len(trace.records) <= config.window:
        return False
    s = np.array([r.score for r in trace.records[-config.window - 1 :]])
    rel = np.abs(np.diff(s)) / np.maximum(np.abs(s[:-1]), np.finfo(float).tiny)
    return float(rel.mean()) < config.tol
