"""Candidate scoring, bumping (MAP) selection and full-Bayes mixture weights.

Any model with the two-method :class:`PosteriorPredictiveModel` surface can be
plugged in. Everything is in natural-log space: a product of a few thousand
predictive densities underflows a double long before it becomes interesting.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Protocol, Sequence

import numpy as np

from .core import CandidateWeights, Dataset, NoValidCandidateError, NumericError, log_sum_exp

logger = logging.getLogger(__name__)

__all__ = [
    "PosteriorPredictiveModel",
    "ScoreTable",
    "PopEB",
    "score_candidates",
    "select_map",
    "fb_weights",
    "map_log_predictive",
    "fb_log_predictive",
]


class PosteriorPredictiveModel(Protocol):
    def fit(self, data: Dataset, weights: CandidateWeights) -> Any:
        """Posterior given ``data`` reweighted by resample counts. Deterministic."""

    def log_predictive(self, post: Any, data: Dataset) -> np.ndarray:
        """Per-observation log predictive density of every row of ``data``."""


@dataclass(frozen=True, eq=False)
class ScoreTable:
    scores: np.ndarray
    candidate_ids: tuple[int, ...]

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("a score table needs at least one score")
        if np.any(np.isnan(s)) or np.any(s == np.inf):
            raise ValueError("scores must be finite or -inf")
        if len(self.candidate_ids) != s.size:
            raise ValueError("one candidate id per score required")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)

    def __len__(self):
        return self.scores.size


def _fit_and_score(model, dataset, cand):
    try:
        post = model.fit(dataset, cand)
        score = float(np.sum(model.log_predictive(post, dataset)))
    except NumericError as exc:
        if exc.candidate is None:
            raise NumericError(str(exc), cand.label) from exc
        raise
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        raise NumericError(str(exc), cand.label) from exc
    if np.isnan(score):
        raise NumericError("predictive score is NaN", cand.label)
    return post, score


def _check_candidates(dataset, candidates):
    if len(candidates) == 0:
        raise ValueError("no candidates to score")
    for cand in candidates:
        if len(cand) != dataset.n:
            raise ValueError(
                f"candidate {cand.label} has {len(cand)} counts for {dataset.n} observations"
            )


def score_candidates(model, dataset: Dataset, candidates: Sequence[CandidateWeights]) -> ScoreTable:
    """Total log predictive of the original dataset under each candidate's posterior."""
    return PopEB(model, dataset, candidates).table


def select_map(table: ScoreTable) -> int:
    """Position of the best score; the lowest position wins ties."""
    s = table.scores
    if np.all(s == -np.inf):
        raise NoValidCandidateError("every candidate scored -inf")
    return int(np.argmax(s))


def fb_weights(table: ScoreTable) -> np.ndarray:
    s = table.scores
    if np.all(s == -np.inf):
        raise NoValidCandidateError("every candidate scored -inf")
    return np.exp(s - log_sum_exp(s))


class PopEB:
    """Fitted candidate posteriors for one dataset, reused across predictions.

    >>> from popeb.conjugate import GammaPoissonModel, GammaParams
    >>> from popeb.core import Dataset, CandidateWeights
    >>> data = Dataset.from_counts([5, 4, 6])
    >>> fit = PopEB(GammaPoissonModel(GammaParams(2.5, 0.5)), data, [CandidateWeights.identity(3)])
    >>> fit.map_index
    0
    """

    def __init__(self, model, dataset: Dataset, candidates: Sequence[CandidateWeights]):
        _check_candidates(dataset, candidates)
        self.model = model
        self.dataset = dataset
        self.candidates = list(candidates)
        fitted = [_fit_and_score(model, dataset, c) for c in self.candidates]
        self.posteriors = [p for p, _ in fitted]
        self.table = ScoreTable(
            np.array([s for _, s in fitted]), tuple(c.label for c in self.candidates)
        )

    @property
    def map_index(self) -> int:
        return select_map(self.table)

    @property
    def map_posterior(self):
        return self.posteriors[self.map_index]

    @property
    def weights(self) -> np.ndarray:
        return fb_weights(self.table)

    def candidate_log_predictive(self, new: Dataset) -> np.ndarray:
        """``(B, m)`` log densities of ``new`` under every candidate posterior."""
        return np.vstack([self.model.log_predictive(p, new) for p in self.posteriors])

    def map_log_predictive(self, new: Dataset) -> np.ndarray:
        return self.model.log_predictive(self.map_posterior, new)

    def fb_log_predictive(self, new: Dataset) -> np.ndarray:
        w = self.weights
        with np.errstate(divide="ignore"):
            logw = np.log(w)
        keep = w > 0
        dens = np.vstack(
            [self.model.log_predictive(p, new) for p, k in zip(self.posteriors, keep) if k]
        )
        terms = logw[keep][:, None] + dens
        top = terms.max(axis=0)
        return top + np.log(np.exp(terms - top).sum(axis=0))

    def map_predictive_mean(self, new: Dataset) -> np.ndarray:
        return self.model.predictive_mean(self.map_posterior, new)

    def fb_predictive_mean(self, new: Dataset) -> np.ndarray:
        w = self.weights
        means = np.vstack([self.model.predictive_mean(p, new) for p in self.posteriors])
        return w @ means


def map_log_predictive(model, dataset, candidates, new: Dataset) -> np.ndarray:
    return PopEB(model, dataset, candidates).map_log_predictive(new)


def fb_log_predictive(model, dataset, candidates, new: Dataset) -> np.ndarray:
    return PopEB(model, dataset, candidates).fb_log_predictive(new)
