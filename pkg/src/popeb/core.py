"""Datasets, seeded randomness, bootstrap candidates and log-space helpers.

Bootstrapped datasets are never materialised. A candidate is a vector of
resample counts over the observations of the original dataset, which is all
the weighted posteriors and reweighted variational updates need.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "Dataset",
    "Document",
    "CandidateWeights",
    "NumericError",
    "DegenerateDataError",
    "NoValidCandidateError",
    "make_rng",
    "check_seed",
    "bootstrap_sample",
    "make_candidate_set",
    "log_sum_exp",
]

KINDS = ("count", "regression", "vector", "document")
MAX_SEED = 2**64 - 1


class NumericError(ArithmeticError):
    """A numerical failure, optionally tagged with the candidate that caused it."""

    def __init__(self, message, candidate=None):
        if candidate is not None:
            message = f"candidate {candidate}: {message}"
        super().__init__(message)
        self.candidate = candidate


class DegenerateDataError(ValueError):
    pass


class NoValidCandidateError(ValueError):
    pass


class Document(NamedTuple):
    word_ids: np.ndarray
    counts: np.ndarray

    def __len__(self):
        return int(self.counts.sum())


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable, ordered collection of observations of a single kind.

    Use the ``from_*`` constructors rather than building one directly.

    * ``count``: ``values`` is an ``(n,)`` int array of nonnegative counts.
    * ``regression``: ``values`` is ``(n, D)`` features, ``targets`` is ``(n,)``.
    * ``vector``: ``values`` is ``(n, D)`` real rows (mixture-model data).
    * ``document``: ``docs`` holds sparse bag-of-words documents over
      ``vocab_size`` words.
    """

    kind: str
    values: np.ndarray | None = None
    targets: np.ndarray | None = None
    docs: tuple[Document, ...] | None = None
    vocab_size: int | None = None
    _csr: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("a dataset needs at least one observation")

    # constructors

    @classmethod
    def from_counts(cls, counts) -> "Dataset":
        arr = np.asarray(counts)
        if arr.ndim != 1:
            raise ValueError("count data must be one-dimensional")
        if arr.size and (not np.all(np.equal(np.mod(arr, 1), 0)) or arr.min() < 0):
            raise ValueError("count observations must be nonnegative integers")
        arr = arr.astype(np.int64)
        arr.setflags(write=False)
        return cls("count", values=arr)

    @classmethod
    def from_regression(cls, features, targets) -> "Dataset":
        X = np.array(features, dtype=float, ndmin=2)
        y = np.array(targets, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} feature rows but {y.shape[0]} targets")
        X.setflags(write=False)
        y.setflags(write=False)
        return cls("regression", values=X, targets=y)

    @classmethod
    def from_vectors(cls, rows) -> "Dataset":
        X = np.array(rows, dtype=float, ndmin=2)
        X.setflags(write=False)
        return cls("vector", values=X)

    @classmethod
    def from_documents(cls, docs: Sequence, vocab_size: int) -> "Dataset":
        """Build a corpus from ``(word_ids, counts)`` pairs or ``{word_id: count}`` maps."""
        out = []
        for i, doc in enumerate(docs):
            if isinstance(doc, dict):
                ids, cts = list(doc.keys()), list(doc.values())
            else:
                ids, cts = doc
            ids = np.asarray(ids, dtype=np.int64)
            cts = np.asarray(cts, dtype=np.int64)
            if ids.shape != cts.shape or ids.ndim != 1:
                raise ValueError(f"document {i}: word ids and counts must align")
            if ids.size == 0:
                raise ValueError(f"document {i} is empty")
            if np.any(cts <= 0):
                raise ValueError(f"document {i}: counts must be positive")
            if np.any(ids < 0) or np.any(ids >= vocab_size):
                raise ValueError(f"document {i}: word id outside [0, {vocab_size})")
            if np.unique(ids).size != ids.size:
                raise ValueError(f"document {i}: repeated word id")
            ids.setflags(write=False)
            cts.setflags(write=False)
            out.append(Document(ids, cts))
        return cls("document", docs=tuple(out), vocab_size=int(vocab_size))

    # shape

    @property
    def n(self) -> int:
        if self.kind == "document":
            return len(self.docs) if self.docs is not None else 0
        return 0 if self.values is None else int(self.values.shape[0])

    def __len__(self):
        return self.n

    @property
    def dim(self) -> int:
        """Feature dimension D, or the vocabulary size V for documents."""
        if self.kind == "document":
            return self.vocab_size
        if self.kind == "count":
            return 1
        return int(self.values.shape[1])

    def require(self, kind):
        if self.kind != kind:
            raise ValueError(f"expected {kind} data, got {self.kind}")
        return self

    # derived datasets

    def subset(self, index) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        if self.kind == "count":
            return Dataset.from_counts(self.values[index])
        if self.kind == "regression":
            return Dataset.from_regression(self.values[index], self.targets[index])
        if self.kind == "vector":
            return Dataset.from_vectors(self.values[index])
        return Dataset.from_documents([self.docs[i] for i in index], self.vocab_size)

    def expand(self, counts) -> "Dataset":
        """Physically replicate observation ``i`` ``counts[i]`` times."""
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (self.n,):
            raise ValueError("one count per observation required")
        return self.subset(np.repeat(np.arange(self.n), counts))

    def csr(self):
        """Flattened corpus: ``(doc_index, word_ids, counts, doc_offsets)``.

        Only defined for documents. Cached on first use.
        """
        self.require("document")
        if self._csr is None:
            lengths = np.array([d.word_ids.size for d in self.docs])
            offsets = np.concatenate([[0], np.cumsum(lengths)])
            doc_index = np.repeat(np.arange(self.n), lengths)
            ids = np.concatenate([d.word_ids for d in self.docs])
            cts = np.concatenate([d.counts for d in self.docs]).astype(float)
            object.__setattr__(self, "_csr", (doc_index, ids, cts, offsets))
        return self._csr

    def doc_lengths(self) -> np.ndarray:
        """Total word count of every document."""
        _, _, cts, offsets = self.csr()
        return np.add.reduceat(cts, offsets[:-1])


@dataclass(frozen=True, eq=False)
class CandidateWeights:
    """Resample counts over the observations of one dataset.

    ``label`` is the candidate index; 0 is reserved for the observed dataset.
    """

    counts: np.ndarray
    label: int = 0

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1:
            raise ValueError("counts must be a vector")
        if np.any(counts < 0):
            raise ValueError("resample counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def identity(cls, n: int) -> "CandidateWeights":
        return cls(np.ones(n, dtype=np.int64), 0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.counts == 1))

    def __len__(self):
        return self.counts.size


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def make_rng(seed, *stream) -> np.random.Generator:
    """PCG64 generator for ``seed``, optionally keyed by an integer stream path.

    ``make_rng(s, 2)`` and ``make_rng(s, 3)`` are independent streams; the
    mapping goes through :class:`numpy.random.SeedSequence` so it is stable
    across platforms.
    """
    entropy = [check_seed(seed), *(int(s) for s in stream)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def bootstrap_sample(dataset, rng: np.random.Generator, label: int = 1) -> CandidateWeights:
    """Resample ``n`` observations uniformly with replacement, as counts."""
    n = dataset if isinstance(dataset, (int, np.integer)) else dataset.n
    if n < 1:
        raise ValueError("cannot bootstrap an empty dataset")
    return CandidateWeights(rng.multinomial(n, np.full(n, 1.0 / n)), label)


def make_candidate_set(dataset, B: int, rng: np.random.Generator) -> list[CandidateWeights]:
    """The observed dataset (label 0) followed by ``B - 1`` bootstrap draws."""
    if B < 1:
        raise ValueError(f"need at least one candidate, got B={B}")
    n = dataset if isinstance(dataset, (int, np.integer)) else dataset.n
    out = [CandidateWeights.identity(n)]
    out.extend(bootstrap_sample(n, rng, label=b) for b in range(1, B))
    return out


def log_sum_exp(values) -> float:
    """``log(sum(exp(values)))`` without overflow; ``-inf`` if every entry is ``-inf``."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty vector")
    top = v.max()
    if top == -np.inf:
        return -np.inf
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.sum(np.exp(v - top))))
