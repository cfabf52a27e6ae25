"""File loaders and synthetic data generators for the experiments."""
from __future__ import annotations

import logging
import re
from collections import defaultdict
from pathlib import Path

import numpy as np

from .core import Dataset, make_rng

logger = logging.getLogger(__name__)

__all__ = [
    "ParseError",
    "load_table",
    "load_vectors",
    "load_bow",
    "standardize",
    "synth_contaminated_counts",
    "synth_regression",
    "synth_gmm",
    "synth_corpus",
]

_SPLIT = re.compile(r"[,\s]+")


class ParseError(ValueError):
    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.path = path


def _numeric_rows(path):
    rows, lines = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            cells = [c for c in _SPLIT.split(text) if c]
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                raise ParseError(f"non-numeric cell in {text!r}", lineno, path) from None
            lines.append(lineno)
    if not rows:
        raise ParseError("no data rows", path=path)
    width = len(rows[0])
    for row, lineno in zip(rows, lines):
        if len(row) != width:
            raise ParseError(f"expected {width} columns, found {len(row)}", lineno, path)
    return np.array(rows)


def standardize(X, mean=None, scale=None):
    """Zero-mean, unit-variance columns; constant columns are only centred."""
    X = np.asarray(X, dtype=float)
    mean = X.mean(axis=0) if mean is None else mean
    if scale is None:
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
    return (X - mean) / scale, mean, scale


def load_table(path, target_scale=1.0, intercept=True) -> Dataset:
    """Regression table: first column the target, the rest features.

    Features are standardised, then a constant column is appended. The target
    is multiplied by ``target_scale`` (0.01 turns body-fat percentages into
    fractions).
    """
    table = _numeric_rows(path)
    if table.shape[1] < 2:
        raise ParseError("need a target column and at least one feature", path=path)
    y = table[:, 0] * target_scale
    X, _, _ = standardize(table[:, 1:])
    if intercept:
        X = np.hstack([X, np.ones((X.shape[0], 1))])
    return Dataset.from_regression(X, y)


def load_vectors(path, normalize=True) -> Dataset:
    """Rows of real features (e.g. image histograms), optionally standardised."""
    X = _numeric_rows(path)
    if normalize:
        X, _, _ = standardize(X)
    return Dataset.from_vectors(X)


def load_bow(path) -> Dataset:
    """UCI-style bag of words.

    Three header lines give the number of documents, the vocabulary size and
    the number of nonzeros; each following line is ``doc word count`` with
    1-based ids. Repeated ``(doc, word)`` pairs are summed.
    """
    with open(path) as fh:
        lines = [(i, ln.strip()) for i, ln in enumerate(fh, 1)]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if len(lines) < 3:
        raise ParseError("missing header (n_docs, V, nnz)", path=path)
    header = []
    for lineno, text in lines[:3]:
        try:
            header.append(int(text))
        except ValueError:
            raise ParseError(f"bad header value {text!r}", lineno, path) from None
    n_docs, V, nnz = header
    if n_docs < 1 or V < 1:
        raise ParseError("n_docs and V must be positive", path=path)
    docs = defaultdict(lambda: defaultdict(int))
    triples = lines[3:]
    for lineno, text in triples:
        parts = text.split()
        if len(parts) != 3:
            raise ParseError(f"expected 'doc word count', got {text!r}", lineno, path)
        try:
            d, w, c = (int(p) for p in parts)
        except ValueError:
            raise ParseError(f"non-integer triple {text!r}", lineno, path) from None
        if not 1 <= d <= n_docs:
            raise ParseError(f"document id {d} outside 1..{n_docs}", lineno, path)
        if not 1 <= w <= V:
            raise ParseError(f"word id {w} outside 1..{V}", lineno, path)
        if c <= 0:
            raise ParseError(f"count must be positive, got {c}", lineno, path)
        docs[d - 1][w - 1] += c
    if len(triples) != nnz:
        logger.warning("%s: header says %d nonzeros, read %d", path, nnz, len(triples))
    empty = [d + 1 for d in range(n_docs) if d not in docs]
    if empty:
        raise ParseError(f"documents without words: {empty[:5]}", path=path)
    out = []
    for d in range(n_docs):
        ids = np.array(sorted(docs[d]))
        out.append((ids, np.array([docs[d][w] for w in ids])))
    return Dataset.from_documents(out, V)


# synthetic data


def synth_contaminated_counts(n, rate1=5.0, rate2=50.0, contamination=0.05, seed=0, stream=100) -> Dataset:
    """Poisson(rate1) counts, each replaced by a Poisson(rate2) draw with probability ``contamination``.

    ``stream`` selects an independent draw for the same seed (e.g. a test set).
    """
    if not 0 <= contamination < 1:
        raise ValueError("contamination must lie in [0, 1)")
    rng = make_rng(seed, stream)
    bad = rng.random(n) < contamination
    x = np.where(bad, rng.poisson(rate2, n), rng.poisson(rate1, n))
    return Dataset.from_counts(x)


def synth_regression(n=252, n_features=14, outlier_frac=0.05, noise=0.02, outlier_scale=0.15, seed=0):
    """Correlated features, a linear target near body-fat fractions, and gross target outliers.

    Returns unstandardised ``(X, y)``; the experiment standardises on the
    full table like :func:`load_table` does.
    """
    rng = make_rng(seed, 101)
    latent = rng.normal(size=(n, 3))
    mix = rng.normal(size=(3, n_features))
    X = latent @ mix + 0.5 * rng.normal(size=(n, n_features))
    coef = rng.normal(scale=0.03, size=n_features) * (rng.random(n_features) < 0.6)
    y = 0.19 + X @ coef / np.sqrt(n_features) + noise * rng.normal(size=n)
    bad = rng.random(n) < outlier_frac
    y = np.where(bad, y + outlier_scale * rng.choice([-1.0, 1.0], n) * (1 + rng.random(n)), y)
    return X, y


def synth_gmm(n, dim=10, n_clusters=8, contamination=0.05, seed=0, separation=3.0):
    """Diagonal Gaussian clusters plus uniform off-manifold contamination. Not standardised."""
    rng = make_rng(seed, 102)
    centres = rng.normal(scale=separation, size=(n_clusters, dim))
    scales = rng.uniform(0.5, 1.5, size=(n_clusters, dim))
    props = rng.dirichlet(np.full(n_clusters, 5.0))
    z = rng.choice(n_clusters, size=n, p=props)
    X = centres[z] + scales[z] * rng.normal(size=(n, dim))
    bad = rng.random(n) < contamination
    lo, hi = centres.min(axis=0) - 3, centres.max(axis=0) + 3
    X[bad] = rng.uniform(lo, hi, size=(bad.sum(), dim))
    return X


def synth_corpus(n_docs, vocab_size=500, n_topics=6, doc_length=80, topic_conc=0.05, doc_conc=0.3, contamination=0.05, seed=0):
    """LDA-generated documents; a ``contamination`` share draw words uniformly instead."""
    rng = make_rng(seed, 103)
    topics = rng.dirichlet(np.full(vocab_size, topic_conc), size=n_topics)
    docs = []
    for _ in range(n_docs):
        length = max(1, rng.poisson(doc_length))
        if rng.random() < contamination:
            word_dist = np.full(vocab_size, 1.0 / vocab_size)
        else:
            theta = rng.dirichlet(np.full(n_topics, doc_conc))
            word_dist = theta @ topics
            word_dist /= word_dist.sum()
        counts = rng.multinomial(length, word_dist)
        ids = np.flatnonzero(counts)
        docs.append((ids, counts[ids]))
    return docs, vocab_size
