"""Mean-field variational LDA over a flattened (CSR) corpus.

The per-document E-step runs for all documents at once: ``phi`` is stored
implicitly through ``exp(E[log theta])`` and ``exp(E[log beta])``, the usual
trick from online LDA, so only ``(nnz, K)`` temporaries are built. Each
document keeps iterating until its own mean absolute change in ``gamma``
falls below the tolerance.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln

from ..core import CandidateWeights, Dataset

logger = logging.getLogger(__name__)

__all__ = [
    "LdaPrior",
    "LdaState",
    "LocalResult",
    "lda_init",
    "lda_local_step",
    "lda_local_step_corpus",
    "lda_global_update",
    "lda_per_word_log_predictive",
    "lda_heldout_log_predictive",
    "lda_cavi",
    "LatentDirichletAllocation",
]

TINY = 1e-100
DIGAMMA_FLOOR = 1e-8


@dataclass(frozen=True)
class LdaPrior:
    K: int
    alpha: float | None = None
    eta: float = 0.005

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("need at least one topic")
        if self.alpha is None:
            object.__setattr__(self, "alpha", 1.0 / self.K)
        if self.alpha <= 0 or self.eta <= 0:
            raise ValueError("LDA hyperparameters must be positive")


@dataclass(frozen=True, eq=False)
class LocalResult:
    """Per-document ``gamma`` plus what is needed to rebuild ``phi``.

    ``phi`` for nonzero ``j`` (document ``doc_index[j]``, word ``word_ids[j]``)
    is ``exp_elog_theta[doc] * exp_elog_beta[:, word] / phinorm[j]``.
    """

    gamma: np.ndarray  # (n_docs, K)
    exp_elog_theta: np.ndarray  # (n_docs, K)
    exp_elog_beta_nz: np.ndarray  # (nnz, K)
    phinorm: np.ndarray  # (nnz,)
    iterations: np.ndarray = field(repr=False, default=None)

    def phi(self, doc_index):
        p = self.exp_elog_theta[doc_index] * self.exp_elog_beta_nz
        return p / self.phinorm[:, None]


@dataclass(frozen=True, eq=False)
class LdaState:
    lam: np.ndarray  # (K, V)
    gamma: np.ndarray | None = None

    @property
    def K(self):
        return self.lam.shape[0]

    def topics(self):
        return self.lam / self.lam.sum(axis=1, keepdims=True)

    def natural(self):
        return {"lam": self.lam.copy()}


def _digamma(x):
    if np.any(x < DIGAMMA_FLOOR):
        logger.error("clamping %d digamma arguments below %g", np.sum(x < DIGAMMA_FLOOR), DIGAMMA_FLOOR)
        x = np.maximum(x, DIGAMMA_FLOOR)
    return digamma(x)


def exp_elog_beta(lam):
    return np.exp(_digamma(lam) - _digamma(lam.sum(axis=1, keepdims=True)))


def _segment_sum(values, offsets):
    """Row sums of ``values`` over consecutive segments given by ``offsets``."""
    return np.add.reduceat(values, offsets[:-1], axis=0)


def lda_local_step_corpus(
    corpus: Dataset,
    log_beta_or_lam,
    prior: LdaPrior,
    *,
    point_topics=False,
    max_iter=100,
    tol=1e-4,
    gamma0=None,
) -> LocalResult:
    """Fit ``gamma``/``phi`` for every document against fixed topics.

    With ``point_topics`` the second argument is a row-stochastic topic matrix
    ``beta`` used as-is (fold-in); otherwise it is ``lam`` and
    ``exp(E[log beta])`` is used.
    """
    doc_index, ids, cts, offsets = corpus.csr()
    n_docs, K = corpus.n, prior.K
    if point_topics:
        eb = np.asarray(log_beta_or_lam)[:, ids].T
    else:
        eb = exp_elog_beta(np.asarray(log_beta_or_lam))[:, ids].T  # (nnz, K)
    gamma = np.ones((n_docs, K)) if gamma0 is None else np.array(gamma0, dtype=float)
    iters = np.zeros(n_docs, dtype=int)
    # only documents that have not converged are updated; the nonzero
    # subset is rebuilt whenever the active set shrinks
    act = np.arange(n_docs)
    a_doc, a_eb, a_cts, a_off = doc_index, eb, cts, offsets
    for _ in range(max_iter):
        if act.size == 0:
            break
        g = gamma[act]
        et = np.exp(_digamma(g) - _digamma(g.sum(axis=1, keepdims=True)))
        phinorm = np.einsum("jk,jk->j", et[a_doc], a_eb) + TINY
        new = prior.alpha + et * _segment_sum((a_cts / phinorm)[:, None] * a_eb, a_off)
        change = np.mean(np.abs(new - g), axis=1)
        gamma[act] = new
        iters[act] += 1
        still = change >= tol
        if not still.all():
            act = act[still]
            nz = np.repeat(still, np.diff(a_off))
            a_eb, a_cts = a_eb[nz], a_cts[nz]
            a_len = np.diff(a_off)[still]
            a_doc = np.repeat(np.arange(act.size), a_len)
            a_off = np.concatenate([[0], np.cumsum(a_len)])
    et = np.exp(_digamma(gamma) - _digamma(gamma.sum(axis=1, keepdims=True)))
    phinorm = np.einsum("jk,jk->j", et[doc_index], eb) + TINY
    return LocalResult(gamma, et, eb, phinorm, iters)


def lda_local_step(document, lam, prior: LdaPrior, max_iter=100, tol=1e-4):
    """``(gamma, phi)`` for a single document; ``phi`` has one row per distinct word."""
    if not isinstance(document, Dataset):
        document = Dataset.from_documents([document], lam.shape[1])
    res = lda_local_step_corpus(document, lam, prior, max_iter=max_iter, tol=tol)
    doc_index = document.csr()[0]
    return res.gamma[0], res.phi(doc_index)


def _doc_counts(weights, n):
    if weights is None:
        return np.ones(n)
    c = weights.counts if isinstance(weights, CandidateWeights) else np.asarray(weights)
    if c.shape != (n,):
        raise ValueError(f"expected {n} document counts, got shape {c.shape}")
    return c.astype(float)


def topic_word_stats(corpus: Dataset, local: LocalResult, weights=None) -> np.ndarray:
    """``sum_d c_d sum_w count_dw phi_dwk`` as a ``(K, V)`` matrix."""
    doc_index, ids, cts, _ = corpus.csr()
    c = _doc_counts(weights, corpus.n)
    contrib = local.phi(doc_index) * (cts * c[doc_index])[:, None]  # (nnz, K)
    K = contrib.shape[1]
    out = np.zeros((K, corpus.vocab_size))
    for k in range(K):
        out[k] = np.bincount(ids, weights=contrib[:, k], minlength=corpus.vocab_size)
    return out


def lda_global_update(corpus: Dataset, weights, local: LocalResult, prior: LdaPrior) -> np.ndarray:
    return prior.eta + topic_word_stats(corpus, local, weights)


def lda_heldout_log_predictive(state: LdaState, prior: LdaPrior, corpus: Dataset, max_iter=100, tol=1e-4, gamma0=None):
    """Per-document ``sum_w count_w log sum_k theta_k beta_kw`` by fold-in.

    Returns ``(log_lik, lengths)`` so callers can form per-word averages.
    """
    beta = state.topics()
    res = lda_local_step_corpus(
        corpus, beta, prior, point_topics=True, max_iter=max_iter, tol=tol, gamma0=gamma0
    )
    doc_index, ids, cts, offsets = corpus.csr()
    theta = res.gamma / res.gamma.sum(axis=1, keepdims=True)
    mix = np.einsum("jk,jk->j", theta[doc_index], beta[:, ids].T)
    ll = _segment_sum(cts * np.log(mix), offsets)
    return ll, corpus.doc_lengths()


def lda_per_word_log_predictive(state: LdaState, prior: LdaPrior, document) -> float:
    """Average per-word log predictive of one document, by fold-in."""
    if not isinstance(document, Dataset):
        ids, cts = document if not isinstance(document, dict) else (list(document), list(document.values()))
        if len(ids) == 0:
            raise ValueError("cannot evaluate an empty document")
        document = Dataset.from_documents([(ids, cts)], state.lam.shape[1])
    ll, lengths = lda_heldout_log_predictive(state, prior, document)
    return float(ll[0] / lengths[0])


def lda_init(corpus: Dataset, prior: LdaPrior, rng: np.random.Generator) -> LdaState:
    return LdaState(prior.eta + rng.uniform(0.0, 1.0, size=(prior.K, corpus.vocab_size)))


def lda_cavi(corpus: Dataset, prior: LdaPrior, init: LdaState, max_iter=500, tol=1e-2, weights=None):
    """Batch variational EM from ``init``; stops when the ``lam`` step norm is below ``tol``."""
    lam = init.lam
    gamma = None
    history = []
    for it in range(max_iter):
        local = lda_local_step_corpus(corpus, lam, prior, gamma0=gamma)
        new = lda_global_update(corpus, weights, local, prior)
        step = float(np.sqrt(np.sum((new - lam) ** 2)))
        history.append({"iteration": it, "change": step})
        lam, gamma = new, local.gamma
        if step < tol:
            break
    return LdaState(lam, gamma), history


class LatentDirichletAllocation:
    """Adapter exposing LDA to :func:`popeb.bumpvi.bumpvi_run`.

    Candidate steps are scored by folding every training document into the
    candidate topics with a capped number of local iterations.
    """

    def __init__(self, prior: LdaPrior, score_iters=20):
        self.prior = prior
        self.score_iters = score_iters
        self._warm = None

    def initial_globals(self, data, rng):
        self._warm = None
        return lda_init(data, self.prior, rng).natural()

    def _gamma0(self, data):
        if self._warm is not None and self._warm[0] is data:
            return self._warm[1]
        return None

    def local_step(self, data, globals_):
        # warm start from the previous sweep, as batch CAVI does
        local = lda_local_step_corpus(data, globals_["lam"], self.prior, gamma0=self._gamma0(data))
        self._warm = (data, local.gamma)
        return local

    def global_stats(self, data, locals_):
        doc_index, ids, cts, _ = data.csr()
        return locals_.phi(doc_index) * cts[:, None], ids

    def global_fixed_point(self, data, weights, locals_, stats=None):
        if stats is None:
            stats = self.global_stats(data, locals_)
        contrib, ids = stats
        doc_index = data.csr()[0]
        c = _doc_counts(weights, data.n)[doc_index]
        weighted = contrib * c[:, None]
        lam = np.empty((self.prior.K, data.vocab_size))
        for k in range(self.prior.K):
            lam[k] = np.bincount(ids, weights=weighted[:, k], minlength=data.vocab_size)
        return {"lam": lam + self.prior.eta}

    def predictive_score(self, data, globals_):
        state = LdaState(globals_["lam"])
        ll, _ = lda_heldout_log_predictive(
            state, self.prior, data, max_iter=self.score_iters, gamma0=self._gamma0(data)
        )
        return float(ll.sum())

    def state(self, globals_, locals_=None):
        return LdaState(globals_["lam"], None if locals_ is None else locals_.gamma)

    def heldout_log_predictive(self, globals_, data):
        ll, lengths = lda_heldout_log_predictive(LdaState(globals_["lam"]), self.prior, data)
        return ll, lengths
