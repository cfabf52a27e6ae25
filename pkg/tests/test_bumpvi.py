import numpy as np
import pytest

from popeb.bumpvi import (
    BumpViConfig,
    BumpViError,
    bumpvi_iteration,
    bumpvi_run,
    natural_gradient,
    take_step,
)
from popeb.core import Dataset, NoValidCandidateError, NumericError, make_rng
from popeb.data import synth_corpus, synth_gmm
from popeb.vi.gmm import GaussianMixture, GmmPrior, GmmState, gmm_cavi, gmm_global_step, gmm_local_step
from popeb.vi.lda import LatentDirichletAllocation, LdaPrior, LdaState, lda_cavi


def small_gmm(n=20, seed=0):
    return Dataset.from_vectors(synth_gmm(n, dim=2, n_clusters=3, seed=seed))


def test_natural_gradient():
    lam = {"x": np.array([1.0, 2.0]), "y": np.ones((2, 2))}
    assert all(np.all(v == 0) for v in natural_gradient(lam, lam).values())
    target = {"x": np.array([3.0, -2.0]), "y": np.zeros((2, 2))}
    g = natural_gradient(target, lam)
    assert np.array_equal(take_step(lam, g, 1.0)["x"], target["x"])
    step = take_step(lam, g, 0.1)
    assert np.allclose(step["x"], 0.9 * lam["x"] + 0.1 * target["x"], atol=1e-15)
    with pytest.raises(ValueError):
        natural_gradient({"x": np.ones(3), "y": np.ones((2, 2))}, lam)
    with pytest.raises(ValueError):
        natural_gradient({"x": np.ones(2)}, lam)


def test_config_validation():
    for bad in (dict(B=0), dict(rho=0), dict(rho=1.5), dict(tol=0), dict(max_iter=-1), dict(criterion="x")):
        with pytest.raises(ValueError):
            BumpViConfig(**bad)


def _close(a, b, tol):
    for k in a:
        assert np.allclose(a[k], b[k], rtol=tol, atol=tol), k


def test_single_candidate_full_step_matches_cavi():
    data = small_gmm()
    prior = GmmPrior(3)
    model = GaussianMixture(prior)
    lam = model.initial_globals(data, make_rng(1))
    cavi = GmmState.from_natural(lam)
    cfg = BumpViConfig(B=1, rho=1.0)
    rng = make_rng(0)
    for _ in range(25):
        lam, chosen, _, _ = bumpvi_iteration(model, data, lam, cfg, rng)
        assert chosen == 0
        cavi = gmm_global_step(data, None, gmm_local_step(data, None, cavi), prior)
        _close(lam, cavi.natural(), 1e-10)


def test_single_candidate_run_matches_lda_cavi():
    docs, V = synth_corpus(30, 40, n_topics=3, doc_length=20, seed=2)
    data = Dataset.from_documents(docs, V)
    prior = LdaPrior(3)
    model = LatentDirichletAllocation(prior)
    init = model.initial_globals(data, make_rng(2))
    lam, trace = bumpvi_run(model, data, BumpViConfig(B=1, rho=1.0, max_iter=8, tol=1e-300), init=init)
    ref, _ = lda_cavi(data, prior, LdaState(init["lam"]), max_iter=8, tol=0.0)
    assert trace.iterations == 8
    assert np.allclose(lam["lam"], ref.lam, rtol=1e-10, atol=1e-10)


def test_fixed_point_is_stationary():
    data = small_gmm(60, 3)
    prior = GmmPrior(3)
    model = GaussianMixture(prior)
    state, _ = gmm_cavi(data, prior, GmmState.from_natural(model.initial_globals(data, make_rng(3))), max_iter=5000, tol=1e-11)
    lam = state.natural()
    nxt, *_ = bumpvi_iteration(model, data, lam, BumpViConfig(B=1, rho=1.0), make_rng(0))
    _close(nxt, lam, 1e-8)


class CountingModel:
    def __init__(self, inner):
        self.inner = inner
        self.local_calls = 0
        self.fixed_point_calls = 0

    def initial_globals(self, data, rng):
        return self.inner.initial_globals(data, rng)

    def local_step(self, data, g):
        self.local_calls += 1
        return self.inner.local_step(data, g)

    def global_stats(self, data, locals_):
        return self.inner.global_stats(data, locals_)

    def global_fixed_point(self, data, w, locals_, stats=None):
        self.fixed_point_calls += 1
        return self.inner.global_fixed_point(data, w, locals_, stats)

    def predictive_score(self, data, g):
        return self.inner.predictive_score(data, g)


@pytest.mark.parametrize("B", [1, 4, 12])
def test_one_local_pass_per_iteration(B):
    data = small_gmm(50, 4)
    model = CountingModel(GaussianMixture(GmmPrior(3)))
    _, trace = bumpvi_run(model, data, BumpViConfig(B=B, rho=0.2, max_iter=7, tol=1e-300))
    assert trace.iterations == 7
    assert model.local_calls == 7
    assert model.fixed_point_calls == 7 * B


def test_chosen_never_worse_than_identity_and_deterministic():
    data = small_gmm(80, 5)
    model = GaussianMixture(GmmPrior(4))
    cfg = BumpViConfig(B=6, rho=0.1, max_iter=15, seed=9)
    g1, t1 = bumpvi_run(model, data, cfg)
    g2, t2 = bumpvi_run(model, data, cfg)
    assert all(r.score >= r.identity_score for r in t1.records)
    assert t1.chosen == t2.chosen
    assert [r.score for r in t1.records] == [r.score for r in t2.records]
    _close(g1, g2, 0)


def test_zero_iterations_returns_init():
    data = small_gmm()
    model = GaussianMixture(GmmPrior(2))
    init = model.initial_globals(data, make_rng(0))
    g, trace = bumpvi_run(model, data, BumpViConfig(max_iter=0), init=init)
    assert trace.iterations == 0 and not trace.converged
    _close(g, init, 0)


def test_params_criterion_stops_on_small_step():
    data = small_gmm(60, 6)
    model = GaussianMixture(GmmPrior(2))
    _, trace = bumpvi_run(model, data, BumpViConfig(B=1, rho=0.5, tol=1e-3, max_iter=500))
    assert trace.converged
    assert trace.records[-1].change < 1e-3
    assert all(r.change >= 1e-3 for r in trace.records[:-1])


class Flaky(CountingModel):
    """Candidate targets fail for odd labels, or for all labels."""

    def __init__(self, inner, fail_all=False):
        super().__init__(inner)
        self.fail_all = fail_all

    def global_fixed_point(self, data, w, locals_, stats=None):
        if self.fail_all or w.label % 2:
            raise NumericError("boom", w.label)
        return super().global_fixed_point(data, w, locals_, stats)


def test_failed_candidates_are_skipped():
    data = small_gmm(40, 7)
    model = Flaky(GaussianMixture(GmmPrior(2)))
    lam = model.initial_globals(data, make_rng(0))
    _, best, _, _ = bumpvi_iteration(model, data, lam, BumpViConfig(B=6), make_rng(1))
    assert best % 2 == 0


def test_all_candidates_failing_raises():
    data = small_gmm(40, 7)
    model = Flaky(GaussianMixture(GmmPrior(2)), fail_all=True)
    lam = model.initial_globals(data, make_rng(0))
    with pytest.raises(NoValidCandidateError):
        bumpvi_iteration(model, data, lam, BumpViConfig(B=3), make_rng(1))
    with pytest.raises(BumpViError) as err:
        bumpvi_run(model, data, BumpViConfig(B=3, max_iter=5), init=lam)
    assert err.value.iteration == 0
