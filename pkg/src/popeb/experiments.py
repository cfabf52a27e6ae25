"""The four experiment pipelines and their CSV outputs.

Each ``run_*_seed`` function returns plain row dicts for one seed; all
randomness is drawn from streams keyed by the seed, so a row is reproduced
exactly by re-running its seed with the same configuration. Wall-clock
times go to a separate ``*_timing.csv`` so the result files stay
byte-identical across runs.
"""
from __future__ import annotations

import csv
import logging
import time
from pathlib import Path

import numpy as np

from .bumpvi import BumpViConfig, bumpvi_run
from .config import ExperimentConfig
from .conjugate import (
    BayesLinearRegression,
    GammaParams,
    GammaPoissonModel,
    eb_moment_match_gamma,
)
from .core import Dataset, make_candidate_set, make_rng
from .data import (
    load_bow,
    load_table,
    load_vectors,
    standardize,
    synth_contaminated_counts,
    synth_corpus,
    synth_gmm,
    synth_regression,
)
from .evaluation import mean_log_predictive, mse_mae, pmf_total_variation, poisson_pmf
from .predictive import PopEB
from .vi.gmm import GaussianMixture, GmmPrior, GmmState, gmm_cavi, gmm_elbo, gmm_local_step
from .vi.lda import LatentDirichletAllocation, LdaPrior, LdaState, lda_cavi

logger = logging.getLogger(__name__)

COLUMNS = {
    "gamma-poisson": [
        "experiment", "config_hash", "seed", "prior", "method", "prior_shape", "prior_rate",
        "logp", "tv_dominant", "tv_population", "posterior_mean", "chosen",
    ],
    "blr": [
        "experiment", "config_hash", "seed", "split", "method", "logp", "mse", "mae", "chosen",
    ],
    "gmm": [
        "experiment", "config_hash", "seed", "K", "B", "method", "logp", "train_elbo",
        "iterations", "converged", "chosen_trace",
    ],
    "lda": [
        "experiment", "config_hash", "seed", "K", "B", "method", "per_word_logp",
        "iterations", "converged", "chosen_trace",
    ],
}

TIMING_COLUMNS = ["experiment", "config_hash", "seed", "K", "B", "method", "iterations", "seconds", "median_iteration_seconds"]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return str(v)


def write_csv(path, columns, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c, "")) for c in columns])


def split_indices(n, train_frac, rng):
    perm = rng.permutation(n)
    n_train = int(round(train_frac * n))
    if not 0 < n_train < n:
        raise ValueError(f"split {train_frac} of {n} leaves an empty side")
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


# gamma-poisson


def _prior_variants(cfg: ExperimentConfig, train: Dataset):
    variants = []
    for name in cfg.get("priors").split(","):
        name = name.strip()
        if name == "base":
            variants.append(("base", GammaParams(cfg.float("prior_shape"), cfg.float("prior_rate"))))
        elif name == "sharp":
            variants.append(("sharp", GammaParams(cfg.float("sharp_shape"), cfg.float("sharp_rate"))))
        elif name:
            raise ValueError(f"unknown prior variant {name!r}")
    if "eb" in cfg.methods:
        variants.append(("eb", eb_moment_match_gamma(train)))
    return variants


def run_gamma_poisson_seed(cfg: ExperimentConfig, seed: int):
    """Rows for one seed, plus the predictive pmfs on ``0..pmf_kmax``."""
    n, B = cfg.int("n"), cfg.int("B")
    rate1, rate2, eps = cfg.float("rate1"), cfg.float("rate2"), cfg.float("contamination")
    train = synth_contaminated_counts(n, rate1, rate2, eps, seed=seed)
    test = synth_contaminated_counts(cfg.int("n_test"), rate1, rate2, eps, seed=seed, stream=104)
    kmax = cfg.int("pmf_kmax")
    grid = Dataset.from_counts(np.arange(kmax + 1))
    dominant = poisson_pmf(rate1, kmax)
    population = (1 - eps) * dominant + eps * poisson_pmf(rate2, kmax)
    candidates = make_candidate_set(train, B, make_rng(seed, 1))
    rows, pmfs = [], {"population": population, "dominant": dominant}
    for prior_name, prior in _prior_variants(cfg, train):
        fit = PopEB(GammaPoissonModel(prior), train, candidates)
        bayes_post = fit.posteriors[0]
        w = fit.weights
        methods = {
            "bayes": (
                fit.model.log_predictive(bayes_post, grid),
                fit.model.log_predictive(bayes_post, test),
                bayes_post.mean,
                "",
            ),
            "popeb-map": (
                fit.map_log_predictive(grid),
                fit.map_log_predictive(test),
                fit.map_posterior.mean,
                fit.map_index,
            ),
            "popeb-fb": (
                fit.fb_log_predictive(grid),
                fit.fb_log_predictive(test),
                float(w @ np.array([p.mean for p in fit.posteriors])),
                "",
            ),
        }
        for method, (grid_lp, test_lp, post_mean, chosen) in methods.items():
            label = method
            if method == "bayes" and prior_name == "eb":
                label = "eb"
            if label not in cfg.methods:
                continue
            pmf = np.exp(grid_lp)
            pmfs[f"{prior_name}:{label}"] = pmf
            rows.append({
                "seed": seed,
                "prior": prior_name,
                "method": label,
                "prior_shape": prior.shape,
                "prior_rate": prior.rate,
                "logp": mean_log_predictive(test_lp),
                "tv_dominant": pmf_total_variation(pmf, dominant),
                "tv_population": pmf_total_variation(pmf, population),
                "posterior_mean": post_mean,
                "chosen": chosen,
            })
    return rows, pmfs


# regression


def _regression_table(cfg, seed):
    source = cfg.get("data")
    if source == "synthetic":
        X, y = synth_regression(
            cfg.int("n"), cfg.int("n_features"), cfg.float("outlier_frac"), seed=seed
        )
        Xs, _, _ = standardize(X)
        Xs = np.hstack([Xs, np.ones((Xs.shape[0], 1))])
        return Dataset.from_regression(Xs, y * cfg.float("target_scale"))
    return load_table(source, target_scale=cfg.float("target_scale"))


def run_blr_seed(cfg: ExperimentConfig, seed: int):
    full = _regression_table(cfg, seed)
    model = BayesLinearRegression()
    rows = []
    for split in range(cfg.int("n_splits")):
        tr_idx, te_idx = split_indices(full.n, cfg.float("split"), make_rng(seed, 2, split))
        train, test = full.subset(tr_idx), full.subset(te_idx)
        fit = PopEB(model, train, make_candidate_set(train, cfg.int("B"), make_rng(seed, 3, split)))
        post = fit.posteriors[0]
        results = {
            "bayes": (model.log_predictive(post, test), model.predictive_mean(post, test), ""),
            "popeb-map": (fit.map_log_predictive(test), fit.map_predictive_mean(test), fit.map_index),
            "popeb-fb": (fit.fb_log_predictive(test), fit.fb_predictive_mean(test), ""),
        }
        for method in cfg.methods:
            lp, pred, chosen = results[method]
            mse, mae = mse_mae(pred, test.targets)
            rows.append({
                "seed": seed, "split": split, "method": method,
                "logp": mean_log_predictive(lp), "mse": mse, "mae": mae, "chosen": chosen,
            })
    return rows


# variational experiments


def _vi_config(cfg, B, seed):
    return BumpViConfig(
        B=B,
        rho=cfg.float("rho"),
        tol=cfg.float("tol"),
        max_iter=cfg.int("max_iter"),
        seed=seed,
        criterion=cfg.get("criterion"),
    )


def _gmm_data(cfg, seed):
    source = cfg.get("data")
    if source == "synthetic":
        X = synth_gmm(cfg.int("n"), cfg.int("dim"), cfg.int("n_clusters"), cfg.float("contamination"), seed=seed)
        X, _, _ = standardize(X)
        full = Dataset.from_vectors(X)
    else:
        full = load_vectors(source)
    tr, te = split_indices(full.n, cfg.float("split"), make_rng(seed, 2))
    return full.subset(tr), full.subset(te)


def run_gmm_seed(cfg: ExperimentConfig, seed: int):
    train, test = _gmm_data(cfg, seed)
    rows, timing = [], []
    for K in cfg.ints("K"):
        prior = GmmPrior(K)
        model = GaussianMixture(prior)
        init = model.initial_globals(train, make_rng(seed, 4, K))
        if "cavi" in cfg.methods:
            start = time.perf_counter()
            state, hist = gmm_cavi(
                train, prior, GmmState.from_natural(init), cfg.int("max_iter"), cfg.float("cavi_tol")
            )
            secs = time.perf_counter() - start
            state = GmmState.from_natural(state.natural(), gmm_local_step(train, None, state))
            rows.append({
                "seed": seed, "K": K, "B": "", "method": "cavi",
                "logp": mean_log_predictive(model.heldout_log_predictive(state.natural(), test)),
                "train_elbo": gmm_elbo(train, None, state, prior),
                "iterations": len(hist),
                "converged": bool(hist and hist[-1]["change"] < cfg.float("cavi_tol")),
                "chosen_trace": "",
            })
            timing.append({"seed": seed, "K": K, "B": "", "method": "cavi", "iterations": len(hist),
                           "seconds": secs, "median_iteration_seconds": secs / max(len(hist), 1)})
        if "bumpvi" in cfg.methods:
            for B in cfg.ints("B"):
                start = time.perf_counter()
                g, trace = bumpvi_run(model, train, _vi_config(cfg, B, seed), init=init)
                secs = time.perf_counter() - start
                state = GmmState.from_natural(g, gmm_local_step(train, None, GmmState.from_natural(g)))
                rows.append({
                    "seed": seed, "K": K, "B": B, "method": "bumpvi",
                    "logp": mean_log_predictive(model.heldout_log_predictive(g, test)),
                    "train_elbo": gmm_elbo(train, None, state, prior),
                    "iterations": trace.iterations,
                    "converged": trace.converged,
                    "chosen_trace": ";".join(map(str, trace.chosen)),
                })
                timing.append({
                    "seed": seed, "K": K, "B": B, "method": "bumpvi", "iterations": trace.iterations,
                    "seconds": secs,
                    "median_iteration_seconds": float(np.median([r.seconds for r in trace.records])) if trace.records else 0.0,
                })
    return rows, timing


def _lda_data(cfg, seed):
    source = cfg.get("data")
    if source == "synthetic":
        docs, V = synth_corpus(
            cfg.int("n"), cfg.int("V"), cfg.int("n_topics"), cfg.int("doc_length"),
            contamination=cfg.float("contamination"), seed=seed,
        )
        full = Dataset.from_documents(docs, V)
    else:
        full = load_bow(source)
    tr, te = split_indices(full.n, cfg.float("split"), make_rng(seed, 2))
    return full.subset(tr), full.subset(te)


def _vocabulary(cfg, V):
    path = cfg.get("vocab")
    if not path:
        return [str(i) for i in range(V)]
    words = Path(path).read_text().split()
    if len(words) != V:
        raise ValueError(f"vocabulary file has {len(words)} words, corpus has V={V}")
    return words


def _top_words(lam, vocab, n):
    order = np.argsort(-lam, axis=1, kind="stable")[:, :n]
    return [" ".join(vocab[w] for w in row) for row in order]


def run_lda_seed(cfg: ExperimentConfig, seed: int):
    train, test = _lda_data(cfg, seed)
    vocab = _vocabulary(cfg, train.vocab_size)
    rows, timing, topics = [], [], []

    def per_word(state):
        ll, lengths = model.heldout_log_predictive(state.natural(), test)
        return float(ll.sum() / lengths.sum())

    for K in cfg.ints("K"):
        prior = LdaPrior(K, eta=cfg.float("eta"))
        model = LatentDirichletAllocation(prior, score_iters=cfg.int("score_iters"))
        init = model.initial_globals(train, make_rng(seed, 4, K))
        runs = []
        if "cavi" in cfg.methods:
            start = time.perf_counter()
            state, hist = lda_cavi(train, prior, LdaState(init["lam"]), cfg.int("max_iter"), cfg.float("cavi_tol"))
            secs = time.perf_counter() - start
            runs.append(("cavi", "", state, len(hist), hist and hist[-1]["change"] < cfg.float("cavi_tol"), "", secs, secs / max(len(hist), 1)))
        if "bumpvi" in cfg.methods:
            for B in cfg.ints("B"):
                start = time.perf_counter()
                model.initial_globals(train, make_rng(seed, 4, K))  # resets warm starts
                g, trace = bumpvi_run(model, train, _vi_config(cfg, B, seed), init=init)
                secs = time.perf_counter() - start
                med = float(np.median([r.seconds for r in trace.records])) if trace.records else 0.0
                runs.append(("bumpvi", B, LdaState(g["lam"]), trace.iterations, trace.converged,
                             ";".join(map(str, trace.chosen)), secs, med))
        for method, B, state, iters, conv, chosen, secs, med in runs:
            rows.append({
                "seed": seed, "K": K, "B": B, "method": method,
                "per_word_logp": per_word(state), "iterations": iters,
                "converged": bool(conv), "chosen_trace": chosen,
            })
            timing.append({"seed": seed, "K": K, "B": B, "method": method, "iterations": iters,
                           "seconds": secs, "median_iteration_seconds": med})
            for t, words in enumerate(_top_words(state.lam, vocab, cfg.int("top_words"))):
                topics.append({"seed": seed, "K": K, "B": B, "method": method, "topic": t, "words": words})
    return rows, timing, topics


# driver


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run every seed, write ``<out>/<experiment>.csv`` and side files; return an exit code."""
    exp = cfg.experiment
    out = Path(cfg.out)
    rows, timing, extra = [], [], []
    failed = []
    for seed in cfg.seeds:
        try:
            if exp == "gamma-poisson":
                r, pmfs = run_gamma_poisson_seed(cfg, seed)
                for k in range(cfg.int("pmf_kmax") + 1):
                    extra.append({"seed": seed, "k": k, **{name: p[k] for name, p in pmfs.items()}})
            elif exp == "blr":
                r = run_blr_seed(cfg, seed)
            elif exp == "gmm":
                r, t = run_gmm_seed(cfg, seed)
                timing.extend(t)
            else:
                r, t, topics = run_lda_seed(cfg, seed)
                timing.extend(t)
                extra.extend(topics)
        except Exception as exc:  # report and keep going with the other seeds
            logger.error("%s seed %d failed: %s: %s", exp, seed, type(exc).__name__, exc)
            failed.append(seed)
            continue
        rows.extend(r)
        logger.info("%s seed %d done", exp, seed)
    for row in rows:
        row["experiment"] = exp
        row["config_hash"] = cfg.hash
    write_csv(out / f"{exp}.csv", COLUMNS[exp], rows)
    if timing:
        for row in timing:
            row["experiment"] = exp
            row["config_hash"] = cfg.hash
        write_csv(out / f"{exp}_timing.csv", TIMING_COLUMNS, timing)
    if exp == "gamma-poisson" and extra:
        cols = ["seed", "k"] + [c for c in extra[0] if c not in ("seed", "k")]
        write_csv(out / f"{exp}_pmf.csv", cols, extra)
    if exp == "lda" and extra:
        write_csv(out / "lda_topics.csv", ["seed", "K", "B", "method", "topic", "words"], extra)
    if failed:
        logger.error("%d of %d seeds failed: %s", len(failed), len(cfg.seeds), failed)
        return 1
    return 0
