"""Coordinate-ascent variational inference for the mixture and topic models."""
from .gmm import (
    GaussianMixture,
    GmmPrior,
    GmmState,
    gmm_cavi,
    gmm_elbo,
    gmm_global_step,
    gmm_init,
    gmm_local_step,
    gmm_log_predictive,
)
from .lda import (
    LatentDirichletAllocation,
    LdaPrior,
    LdaState,
    lda_cavi,
    lda_global_update,
    lda_heldout_log_predictive,
    lda_init,
    lda_local_step,
    lda_local_step_corpus,
    lda_per_word_log_predictive,
)
