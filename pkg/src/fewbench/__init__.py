"""Paired pretraining-bias experiments for few-shot text classification.

The package covers the full pipeline: seeded ``extra``/``train``/``test``
subsampling of a labeled corpus, paired trainer trials under three
pretraining conditions, a hierarchical binomial-logit model of the
resulting accuracy counts sampled by Hamiltonian Monte Carlo, posterior
predictive effect summaries, sign-flip permutation tests with BH false
discovery control, and a de-replication meta-analysis of what
single-subsample studies would have concluded.
"""

from .dataio import AccuracyRecord, CorpusDocument, parse_accuracy_records, parse_corpus
from .effects import conditional_effect, marginal_effect, pool_effects
from .freqtests import bh_adjust, signflip_test, spearman
from .meta import dereplicate_slices, meta_fit, odds_ratio
from .model import HierarchicalBinomialModel, build_design
from .predictive import posterior_predictive, prior_predictive
from .sampler import SamplerConfig, sample_posterior
from .simulate import GenerativeTruth, simulate_records
from .splits import ExperimentPlan, draw_splits, repeat_schedule
from .trials import TrainerContract, run_experiment, run_trial

__version__ = "0.1.0"

__all__ = [
    "AccuracyRecord",
    "CorpusDocument",
    "ExperimentPlan",
    "GenerativeTruth",
    "HierarchicalBinomialModel",
    "SamplerConfig",
    "TrainerContract",
    "bh_adjust",
    "build_design",
    "conditional_effect",
    "dereplicate_slices",
    "draw_splits",
    "marginal_effect",
    "meta_fit",
    "odds_ratio",
    "parse_accuracy_records",
    "parse_corpus",
    "pool_effects",
    "posterior_predictive",
    "prior_predictive",
    "repeat_schedule",
    "run_experiment",
    "run_trial",
    "sample_posterior",
    "signflip_test",
    "simulate_records",
    "spearman",
    "__version__",
]
