"""Differentiable n-gram training objectives for sequence-to-sequence models.

The package provides the position-related "rewards" and position-unrelated
"matches" overlap objectives with exact analytic gradients, the
cross-entropy / probabilistic-count / bag-of-n-grams baselines they are
compared against, ROUGE-N/L evaluation, and a desk-scale attention
encoder-decoder plus CLI harness to exercise the composite objectives
end-to-end on synthetic corpora.
"""

from .errors import (
    CorpusFormatError,
    GramlossError,
    InvalidInputError,
    ProbeRejectedError,
    TrainingDivergedError,
)
from .estimator import NGramSeq2Seq
from .metrics import CorpusReport, RougeScore, corpus_eval, lcs_length, rouge_l, rouge_n
from .model import DecodeConfig, ModelConfig, ModelParams, OptimState
from .objectives import (
    LossOutput,
    ObjectiveSpec,
    batch_loss,
    bon,
    composite,
    cross_entropy,
    gradcheck,
    ngram_matches,
    ngram_rewards,
    pp2,
)

__version__ = "0.1.0"

__all__ = [
    "CorpusFormatError",
    "CorpusReport",
    "DecodeConfig",
    "GramlossError",
    "InvalidInputError",
    "LossOutput",
    "ModelConfig",
    "ModelParams",
    "NGramSeq2Seq",
    "ObjectiveSpec",
    "OptimState",
    "ProbeRejectedError",
    "RougeScore",
    "TrainingDivergedError",
    "batch_loss",
    "bon",
    "composite",
    "corpus_eval",
    "cross_entropy",
    "gradcheck",
    "lcs_length",
    "ngram_matches",
    "ngram_rewards",
    "pp2",
    "rouge_l",
    "rouge_n",
]
