"""Scikit-learn style wrapper around the seq2seq model.

``NGramSeq2Seq.fit`` consumes lists of token-id sequences (X sources,
y targets), ``predict`` decodes, ``score`` returns the mean sentence-level
LCS F1 against references.  All constructor arguments are plain values so
``get_params``/``set_params``/``clone`` work as usual.
"""

from sklearn.base import BaseEstimator

from .data import EOS, Corpus, Example
from .errors import InvalidInputError
from .metrics import rouge_l
from .model import DecodeConfig, ModelConfig, beam_decode
from .objectives import ObjectiveSpec
from .train import TrainSettings, run_training


def check_sequences(X, name="X", vocab_size=None):
    """Validate a list of token-id sequences; returns lists of ints."""
    if not isinstance(X, (list, tuple)) or len(X) == 0:
        raise InvalidInputError(f"{name} must be a non-empty list of token sequences")
    out = []
    for i, seq in enumerate(X):
        try:
            seq = [int(t) for t in seq]
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(f"{name}[{i}] is not a token sequence") from exc
        if any(t < 0 for t in seq):
            raise InvalidInputError(f"{name}[{i}] contains a negative token id")
        if vocab_size is not None and any(t >= vocab_size for t in seq):
            raise InvalidInputError(f"{name}[{i}] contains a token outside the vocabulary")
        out.append(seq)
    return out


class NGramSeq2Seq(BaseEstimator):
    """Toy attention encoder-decoder trained with composite n-gram objectives."""

    def __init__(
        self,
        vocab_size=50,
        embed_dim=32,
        max_source_len=32,
        max_target_len=16,
        use_ce=True,
        rewards_orders=(),
        matches_orders=(),
        pp2_orders=(),
        bon_orders=(),
        lr=3e-3,
        warmup_steps=100,
        weight_decay=0.01,
        epochs=5,
        batch_size=16,
        eval_every=50,
        beam_width=1,
        length_penalty=0.0,
        min_len=1,
        max_len=16,
        seed=0,
    ):
        self.vocab_size = vocab_size
        self.embed_dim = embed_dim
        self.max_source_len = max_source_len
        self.max_target_len = max_target_len
        self.use_ce = use_ce
        self.rewards_orders = rewards_orders
        self.matches_orders = matches_orders
        self.pp2_orders = pp2_orders
        self.bon_orders = bon_orders
        self.lr = lr
        self.warmup_steps = warmup_steps
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.eval_every = eval_every
        self.beam_width = beam_width
        self.length_penalty = length_penalty
        self.min_len = min_len
        self.max_len = max_len
        self.seed = seed

    def _model_config(self):
        return ModelConfig(
            vocab_size=self.vocab_size,
            embed_dim=self.embed_dim,
            max_source_len=self.max_source_len,
            max_target_len=self.max_target_len,
        )

    def _objective_spec(self):
        return ObjectiveSpec(
            use_ce=self.use_ce,
            rewards_orders=tuple(self.rewards_orders),
            matches_orders=tuple(self.matches_orders),
            pp2_orders=tuple(self.pp2_orders),
            bon_orders=tuple(self.bon_orders),
        )

    def _decode_config(self):
        return DecodeConfig(
            beam_width=self.beam_width,
            length_penalty=self.length_penalty,
            min_len=self.min_len,
            max_len=self.max_len,
        )

    def fit(self, X, y):
        X = check_sequences(X, "X", self.vocab_size)
        y = check_sequences(y, "y", self.vocab_size)
        if len(X) != len(y):
            raise InvalidInputError("X and y must have the same length")
        examples = [
            Example(source=s, target=t if t and t[-1] == EOS else t + [EOS])
            for s, t in zip(X, y)
        ]
        corpus = Corpus(examples=examples, config={"task": "fit"}, seed=self.seed)
        settings = TrainSettings(
            lr=self.lr,
            warmup_steps=self.warmup_steps,
            weight_decay=self.weight_decay,
            epochs=self.epochs,
            batch_size=self.batch_size,
            eval_every=self.eval_every,
            seed=self.seed,
        )
        result = run_training(self._model_config(), self._objective_spec(), corpus, corpus, settings)
        self.params_ = result.params
        self.history_ = result.history
        self.eval_history_ = result.eval_history
        return self

    def predict(self, X):
        if not hasattr(self, "params_"):
            raise InvalidInputError("estimator is not fitted")
        X = check_sequences(X, "X", self.vocab_size)
        config = self._model_config()
        decode = self._decode_config()
        return [beam_decode(self.params_, config, src, decode) for src in X]

    def score(self, X, y):
        """Mean ROUGE-L F1 of decoded candidates against references."""
        y = check_sequences(y, "y", self.vocab_size)
        preds = self.predict(X)
        refs = [[t for t in seq if t != EOS] for seq in y]
        return sum(rouge_l(c, r).f1 for c, r in zip(preds, refs)) / len(preds)
