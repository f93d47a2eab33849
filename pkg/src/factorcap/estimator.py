"""Scikit-learn style estimators wrapping the conditional captioner.

``ConditionalCaptioner`` follows the fit/predict convention (condition
vectors in, caption strings out) so the model composes with pipelines and
model-selection utilities; ``FactorLexiconExtractor`` is a stateless
transformer from caption text to factor class labels.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import model as model_mod
from .decoding import DecodeConfig, Strategy, greedy_decode, gts_decode, rng_for_example, sample_decode
from .factors import FACTOR_NAMES, default_lexicon, extract_factors_from_caption
from .metrics import caption_part, rouge_l
from .text import tokenize


def _check_conditions(X, dim: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError(f"X must be a non-empty 2-d array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains NaN or infinite values")
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"X has {X.shape[1]} features, expected {dim}")
    return X


def _check_texts(y, n_rows: int) -> list[str]:
    texts = [str(t) for t in y]
    if len(texts) != n_rows:
        raise ValueError(f"y has {len(texts)} texts for {n_rows} rows of X")
    if any(not t for t in texts):
        raise ValueError("y must not contain empty texts")
    return texts


class ConditionalCaptioner(BaseEstimator):
    """Conditional caption generator with a scikit-learn interface.

    Parameters
    ----------
    context_len, embed_dim, hidden_dim : int
        Architecture of the K-gram feed-forward language model.
    learning_rate, weight_decay, batch_size, max_epochs, patience : training
        hyperparameters (AdamW with early stopping on a dev split).
    dev_fraction : float
        Fraction of the fit data held out for early stopping when no explicit
        dev set is passed to :meth:`fit`.
    strategy : {"greedy", "sampling", "gts"}
        Decoding strategy used by :meth:`predict`.
    top_p, top_k, max_len : decoding hyperparameters.
    seed : int
        Seed for initialization, shuffling, and sampling.

    Attributes
    ----------
    model_ : trained ``ConditionalLm``
    history_ : list of per-epoch train/dev losses
    n_features_in_ : dimension of the condition vectors seen in fit
    """

    def __init__(
        self,
        context_len=4,
        embed_dim=16,
        hidden_dim=64,
        learning_rate=1e-4,
        weight_decay=0.01,
        batch_size=16,
        max_epochs=50,
        patience=5,
        dev_fraction=0.1,
        strategy="greedy",
        top_p=0.9,
        top_k=40,
        max_len=64,
        seed=0,
    ):
        self.context_len = context_len
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.dev_fraction = dev_fraction
        self.strategy = strategy
        self.top_p = top_p
        self.top_k = top_k
        self.max_len = max_len
        self.seed = seed

    def fit(self, X, y, X_dev=None, y_dev=None):
        """Train on (condition vector, target text) pairs.

        When no dev data is given, ``dev_fraction`` of the rows is held out
        (seeded split) for early stopping.
        """
        X = _check_conditions(X)
        texts = _check_texts(y, X.shape[0])
        if X_dev is None:
            if not 0.0 < self.dev_fraction < 1.0:
                raise ValueError("dev_fraction must lie in (0, 1) when no dev set is given")
            n_dev = max(1, int(round(self.dev_fraction * X.shape[0])))
            if n_dev >= X.shape[0]:
                raise ValueError("not enough rows to hold out a dev split")
            order = np.random.default_rng(self.seed).permutation(X.shape[0])
            dev_idx, train_idx = order[:n_dev], order[n_dev:]
            X_dev, dev_texts = X[dev_idx], [texts[i] for i in dev_idx]
            X, texts = X[train_idx], [texts[i] for i in train_idx]
        else:
            X_dev = _check_conditions(X_dev, X.shape[1])
            dev_texts = _check_texts(y_dev, X_dev.shape[0])

        config = model_mod.TrainConfig(
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=self.seed,
        )
        model_config = model_mod.ModelConfig(
            context_len=self.context_len,
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            cond_dim=X.shape[1],
        )
        result = model_mod.fit_lm(texts, X, dev_texts, X_dev, config, model_config)

        self.model_ = result.model
        self.history_ = result.log
        self.best_dev_loss_ = result.best_dev_loss
        self.n_features_in_ = X.shape[1]
        return self

    def _decode_config(self) -> DecodeConfig:
        return DecodeConfig(
            strategy=Strategy(self.strategy),
            top_p=self.top_p,
            top_k=self.top_k,
            max_len=self.max_len,
            seed=self.seed,
        )

    def predict(self, X):
        """Decode one text per row of X using the configured strategy."""
        check_is_fitted(self)
        X = _check_conditions(X, self.n_features_in_)
        config = self._decode_config()
        texts = []
        for i, cond in enumerate(X):
            if config.strategy is Strategy.GREEDY:
                result = greedy_decode(self.model_, cond, config)
            elif config.strategy is Strategy.SAMPLING:
                result = sample_decode(self.model_, cond, config, rng_for_example(self.seed, str(i)))
            else:
                result = gts_decode(self.model_, cond, config, rng_for_example(self.seed, str(i)))
            texts.append(result.text)
        return np.asarray(texts, dtype=object)

    def score(self, X, y):
        """Mean ROUGE-L F1 of predicted captions against reference texts."""
        check_is_fitted(self)
        references = _check_texts(y, np.asarray(X).shape[0])
        total = 0.0
        for text, ref in zip(self.predict(X), references):
            hyp_tokens = tokenize(caption_part(text))
            ref_tokens = tokenize(caption_part(ref))
            total += rouge_l(hyp_tokens, ref_tokens) if hyp_tokens and ref_tokens else 0.0
        return total / len(references)


class FactorLexiconExtractor(BaseEstimator, TransformerMixin):
    """Stateless transformer: caption strings to factor class labels.

    ``transform`` returns an (n, 4) object array of class names in the order
    gender, pitch, volume, speed. Unmatched factors become "normal" (gender:
    "unknown").
    """

    def __init__(self, lexicon=None):
        self.lexicon = lexicon

    def fit(self, X, y=None):
        self.lexicon_ = self.lexicon or default_lexicon()
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self)
        rows = [
            [
                extract_factors_from_caption(str(text), self.lexicon_).value_of(factor).value
                for factor in FACTOR_NAMES
            ]
            for text in X
        ]
        return np.asarray(rows, dtype=object)

    def get_feature_names_out(self, input_features=None):
        return np.asarray(FACTOR_NAMES, dtype=object)
