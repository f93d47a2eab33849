"""Tiny conditional autoregressive language model, trained from first principles.

The model predicts the next token from the last K token embeddings
concatenated with a style condition vector, through one tanh hidden layer.
Everything is double precision numpy: the forward pass, the hand-derived
gradients, the AdamW optimizer, and the early-stopped training loop.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import corpus as corpus_mod
from .factors import FactorLexicon
from .text import DELIMITER, detokenize, tokenize

BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"
UNK_TOKEN = "<unk>"

BOS_ID = 0
EOS_ID = 1
UNK_ID = 2
DELIM_ID = 3

RESERVED_TOKENS = (BOS_TOKEN, EOS_TOKEN, UNK_TOKEN, DELIMITER)

CHECKPOINT_FORMAT = "factorcap-checkpoint"
CHECKPOINT_VERSION = 1


class DimensionMismatchError(ValueError):
    pass


class ShapeMismatchError(ValueError):
    pass


class EmptyBatchError(ValueError):
    pass


class EmptyDatasetError(ValueError):
    pass


class VersionMismatchError(ValueError):
    """Checkpoint file is not a readable checkpoint of a supported version."""


class Vocabulary:
    """Bijective token<->id mapping with fixed reserved ids 0..3."""

    def __init__(self, tokens: Sequence[str] = ()):
        self.id_to_token: list[str] = list(RESERVED_TOKENS)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        for token in tokens:
            self.add(token)

    def add(self, token: str) -> int:
        if token in self.token_to_id:
            return self.token_to_id[token]
        self.token_to_id[token] = len(self.id_to_token)
        self.id_to_token.append(token)
        return self.token_to_id[token]

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, text: str) -> list[int]:
        return [self.token_to_id.get(tok, UNK_ID) for tok in tokenize(text)]

    def decode(self, ids: Iterable[int]) -> str:
        return detokenize(self.id_to_token[i] for i in ids)

    def non_reserved(self) -> list[str]:
        return self.id_to_token[len(RESERVED_TOKENS) :]


def build_vocabulary(texts: Iterable[str]) -> Vocabulary:
    """Vocabulary from the training texts only; tokens added in sorted order."""
    seen = set()
    for text in texts:
        seen.update(tokenize(text))
    return Vocabulary(sorted(seen - set(RESERVED_TOKENS)))


@dataclass(frozen=True)
class ModelConfig:
    context_len: int = 4
    embed_dim: int = 16
    hidden_dim: int = 64
    cond_dim: int = 16

    def as_dict(self) -> dict:
        return {
            "context_len": self.context_len,
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "cond_dim": self.cond_dim,
        }


PARAM_NAMES = ("emb", "w1", "b1", "w2", "b2")


class ConditionalLm:
    """Parameters plus vocabulary of the conditional K-gram language model."""

    def __init__(self, config: ModelConfig, vocab: Vocabulary, params: dict[str, np.ndarray]):
        self.config = config
        self.vocab = vocab
        self.params = params

    @classmethod
    def zeros(cls, config: ModelConfig, vocab: Vocabulary) -> "ConditionalLm":
        v = len(vocab)
        k, e, h, d = config.context_len, config.embed_dim, config.hidden_dim, config.cond_dim
        params = {
            "emb": np.zeros((v, e)),
            "w1": np.zeros((k * e + d, h)),
            "b1": np.zeros(h),
            "w2": np.zeros((h, v)),
            "b2": np.zeros(v),
        }
        return cls(config, vocab, params)

    @classmethod
    def init(cls, config: ModelConfig, vocab: Vocabulary, seed: int = 0, scale: float = 0.1) -> "ConditionalLm":
        rng = np.random.default_rng(seed)
        model = cls.zeros(config, vocab)
        model.params["emb"] = rng.normal(0.0, scale, model.params["emb"].shape)
        model.params["w1"] = rng.normal(0.0, scale, model.params["w1"].shape)
        model.params["w2"] = rng.normal(0.0, scale, model.params["w2"].shape)
        return model

    def copy_params(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.params.items()}

    def next_distribution(self, context_ids: Sequence[int], cond: Sequence[float]) -> np.ndarray:
        """Next-token distribution for a single (context, condition) pair."""
        contexts = np.asarray(context_ids, dtype=np.int64)[None, :]
        conds = np.asarray(cond, dtype=np.float64)[None, :]
        return forward(self, contexts, conds)[0]

    def assert_finite(self) -> None:
        for name, arr in self.params.items():
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"non-finite values in parameter {name!r}")


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def forward(model: ConditionalLm, contexts: np.ndarray, conds: np.ndarray) -> np.ndarray:
    """Batched next-token distributions, shape (B, V); rows sum to 1.

    ``contexts`` is (B, K) token ids (BOS-padded on the left), ``conds`` is
    (B, D) condition vectors.
    """
    contexts = np.asarray(contexts, dtype=np.int64)
    conds = np.asarray(conds, dtype=np.float64)
    k = model.config.context_len
    d = model.config.cond_dim
    if contexts.ndim != 2 or contexts.shape[1] != k:
        raise DimensionMismatchError(f"contexts must be (B, {k}), got {contexts.shape}")
    if conds.ndim != 2 or conds.shape[1] != d or conds.shape[0] != contexts.shape[0]:
        raise DimensionMismatchError(f"conds must be ({contexts.shape[0]}, {d}), got {conds.shape}")
    b = contexts.shape[0]
    x = np.concatenate([model.params["emb"][contexts].reshape(b, -1), conds], axis=1)
    h = np.tanh(x @ model.params["w1"] + model.params["b1"])
    logits = h @ model.params["w2"] + model.params["b2"]
    return _softmax(logits)


@dataclass
class Batch:
    contexts: np.ndarray  # (B, K) int64
    conds: np.ndarray  # (B, D) float64
    targets: np.ndarray  # (B,) int64

    def __len__(self) -> int:
        return self.contexts.shape[0]

    def take(self, index: np.ndarray) -> "Batch":
        return Batch(self.contexts[index], self.conds[index], self.targets[index])


def make_training_pairs(
    texts: Sequence[str],
    conds: Sequence[Sequence[float]],
    vocab: Vocabulary,
    context_len: int,
) -> Batch:
    """All (context, condition, next-token) triples for a split.

    Each text contributes one pair per token plus one for EOS; contexts are
    BOS-padded on the left.
    """
    ctx_rows: list[list[int]] = []
    cond_rows: list[int] = []
    targets: list[int] = []
    for idx, text in enumerate(texts):
        ids = vocab.encode(text) + [EOS_ID]
        context = [BOS_ID] * context_len
        for target in ids:
            ctx_rows.append(list(context))
            cond_rows.append(idx)
            targets.append(target)
            context = context[1:] + [target]
    conds_arr = np.asarray(conds, dtype=np.float64)
    return Batch(
        contexts=np.asarray(ctx_rows, dtype=np.int64),
        conds=conds_arr[np.asarray(cond_rows, dtype=np.int64)],
        targets=np.asarray(targets, dtype=np.int64),
    )


def loss_and_gradients(model: ConditionalLm, batch: Batch) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over the batch and its gradient for every parameter.

    The backward pass is written out by hand; it is checked against central
    finite differences in the test suite.
    """
    b = len(batch)
    if b == 0:
        raise EmptyBatchError("batch must contain at least one pair")
    k, e = model.config.context_len, model.config.embed_dim
    emb, w1, b1, w2, b2 = (model.params[n] for n in PARAM_NAMES)

    x = np.concatenate([emb[batch.contexts].reshape(b, -1), batch.conds], axis=1)
    pre = x @ w1 + b1
    h = np.tanh(pre)
    logits = h @ w2 + b2
    probs = _softmax(logits)
    loss = float(-np.mean(np.log(probs[np.arange(b), batch.targets])))

    # dL/dlogits for mean cross-entropy: (softmax - onehot) / B
    dlogits = probs
    dlogits[np.arange(b), batch.targets] -= 1.0
    dlogits /= b
    grads = {
        "w2": h.T @ dlogits,
        "b2": dlogits.sum(axis=0),
    }
    dh = dlogits @ w2.T
    dpre = dh * (1.0 - h * h)
    grads["w1"] = x.T @ dpre
    grads["b1"] = dpre.sum(axis=0)
    dx = dpre @ w1.T
    demb_flat = dx[:, : k * e].reshape(b, k, e)
    demb = np.zeros_like(emb)
    np.add.at(demb, batch.contexts, demb_flat)
    grads["emb"] = demb
    return loss, grads


def eval_loss(model: ConditionalLm, batch: Batch, chunk: int = 4096) -> float:
    """Mean cross-entropy without gradients, computed in chunks."""
    if len(batch) == 0:
        raise EmptyBatchError("batch must contain at least one pair")
    total = 0.0
    for start in range(0, len(batch), chunk):
        part = batch.take(np.arange(start, min(start + chunk, len(batch))))
        probs = forward(model, part.contexts, part.conds)
        total += float(-np.log(probs[np.arange(len(part)), part.targets]).sum())
    return total / len(batch)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    batch_size: int = 16
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.betas[0] < 1 and 0 <= self.betas[1] < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be >= 1")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")

    def as_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "betas": list(self.betas),
            "eps": self.eps,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "seed": self.seed,
        }


@dataclass
class AdamWState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0


def init_adamw_state(params: dict[str, np.ndarray]) -> AdamWState:
    return AdamWState(
        m={name: np.zeros_like(arr) for name, arr in params.items()},
        v={name: np.zeros_like(arr) for name, arr in params.items()},
    )


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    config: TrainConfig,
) -> None:
    """One AdamW update, in place.

    Decoupled weight decay shrinks the parameter before the adaptive update;
    both moments are bias-corrected.
    """
    beta1, beta2 = config.betas
    state.t += 1
    t = state.t
    for name in params:
        if grads[name].shape != params[name].shape:
            raise ShapeMismatchError(
                f"gradient for {name!r} has shape {grads[name].shape}, "
                f"parameter has {params[name].shape}"
            )
        if config.weight_decay:
            params[name] *= 1.0 - config.learning_rate * config.weight_decay
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * grads[name]
        v *= beta2
        v += (1.0 - beta2) * grads[name] ** 2
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        params[name] -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)


class TargetMode(str, enum.Enum):
    CAPTION = "caption"
    FCC_GOLDEN = "fcc-golden"
    FCC_PREDICTED = "fcc-predicted"


def target_texts(
    examples: Sequence[corpus_mod.Example],
    mode: TargetMode,
    lexicon: FactorLexicon | None = None,
) -> tuple[list[str], int]:
    """Training target text per example for the selected mode."""
    if mode is TargetMode.CAPTION:
        return [e.caption for e in examples], 0
    fcc_mode = corpus_mod.FccMode.GOLDEN if mode is TargetMode.FCC_GOLDEN else corpus_mod.FccMode.PREDICTED
    return corpus_mod.build_fcc_targets(examples, fcc_mode, lexicon)


@dataclass
class TrainResult:
    model: ConditionalLm
    log: list[dict]
    best_epoch: int
    best_dev_loss: float
    gender_fallbacks: int = 0


def fit_lm(
    train_texts: Sequence[str],
    train_conds: Sequence[Sequence[float]],
    dev_texts: Sequence[str],
    dev_conds: Sequence[Sequence[float]],
    config: TrainConfig,
    model_config: ModelConfig,
) -> TrainResult:
    """Core training loop: AdamW on shuffled minibatches, early stop on dev loss.

    Deterministic given the config seed: fixed shuffling stream, fixed batch
    iteration order. Returns the checkpoint with the best dev loss.
    """
    if not train_texts or not dev_texts:
        raise EmptyDatasetError("need non-empty train and dev splits")
    vocab = build_vocabulary(train_texts)
    train_pairs = make_training_pairs(train_texts, train_conds, vocab, model_config.context_len)
    dev_pairs = make_training_pairs(dev_texts, dev_conds, vocab, model_config.context_len)

    model = ConditionalLm.init(model_config, vocab, seed=config.seed)
    state = init_adamw_state(model.params)
    rng = np.random.default_rng(config.seed)

    best_params = model.copy_params()
    best_dev = float("inf")
    best_epoch = 0
    bad_epochs = 0
    log: list[dict] = []

    n = len(train_pairs)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            batch = train_pairs.take(order[start : start + config.batch_size])
            loss, grads = loss_and_gradients(model, batch)
            adamw_step(model.params, grads, state, config)
            loss_sum += loss * len(batch)
        model.assert_finite()
        train_loss = loss_sum / n
        dev_loss = eval_loss(model, dev_pairs)
        log.append({"epoch": epoch, "train_loss": train_loss, "dev_loss": dev_loss})
        if dev_loss < best_dev:
            best_dev = dev_loss
            best_epoch = epoch
            best_params = model.copy_params()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break

    model.params = best_params
    return TrainResult(model=model, log=log, best_epoch=best_epoch, best_dev_loss=best_dev)


def train(
    dataset: corpus_mod.Dataset,
    target_mode: TargetMode,
    config: TrainConfig,
    model_config: ModelConfig | None = None,
    lexicon: FactorLexicon | None = None,
) -> TrainResult:
    """Train on a dataset's train split with targets built for ``target_mode``."""
    if not dataset.train or not dataset.dev:
        raise EmptyDatasetError("dataset must have non-empty train and dev splits")
    model_config = model_config or ModelConfig(cond_dim=dataset.spec.dim)
    if model_config.cond_dim != dataset.spec.dim:
        raise DimensionMismatchError(
            f"model cond_dim {model_config.cond_dim} != dataset dim {dataset.spec.dim}"
        )
    train_texts, fallbacks = target_texts(dataset.train, target_mode, lexicon)
    dev_texts, _ = target_texts(dataset.dev, target_mode, lexicon)
    result = fit_lm(
        train_texts,
        [e.style_vector for e in dataset.train],
        dev_texts,
        [e.style_vector for e in dataset.dev],
        config,
        model_config,
    )
    result.gender_fallbacks = fallbacks
    return result


def save_checkpoint(model: ConditionalLm, path: str | Path, extra: dict | None = None) -> None:
    """Single JSON file: format header, vocabulary, config echo, parameters."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "format_version": CHECKPOINT_VERSION,
        "model_config": model.config.as_dict(),
        "vocab": model.vocab.non_reserved(),
        "params": {name: model.params[name].tolist() for name in PARAM_NAMES},
    }
    if extra:
        payload["extra"] = extra
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[ConditionalLm, dict]:
    """Inverse of :func:`save_checkpoint`; returns the model and the extra dict."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError:
        raise
    try:
        payload = json.loads(text)
    except json.JSONDecodeError:
        raise VersionMismatchError(f"{path} is not a readable checkpoint") from None
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise VersionMismatchError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"unsupported checkpoint version {payload.get('format_version')!r}"
        )
    config = ModelConfig(**payload["model_config"])
    vocab = Vocabulary(payload["vocab"])
    params = {name: np.asarray(payload["params"][name], dtype=np.float64) for name in PARAM_NAMES}
    model = ConditionalLm(config, vocab, params)
    return model, payload.get("extra", {})
