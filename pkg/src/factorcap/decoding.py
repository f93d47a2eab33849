"""Decoding strategies over the conditional LM's next-token interface.

Greedy search, top-k/top-p (nucleus) sampling, and greedy-then-sampling,
which decodes the factor phrase greedily through the delimiter token and
samples only the caption body.
"""

from __future__ import annotations

import enum
import json
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Example, SchemaError
from .model import DELIM_ID, EOS_ID, BOS_ID, ConditionalLm
from .text import DELIMITER


class InvalidConfigError(ValueError):
    pass


class Strategy(str, enum.Enum):
    GREEDY = "greedy"
    SAMPLING = "sampling"
    GTS = "gts"


@dataclass(frozen=True)
class DecodeConfig:
    strategy: Strategy = Strategy.GREEDY
    top_p: float = 0.9
    top_k: int = 40
    max_len: int = 64
    seed: int = 0
    delimiter_id: int = DELIM_ID

    def __post_init__(self):
        if not 0.0 < self.top_p <= 1.0:
            raise InvalidConfigError("top_p must lie in (0, 1]")
        if self.top_k < 1:
            raise InvalidConfigError("top_k must be >= 1")
        if self.max_len < 1:
            raise InvalidConfigError("max_len must be >= 1")

    def as_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "top_p": self.top_p,
            "top_k": self.top_k,
            "max_len": self.max_len,
            "seed": self.seed,
            "delimiter_id": self.delimiter_id,
        }


def filter_top_k_top_p(probs: np.ndarray, k: int, p: float) -> np.ndarray:
    """Top-k then top-p restriction of a distribution, renormalized.

    Keeps the k most probable tokens, then the smallest prefix (in descending
    probability, ties broken by ascending token id) whose cumulative mass
    reaches p. Returns a full-length vector that is zero outside the support.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if k < 1:
        raise InvalidConfigError("top_k must be >= 1")
    if not 0.0 < p <= 1.0:
        raise InvalidConfigError("top_p must lie in (0, 1]")
    if probs.ndim != 1 or abs(float(probs.sum()) - 1.0) > 1e-6 or np.any(probs < 0):
        raise InvalidConfigError("probs must be a 1-d distribution summing to 1")

    # Stable order: probability descending, token id ascending on ties.
    order = np.lexsort((np.arange(probs.size), -probs))
    kept = order[: min(k, probs.size)]
    cumulative = np.cumsum(probs[kept])
    # Smallest prefix reaching p; fall back to all kept tokens if the top-k
    # truncation leaves less than p of the mass.
    above = np.nonzero(cumulative >= p - 1e-12)[0]
    cut = int(above[0]) + 1 if above.size else kept.size
    support = kept[:cut]
    out = np.zeros_like(probs)
    out[support] = probs[support] / probs[support].sum()
    return out


@dataclass
class DecodeResult:
    """Token ids (without EOS) plus the rendered text and phrase metadata."""

    ids: list[int]
    text: str
    factor_phrase: str | None
    delimiter_found: bool
    strategy: Strategy


def _finish(model: ConditionalLm, ids: list[int], strategy: Strategy, delimiter_id: int) -> DecodeResult:
    delimiter_found = delimiter_id in ids
    phrase = None
    if delimiter_found:
        phrase = model.vocab.decode(ids[: ids.index(delimiter_id)])
    return DecodeResult(
        ids=ids,
        text=model.vocab.decode(ids),
        factor_phrase=phrase or None,
        delimiter_found=delimiter_found,
        strategy=strategy,
    )


def _argmax_token(dist: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. the lowest token id on ties.
    return int(np.argmax(dist))


def greedy_decode(model: ConditionalLm, cond: Sequence[float], config: DecodeConfig) -> DecodeResult:
    """Argmax decoding; deterministic and independent of the config seed."""
    k = model.config.context_len
    context = [BOS_ID] * k
    ids: list[int] = []
    while len(ids) < config.max_len:
        token = _argmax_token(model.next_distribution(context, cond))
        if token == EOS_ID:
            break
        ids.append(token)
        context = context[1:] + [token]
    return _finish(model, ids, Strategy.GREEDY, config.delimiter_id)


def sample_decode(
    model: ConditionalLm,
    cond: Sequence[float],
    config: DecodeConfig,
    rng: np.random.Generator,
) -> DecodeResult:
    """Every token drawn from the top-k/top-p filtered distribution."""
    k = model.config.context_len
    context = [BOS_ID] * k
    ids: list[int] = []
    while len(ids) < config.max_len:
        dist = filter_top_k_top_p(model.next_distribution(context, cond), config.top_k, config.top_p)
        token = int(rng.choice(dist.size, p=dist))
        if token == EOS_ID:
            break
        ids.append(token)
        context = context[1:] + [token]
    return _finish(model, ids, Strategy.SAMPLING, config.delimiter_id)


def gts_decode(
    model: ConditionalLm,
    cond: Sequence[float],
    config: DecodeConfig,
    rng: np.random.Generator,
) -> DecodeResult:
    """Greedy through the delimiter token (inclusive), then sampled.

    The prefix through the delimiter is identical to greedy decoding by
    construction. If greedy never emits the delimiter the whole output equals
    the greedy output and ``delimiter_found`` stays False.
    """
    k = model.config.context_len
    context = [BOS_ID] * k
    ids: list[int] = []
    delimiter_seen = False
    while len(ids) < config.max_len:
        token = _argmax_token(model.next_distribution(context, cond))
        if token == EOS_ID:
            break
        ids.append(token)
        context = context[1:] + [token]
        if token == config.delimiter_id:
            delimiter_seen = True
            break
    if delimiter_seen:
        while len(ids) < config.max_len:
            dist = filter_top_k_top_p(
                model.next_distribution(context, cond), config.top_k, config.top_p
            )
            token = int(rng.choice(dist.size, p=dist))
            if token == EOS_ID:
                break
            ids.append(token)
            context = context[1:] + [token]
    return _finish(model, ids, Strategy.GTS, config.delimiter_id)


def rng_for_example(seed: int, example_id: str) -> np.random.Generator:
    """Per-example stream derived from (seed, id); stable across runs."""
    return np.random.default_rng([seed, zlib.crc32(example_id.encode("utf-8"))])


def decode_example(model: ConditionalLm, example: Example, config: DecodeConfig) -> dict:
    cond = example.style_vector
    if config.strategy is Strategy.GREEDY:
        result = greedy_decode(model, cond, config)
    elif config.strategy is Strategy.SAMPLING:
        result = sample_decode(model, cond, config, rng_for_example(config.seed, example.id))
    else:
        result = gts_decode(model, cond, config, rng_for_example(config.seed, example.id))
    return {
        "id": example.id,
        "strategy": result.strategy.value,
        "text": result.text,
        "factor_phrase": result.factor_phrase,
        "delimiter_found": result.delimiter_found,
        "seed": config.seed,
    }


def decode_corpus(model: ConditionalLm, examples: Iterable[Example], config: DecodeConfig) -> list[dict]:
    return [decode_example(model, example, config) for example in examples]


_ROW_FIELDS = ("id", "strategy", "text", "factor_phrase", "delimiter_found", "seed")


def write_decode_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps({name: row[name] for name in _ROW_FIELDS}, ensure_ascii=False) + "\n")


def read_decode_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(lineno, "<line>", f"not valid JSON: {exc}") from None
            for name in ("id", "strategy", "text"):
                if name not in record or not isinstance(record[name], str):
                    raise SchemaError(lineno, name, "missing or not a string")
            rows.append(record)
    return rows
