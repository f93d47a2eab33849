"""Caption metrics, factor-classification accuracy, and paired bootstrap tests.

The caption metrics are canonical reimplementations with documented variants:
corpus BLEU-4 without smoothing, ROUGE-L as the LCS F1, and an exact-match
METEOR without stemming or synonym modules.
"""

from __future__ import annotations

import enum
import json
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .corpus import Example, read_jsonl
from .decoding import read_decode_jsonl
from .factors import (
    FactorLexicon,
    FactorTuple,
    MalformedPhraseError,
    default_lexicon,
    extract_factors_from_caption,
    parse_factor_phrase,
)
from .text import DELIMITER, detokenize, tokenize


class LengthMismatchError(ValueError):
    pass


class EmptyCorpusError(ValueError):
    pass


class EmptySequenceError(ValueError):
    pass


class IdMismatchError(ValueError):
    pass


Tokens = Sequence[str]


def _ngram_counts(seq: Tokens, n: int) -> Counter:
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


def bleu4(hypotheses: Sequence[Tokens], references: Sequence[Tokens]) -> float:
    """Corpus-level BLEU-4: uniform weights over n=1..4, brevity penalty, no smoothing.

    Returns 0.0 as soon as any n-gram order has zero matches.
    """
    if len(hypotheses) != len(references):
        raise LengthMismatchError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise EmptyCorpusError("need at least one hypothesis/reference pair")
    log_precision_sum = 0.0
    for n in range(1, 5):
        matches = 0
        total = 0
        for hyp, ref in zip(hypotheses, references):
            hyp_counts = _ngram_counts(hyp, n)
            ref_counts = _ngram_counts(ref, n)
            matches += sum(min(count, ref_counts[gram]) for gram, count in hyp_counts.items())
            total += max(len(hyp) - n + 1, 0)
        if matches == 0:
            return 0.0
        log_precision_sum += np.log(matches / total)
    hyp_len = sum(len(h) for h in hypotheses)
    ref_len = sum(len(r) for r in references)
    brevity = 1.0 if hyp_len > ref_len else float(np.exp(1.0 - ref_len / hyp_len))
    return brevity * float(np.exp(log_precision_sum / 4.0))


def lcs_length(a: Tokens, b: Tokens) -> int:
    """Length of the longest common subsequence, bottom-up DP."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(hypothesis: Tokens, reference: Tokens) -> float:
    """LCS-based F1: P = LCS/|hyp|, R = LCS/|ref|, F = 2PR/(P+R)."""
    if not hypothesis or not reference:
        raise EmptySequenceError("sequences must be non-empty")
    lcs = lcs_length(hypothesis, reference)
    if lcs == 0:
        return 0.0
    precision = lcs / len(hypothesis)
    recall = lcs / len(reference)
    return 2.0 * precision * recall / (precision + recall)


def _alignment_chunks(hypothesis: Tokens, reference: Tokens) -> tuple[int, int]:
    """(matches, chunks) of the exact-match alignment that maximizes matches
    and, among those, minimizes the number of contiguous chunks.

    Backtracking over hypothesis positions with branch-and-bound pruning;
    feasible at caption lengths.
    """
    ref_positions: dict[str, list[int]] = defaultdict(list)
    for j, word in enumerate(reference):
        ref_positions[word].append(j)
    hyp_counts = Counter(hypothesis)
    quota = {
        word: min(count, len(ref_positions[word]))
        for word, count in hyp_counts.items()
        if word in ref_positions
    }
    matches = sum(quota.values())
    if matches == 0:
        return 0, 0

    n = len(hypothesis)
    # Remaining occurrences of each word at or after position i, used to tell
    # when an occurrence is forced to match to meet its word's quota.
    suffix: list[Counter] = [Counter() for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1].copy()
        suffix[i][hypothesis[i]] += 1

    best = matches  # upper bound: every match its own chunk
    used = [False] * len(reference)

    def search(i: int, need: dict[str, int], last_i: int, last_j: int, chunks: int) -> None:
        nonlocal best
        if chunks >= best:
            return
        if i == n:
            if all(v == 0 for v in need.values()):
                best = chunks
            return
        word = hypothesis[i]
        remaining = need.get(word, 0)
        if remaining:
            for j in ref_positions[word]:
                if used[j]:
                    continue
                used[j] = True
                need[word] = remaining - 1
                extra = 0 if (i == last_i + 1 and j == last_j + 1) else 1
                search(i + 1, need, i, j, chunks + extra)
                need[word] = remaining
                used[j] = False
        # Skip this occurrence if later occurrences can still meet the quota.
        if remaining <= suffix[i + 1][word]:
            search(i + 1, need, last_i, last_j, chunks)

    search(0, dict(quota), -2, -2, 0)
    return matches, best


def meteor_lite(hypothesis: Tokens, reference: Tokens) -> float:
    """Exact-match METEOR: Fmean = 10PR/(R+9P), penalty = 0.5*(chunks/matches)^3."""
    if not hypothesis or not reference:
        raise EmptySequenceError("sequences must be non-empty")
    matches, chunks = _alignment_chunks(hypothesis, reference)
    if matches == 0:
        return 0.0
    precision = matches / len(hypothesis)
    recall = matches / len(reference)
    f_mean = 10.0 * precision * recall / (recall + 9.0 * precision)
    penalty = 0.5 * (chunks / matches) ** 3
    return f_mean * (1.0 - penalty)


def distinct_n(corpus: Sequence[Tokens], n: int) -> float:
    """Unique n-grams divided by total n-grams across the corpus; 0 when empty."""
    if n < 1:
        raise ValueError("n must be >= 1")
    seen = set()
    total = 0
    for seq in corpus:
        for i in range(len(seq) - n + 1):
            seen.add(tuple(seq[i : i + n]))
            total += 1
    return len(seen) / total if total else 0.0


class FactorSource(str, enum.Enum):
    """Where predicted factors come from when scoring a decoded text."""

    PHRASE_PREFIX = "phrase"
    CAPTION_LEXICON = "caption"


def caption_part(text: str) -> str:
    """Text after the first delimiter token, or the whole text without one."""
    tokens = tokenize(text)
    if DELIMITER in tokens:
        tokens = tokens[tokens.index(DELIMITER) + 1 :]
    return detokenize(tokens)


def predicted_factors(
    text: str,
    source: FactorSource,
    lexicon: FactorLexicon | None = None,
) -> FactorTuple | None:
    """Predicted FactorTuple for one decoded text, or None when unparseable."""
    if source is FactorSource.PHRASE_PREFIX:
        tokens = tokenize(text)
        if DELIMITER not in tokens:
            return None
        phrase = detokenize(tokens[: tokens.index(DELIMITER)])
        try:
            return parse_factor_phrase(phrase)
        except MalformedPhraseError:
            return None
    return extract_factors_from_caption(caption_part(text), lexicon or default_lexicon())


FACTOR_ORDER = ("gender", "pitch", "speed", "volume")


@dataclass(frozen=True)
class FactorScores:
    """Per-factor accuracies in percent and per-example correctness flags."""

    gender: float
    pitch: float
    speed: float
    volume: float
    avg: float
    per_example: list[dict]

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in FACTOR_ORDER + ("avg",)}


def factor_accuracy(
    decoded: Sequence[dict],
    golden: Sequence[Example],
    source: FactorSource,
    lexicon: FactorLexicon | None = None,
) -> FactorScores:
    """Fraction of examples whose predicted class matches golden, per factor.

    Unknown or unparseable predictions count as incorrect for every factor
    they fail to pin down.
    """
    if [row["id"] for row in decoded] != [e.id for e in golden]:
        raise IdMismatchError("decoded ids do not match golden ids")
    if not decoded:
        raise EmptyCorpusError("need at least one decoded example")
    lexicon = lexicon or default_lexicon()
    flags: list[dict] = []
    for row, example in zip(decoded, golden):
        predicted = predicted_factors(row["text"], source, lexicon)
        flags.append(
            {
                "id": example.id,
                **{
                    factor: bool(
                        predicted is not None
                        and predicted.value_of(factor) == example.factors.value_of(factor)
                    )
                    for factor in FACTOR_ORDER
                },
            }
        )
    pct = {
        factor: 100.0 * sum(f[factor] for f in flags) / len(flags) for factor in FACTOR_ORDER
    }
    avg = sum(pct.values()) / len(FACTOR_ORDER)
    return FactorScores(per_example=flags, avg=avg, **pct)


@dataclass(frozen=True)
class BootstrapResult:
    p_value: float
    mean_a: float
    mean_b: float

    def as_dict(self) -> dict:
        return {"p_value": self.p_value, "mean_a": self.mean_a, "mean_b": self.mean_b}


def bootstrap_compare(
    scores_a: Sequence[float],
    scores_b: Sequence[float],
    n_resamples: int = 1000,
    seed: int = 0,
) -> BootstrapResult:
    """Paired bootstrap over example indices.

    One-sided test of "A better than B": p is the fraction of resamples where
    mean(A) <= mean(B); ties favor the null.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatchError("score vectors must be 1-d and the same length")
    if a.size < 2:
        raise LengthMismatchError("need at least 2 paired scores")
    if n_resamples < 1:
        raise ValueError("n_resamples must be >= 1")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, a.size, size=(n_resamples, a.size))
    p = float(np.mean(a[idx].mean(axis=1) <= b[idx].mean(axis=1)))
    return BootstrapResult(p_value=p, mean_a=float(a.mean()), mean_b=float(b.mean()))


def bootstrap_compare_corpus(
    items_a: Sequence,
    items_b: Sequence,
    metric_fn: Callable[[Sequence], float],
    n_resamples: int = 1000,
    seed: int = 0,
) -> BootstrapResult:
    """Paired bootstrap for corpus-level metrics (distinct-n, BLEU).

    Resamples the set of examples with replacement and recomputes the metric
    on each resample for both systems with the same index draw.
    """
    if len(items_a) != len(items_b):
        raise LengthMismatchError("item lists must be the same length")
    if len(items_a) < 2:
        raise LengthMismatchError("need at least 2 paired items")
    rng = np.random.default_rng(seed)
    n = len(items_a)
    wins_null = 0
    for _ in range(n_resamples):
        idx = rng.integers(0, n, size=n)
        stat_a = metric_fn([items_a[i] for i in idx])
        stat_b = metric_fn([items_b[i] for i in idx])
        if stat_a <= stat_b:
            wins_null += 1
    return BootstrapResult(
        p_value=wins_null / n_resamples,
        mean_a=float(metric_fn(items_a)),
        mean_b=float(metric_fn(items_b)),
    )


@dataclass(frozen=True)
class EvalReport:
    """Metric bundle for one decoded system, with per-example scores retained."""

    bleu4: float
    rouge_l: float
    meteor_lite: float
    distinct1: float
    distinct2: float
    factors: FactorScores
    factor_source: str
    n_examples: int
    per_example: list[dict]

    def as_dict(self) -> dict:
        return {
            "corpus": {
                "bleu4": self.bleu4,
                "rouge_l": self.rouge_l,
                "meteor_lite": self.meteor_lite,
                "distinct1": self.distinct1,
                "distinct2": self.distinct2,
            },
            "factors": self.factors.as_dict(),
            "factor_source": self.factor_source,
            "n_examples": self.n_examples,
            "per_example": self.per_example,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.as_dict(), indent=2), encoding="utf-8")


def load_report(path: str | Path) -> dict:
    report = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("corpus", "factors", "per_example"):
        if key not in report:
            raise ValueError(f"not an evaluation report: missing {key!r}")
    return report


def evaluate(
    hyp_rows: Sequence[dict],
    references: Sequence[Example],
    lexicon: FactorLexicon | None = None,
    factor_source: FactorSource = FactorSource.CAPTION_LEXICON,
) -> EvalReport:
    """Score decoded rows against reference examples.

    Caption metrics compare captions to captions: when a hypothesis contains
    the delimiter, only the text after it is scored. Factor accuracy uses the
    selected source.
    """
    if [row["id"] for row in hyp_rows] != [e.id for e in references]:
        raise IdMismatchError("hypothesis ids do not match reference ids")
    if not hyp_rows:
        raise EmptyCorpusError("nothing to evaluate")
    lexicon = lexicon or default_lexicon()

    hyp_tokens = [tokenize(caption_part(row["text"])) for row in hyp_rows]
    ref_tokens = [tokenize(e.caption) for e in references]
    scores = factor_accuracy(hyp_rows, references, factor_source, lexicon)

    per_example = []
    rouge_sum = 0.0
    meteor_sum = 0.0
    for row, hyp, ref, flags in zip(hyp_rows, hyp_tokens, ref_tokens, scores.per_example):
        r = rouge_l(hyp, ref) if hyp else 0.0
        m = meteor_lite(hyp, ref) if hyp else 0.0
        rouge_sum += r
        meteor_sum += m
        per_example.append({"id": row["id"], "rouge_l": r, "meteor_lite": m, **{
            factor: flags[factor] for factor in FACTOR_ORDER
        }})

    return EvalReport(
        bleu4=bleu4(hyp_tokens, ref_tokens),
        rouge_l=rouge_sum / len(hyp_rows),
        meteor_lite=meteor_sum / len(hyp_rows),
        distinct1=distinct_n(hyp_tokens, 1),
        distinct2=distinct_n(hyp_tokens, 2),
        factors=scores,
        factor_source=factor_source.value,
        n_examples=len(hyp_rows),
        per_example=per_example,
    )


def evaluate_files(
    hyp_path: str | Path,
    ref_path: str | Path,
    lexicon: FactorLexicon | None = None,
    factor_source: FactorSource = FactorSource.CAPTION_LEXICON,
) -> EvalReport:
    return evaluate(read_decode_jsonl(hyp_path), read_jsonl(ref_path), lexicon, factor_source)
