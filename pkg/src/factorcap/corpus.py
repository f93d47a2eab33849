"""Synthetic style-caption corpus.

Generates examples of (factor tuple, noisy condition vector, caption), builds
factor-phrase training targets, and serializes datasets as JSON Lines.
"""

from __future__ import annotations

import enum
import json
import string
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .factors import (
    FACTOR_ENUMS,
    FACTOR_NAMES,
    FactorLexicon,
    FactorTuple,
    Gender,
    UnknownGenderError,
    default_lexicon,
    extract_factors_from_caption,
    render_factor_phrase,
)
from .text import DELIMITER


class SchemaError(ValueError):
    """A serialized record does not match the expected schema."""

    def __init__(self, line: int, field_name: str, reason: str = ""):
        self.line = line
        self.field = field_name
        msg = f"line {line}: bad field {field_name!r}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class EmptyTemplateSetError(ValueError):
    """Dataset generation was asked to run with no caption templates."""


# Signed class patterns. Each factor owns one block of the condition vector;
# the three-class patterns are mutually orthogonal so classes stay linearly
# separable at zero noise.
_TWO_CLASS_PATTERNS = {
    "male": (1.0, 1.0, 1.0, 1.0),
    "female": (-1.0, -1.0, -1.0, -1.0),
}
_THREE_CLASS_PATTERNS = {
    0: (1.0, 1.0, -1.0, -1.0),
    1: (-1.0, 1.0, 1.0, -1.0),
    2: (1.0, -1.0, 1.0, -1.0),
}
# Scale of the noise-free patterns; together with the default noise_sigma it
# sets how hard the factors are to recover from a noisy condition vector.
PATTERN_SCALE = 0.75


def class_pattern(factor: str, value, block_size: int) -> np.ndarray:
    """Noise-free block pattern for one factor class."""
    if factor == "gender":
        base = _TWO_CLASS_PATTERNS[value.value]
    else:
        members = list(FACTOR_ENUMS[factor])
        base = _THREE_CLASS_PATTERNS[members.index(value)]
    return PATTERN_SCALE * np.resize(np.asarray(base, dtype=np.float64), block_size)


def synthesize_style_vector(
    t: FactorTuple,
    sigma: float,
    rng: np.random.Generator,
    dim: int = 16,
) -> np.ndarray:
    """Deterministic factor embedding plus zero-mean Gaussian noise of std ``sigma``.

    The vector is split into four equal blocks, one per factor, so classes are
    linearly separable when ``sigma`` is 0.
    """
    if t.gender is Gender.UNKNOWN:
        raise UnknownGenderError("cannot synthesize a style vector for unknown gender")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if dim % len(FACTOR_NAMES) != 0 or dim < len(FACTOR_NAMES):
        raise ValueError(f"dim must be a positive multiple of {len(FACTOR_NAMES)}")
    block = dim // len(FACTOR_NAMES)
    base = np.concatenate(
        [class_pattern(factor, t.value_of(factor), block) for factor in FACTOR_NAMES]
    )
    return base + rng.normal(0.0, sigma, size=dim)


@dataclass(frozen=True)
class Template:
    """One caption template with a fixed surface word per factor class."""

    text: str
    verbalized: frozenset[str]
    words: dict[str, dict[str, str]]  # factor -> class value -> surface word

    def compatible(self, t: FactorTuple) -> bool:
        """Usable for ``t``: every omitted non-gender factor must be normal."""
        for factor in ("pitch", "volume", "speed"):
            if factor not in self.verbalized and t.value_of(factor).value != "normal":
                return False
        return True

    def fill(self, t: FactorTuple) -> str:
        values = {
            factor: self.words[factor][t.value_of(factor).value] for factor in self.verbalized
        }
        return self.text.format(**values)


# Surface words available to templates, keyed by (factor, class). Every word
# must be present in the default lexicon with the same (factor, class) so
# extraction recovers the intended labels from generated captions.
SURFACE_WORDS: dict[str, dict[str, tuple[str, ...]]] = {
    "gender": {"male": ("man", "gentleman"), "female": ("woman", "lady")},
    "pitch": {
        "low": ("deep", "low-pitched"),
        "normal": ("medium-pitched",),
        "high": ("high-pitched", "shrill"),
    },
    "volume": {
        "low": ("quietly", "softly"),
        "normal": ("moderately",),
        "high": ("loudly", "noisily"),
    },
    "speed": {
        "slow": ("slow", "leisurely"),
        "normal": ("steady",),
        "fast": ("brisk", "rapid"),
    },
}


def _template_words(index: int, verbalized: frozenset[str]) -> dict[str, dict[str, str]]:
    # Cycle through the synonym pools by template position so the corpus uses
    # every surface word somewhere while each template stays deterministic.
    return {
        factor: {
            value: pool[index % len(pool)]
            for value, pool in SURFACE_WORDS[factor].items()
        }
        for factor in verbalized
    }


def parse_template_line(line: str, index: int) -> Template:
    cols = line.split("\t")
    if len(cols) != 2:
        raise ValueError(f"template line must be 'factors<TAB>text': {line!r}")
    header = frozenset(part.strip() for part in cols[0].split(",") if part.strip())
    unknown = header - set(FACTOR_NAMES)
    if unknown:
        raise ValueError(f"unknown factors in template header: {sorted(unknown)}")
    text = cols[1].strip()
    placeholders = {name for _, name, _, _ in string.Formatter().parse(text) if name}
    if placeholders != header:
        raise ValueError(
            f"template placeholders {sorted(placeholders)} do not match header {sorted(header)}"
        )
    return Template(text=text, verbalized=header, words=_template_words(index, header))


def load_templates(path: str | Path) -> tuple[Template, ...]:
    """Load templates from a plain-text file, one per line, ``#`` comments."""
    templates = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        templates.append(parse_template_line(line, len(templates)))
    return tuple(templates)


def default_templates() -> tuple[Template, ...]:
    ref = resources.files("factorcap.data").joinpath("default_templates.tsv")
    with resources.as_file(ref) as path:
        return load_templates(path)


def unique_caption_count(templates: Sequence[Template]) -> int:
    """Number of distinct caption strings the template set can produce."""
    captions = set()
    for template in templates:
        factors = sorted(template.verbalized)
        combos: list[dict[str, str]] = [{}]
        for factor in factors:
            combos = [
                {**c, factor: word} for c in combos for word in template.words[factor].values()
            ]
        for values in combos:
            captions.add(template.text.format(**values))
    return len(captions)


@dataclass(frozen=True)
class Example:
    """One corpus item: golden factors, condition vector, caption, optional target."""

    id: str
    factors: FactorTuple
    style_vector: list[float]
    caption: str
    fcc_target: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "factors": self.factors.as_dict(),
            "style_vector": self.style_vector,
            "caption": self.caption,
            "fcc_target": self.fcc_target,
        }


@dataclass(frozen=True)
class CorpusSpec:
    """Everything needed to regenerate a dataset bit-for-bit."""

    n_train: int
    n_dev: int
    n_test: int
    noise_sigma: float = 0.5
    dim: int = 16
    seed: int = 0
    templates: tuple[Template, ...] = field(default_factory=default_templates)

    def as_dict(self) -> dict:
        return {
            "n_train": self.n_train,
            "n_dev": self.n_dev,
            "n_test": self.n_test,
            "noise_sigma": self.noise_sigma,
            "dim": self.dim,
            "seed": self.seed,
            "n_templates": len(self.templates),
        }


@dataclass(frozen=True)
class Dataset:
    train: list[Example]
    dev: list[Example]
    test: list[Example]
    spec: CorpusSpec

    def split(self, name: str) -> list[Example]:
        return {"train": self.train, "dev": self.dev, "test": self.test}[name]


_GOLDEN_GENDERS = (Gender.MALE, Gender.FEMALE)


def _draw_tuple(rng: np.random.Generator) -> FactorTuple:
    pitch = list(FACTOR_ENUMS["pitch"])
    volume = list(FACTOR_ENUMS["volume"])
    speed = list(FACTOR_ENUMS["speed"])
    return FactorTuple(
        gender=_GOLDEN_GENDERS[rng.integers(0, 2)],
        pitch=pitch[rng.integers(0, 3)],
        volume=volume[rng.integers(0, 3)],
        speed=speed[rng.integers(0, 3)],
    )


def generate_dataset(spec: CorpusSpec) -> Dataset:
    """Generate disjoint train/dev/test splits, fully reproducible from ``spec``.

    Factor classes are drawn uniformly; the caption comes from a template
    chosen uniformly among those compatible with the drawn tuple, so captions
    never contradict golden labels.
    """
    if not spec.templates:
        raise EmptyTemplateSetError("template set must not be empty")
    rng = np.random.default_rng(spec.seed)
    lexicon = default_lexicon()
    splits: dict[str, list[Example]] = {}
    for split_name, count in (("train", spec.n_train), ("dev", spec.n_dev), ("test", spec.n_test)):
        examples = []
        for i in range(count):
            t = _draw_tuple(rng)
            compatible = [tpl for tpl in spec.templates if tpl.compatible(t)]
            if not compatible:
                raise ValueError(f"no template is compatible with factor tuple {t.as_dict()}")
            template = compatible[rng.integers(0, len(compatible))]
            caption = template.fill(t)
            vector = synthesize_style_vector(t, spec.noise_sigma, rng, spec.dim)
            example = Example(
                id=f"{split_name}-{i:04d}",
                factors=t,
                style_vector=[float(x) for x in vector],
                caption=caption,
            )
            target = build_fcc_target(example, FccMode.GOLDEN, lexicon)
            examples.append(replace(example, fcc_target=target))
        splits[split_name] = examples
    return Dataset(train=splits["train"], dev=splits["dev"], test=splits["test"], spec=spec)


class FccMode(enum.Enum):
    """Where the factor phrase of a training target comes from."""

    GOLDEN = "golden"
    PREDICTED = "predicted"


def build_fcc_target(
    example: Example,
    mode: FccMode,
    lexicon: FactorLexicon | None = None,
) -> str:
    """``"<factor phrase> style: <caption>"`` for one example.

    In PREDICTED mode the factors are extracted from the caption; an unknown
    extracted gender falls back to the golden gender (the extraction failure
    is counted by :func:`build_fcc_targets`).
    """
    if not example.caption:
        raise ValueError("caption must be non-empty")
    if mode is FccMode.GOLDEN:
        phrase = render_factor_phrase(example.factors)
    else:
        t = extract_factors_from_caption(example.caption, lexicon or default_lexicon())
        if t.gender is Gender.UNKNOWN:
            t = t.with_gender(example.factors.gender)
        phrase = render_factor_phrase(t)
    return f"{phrase} {DELIMITER} {example.caption}"


def build_fcc_targets(
    examples: Iterable[Example],
    mode: FccMode,
    lexicon: FactorLexicon | None = None,
) -> tuple[list[str], int]:
    """Targets for a whole split plus the count of gender-extraction fallbacks."""
    lexicon = lexicon or default_lexicon()
    targets = []
    fallbacks = 0
    for example in examples:
        if mode is FccMode.PREDICTED:
            t = extract_factors_from_caption(example.caption, lexicon)
            if t.gender is Gender.UNKNOWN:
                fallbacks += 1
        targets.append(build_fcc_target(example, mode, lexicon))
    return targets, fallbacks


_REQUIRED_FIELDS = ("id", "factors", "style_vector", "caption")


def write_jsonl(path: str | Path, examples: Iterable[Example]) -> None:
    """One example per line, stable field order, UTF-8."""
    with open(path, "w", encoding="utf-8") as fh:
        for example in examples:
            fh.write(json.dumps(example.to_json_dict(), ensure_ascii=False) + "\n")


def _parse_example(record: dict, lineno: int) -> Example:
    for name in _REQUIRED_FIELDS:
        if name not in record:
            raise SchemaError(lineno, name, "missing")
    if not isinstance(record["id"], str):
        raise SchemaError(lineno, "id", "must be a string")
    if not isinstance(record["factors"], dict):
        raise SchemaError(lineno, "factors", "must be an object")
    try:
        factors = FactorTuple.from_dict(record["factors"])
    except ValueError as exc:
        raise SchemaError(lineno, "factors", str(exc)) from None
    if factors.gender is Gender.UNKNOWN:
        raise SchemaError(lineno, "factors", "golden gender may not be unknown")
    vector = record["style_vector"]
    if not isinstance(vector, list) or not all(isinstance(x, (int, float)) for x in vector):
        raise SchemaError(lineno, "style_vector", "must be an array of numbers")
    if not isinstance(record["caption"], str) or not record["caption"]:
        raise SchemaError(lineno, "caption", "must be a non-empty string")
    target = record.get("fcc_target")
    if target is not None and not isinstance(target, str):
        raise SchemaError(lineno, "fcc_target", "must be a string or null")
    return Example(
        id=record["id"],
        factors=factors,
        style_vector=[float(x) for x in vector],
        caption=record["caption"],
        fcc_target=target,
    )


def read_jsonl(path: str | Path) -> list[Example]:
    """Inverse of :func:`write_jsonl`; raises :class:`SchemaError` on bad records."""
    examples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(lineno, "<line>", f"not valid JSON: {exc}") from None
            if not isinstance(record, dict):
                raise SchemaError(lineno, "<line>", "record must be a JSON object")
            examples.append(_parse_example(record, lineno))
    return examples
