"""Speaking-style factor domain.

Four categorical factors describe a speaking style: gender, pitch, volume and
speaking speed. This module defines the typed tuple of factors, the fixed
factor-phrase template and its inverse, and a deterministic keyword-lexicon
extractor that predicts factors from free-text captions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .text import tokenize


class Gender(enum.Enum):
    MALE = "male"
    FEMALE = "female"
    UNKNOWN = "unknown"


class Pitch(enum.Enum):
    LOW = "low"
    NORMAL = "normal"
    HIGH = "high"


class Volume(enum.Enum):
    LOW = "low"
    NORMAL = "normal"
    HIGH = "high"


class Speed(enum.Enum):
    SLOW = "slow"
    NORMAL = "normal"
    FAST = "fast"


FACTOR_NAMES = ("gender", "pitch", "volume", "speed")

FACTOR_ENUMS: Mapping[str, type[enum.Enum]] = {
    "gender": Gender,
    "pitch": Pitch,
    "volume": Volume,
    "speed": Speed,
}


class UnknownGenderError(ValueError):
    """A concrete gender was required but the tuple carries ``Gender.UNKNOWN``."""


class MalformedPhraseError(ValueError):
    """A string does not follow the fixed factor-phrase template."""

    def __init__(self, position: int, reason: str):
        self.position = position
        self.reason = reason
        super().__init__(f"term {position}: {reason}")


@dataclass(frozen=True)
class FactorTuple:
    """One value per speaking-style factor.

    ``Gender.UNKNOWN`` is legal only as an extraction result; golden corpus
    labels always carry a concrete gender.
    """

    gender: Gender
    pitch: Pitch
    volume: Volume
    speed: Speed

    def as_dict(self) -> dict[str, str]:
        return {
            "gender": self.gender.value,
            "pitch": self.pitch.value,
            "volume": self.volume.value,
            "speed": self.speed.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, str]) -> "FactorTuple":
        try:
            return cls(
                gender=Gender(d["gender"]),
                pitch=Pitch(d["pitch"]),
                volume=Volume(d["volume"]),
                speed=Speed(d["speed"]),
            )
        except (KeyError, ValueError) as exc:
            raise ValueError(f"not a valid factor mapping: {dict(d)!r}") from exc

    def value_of(self, factor: str) -> enum.Enum:
        return getattr(self, factor)

    def with_gender(self, gender: Gender) -> "FactorTuple":
        return replace(self, gender=gender)


def all_known_tuples() -> list[FactorTuple]:
    """Every FactorTuple with a concrete gender (2*3*3*3 = 54 tuples)."""
    return [
        FactorTuple(g, p, v, s)
        for g in (Gender.MALE, Gender.FEMALE)
        for p in Pitch
        for v in Volume
        for s in Speed
    ]


def render_factor_phrase(t: FactorTuple) -> str:
    """Render the fixed-template phrase, e.g. ``male, low pitch, high volume, normal speed``."""
    if t.gender is Gender.UNKNOWN:
        raise UnknownGenderError("cannot render a factor phrase without a concrete gender")
    return (
        f"{t.gender.value}, {t.pitch.value} pitch, "
        f"{t.volume.value} volume, {t.speed.value} speed"
    )


def parse_factor_phrase(s: str) -> FactorTuple:
    """Inverse of :func:`render_factor_phrase`.

    Case-insensitive and tolerant of surrounding whitespace; anything else
    raises :class:`MalformedPhraseError` with the offending term position.
    """
    terms = [term.strip() for term in s.strip().lower().split(",")]
    if len(terms) != 4:
        raise MalformedPhraseError(len(terms), f"expected 4 comma-separated terms, got {len(terms)}")

    try:
        gender = Gender(terms[0])
    except ValueError:
        raise MalformedPhraseError(0, f"unknown gender term {terms[0]!r}") from None
    if gender is Gender.UNKNOWN:
        raise MalformedPhraseError(0, "gender term must be male or female")

    parsed: dict[str, enum.Enum] = {"gender": gender}
    for position, factor in enumerate(("pitch", "volume", "speed"), start=1):
        words = terms[position].split()
        if len(words) != 2 or words[1] != factor:
            raise MalformedPhraseError(
                position, f"expected '<class> {factor}', got {terms[position]!r}"
            )
        try:
            parsed[factor] = FACTOR_ENUMS[factor](words[0])
        except ValueError:
            raise MalformedPhraseError(position, f"unknown {factor} class {words[0]!r}") from None
    return FactorTuple(parsed["gender"], parsed["pitch"], parsed["volume"], parsed["speed"])  # type: ignore[arg-type]


@dataclass(frozen=True)
class FactorLexicon:
    """Keyword-to-factor-class table used to extract factors from captions.

    ``entries`` maps a lowercase word to a ``(factor, class)`` pair. Matching
    is per-token and exact; there is no stemming.
    """

    entries: Mapping[str, tuple[str, enum.Enum]]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str, str]]) -> "FactorLexicon":
        entries: dict[str, tuple[str, enum.Enum]] = {}
        for keyword, factor, class_name in pairs:
            keyword = keyword.strip().lower()
            if not keyword:
                raise ValueError("empty keyword")
            if factor not in FACTOR_ENUMS:
                raise ValueError(f"unknown factor {factor!r} for keyword {keyword!r}")
            try:
                value = FACTOR_ENUMS[factor](class_name.strip().lower())
            except ValueError:
                raise ValueError(f"unknown class {class_name!r} for factor {factor!r}") from None
            if keyword in entries:
                raise ValueError(f"duplicate keyword {keyword!r}")
            entries[keyword] = (factor, value)
        return cls(entries=entries)

    @classmethod
    def from_file(cls, path: str | Path) -> "FactorLexicon":
        """Load a plain-text table: one ``keyword<TAB>factor<TAB>class`` per line, ``#`` comments."""
        pairs = []
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated columns")
            pairs.append((cols[0], cols[1], cols[2]))
        return cls.from_pairs(pairs)

    def classes_for(self, factor: str) -> dict[enum.Enum, list[str]]:
        """Invert the table: class -> keywords, for one factor."""
        out: dict[enum.Enum, list[str]] = {}
        for keyword, (fac, value) in self.entries.items():
            if fac == factor:
                out.setdefault(value, []).append(keyword)
        return out


def default_lexicon() -> FactorLexicon:
    """The lexicon shipped with the package (see ``data/default_lexicon.tsv``)."""
    ref = resources.files("factorcap.data").joinpath("default_lexicon.tsv")
    with resources.as_file(ref) as path:
        return FactorLexicon.from_file(path)


def extract_factors_from_caption(caption: str, lexicon: FactorLexicon) -> FactorTuple:
    """Predict factors from caption text by keyword lookup.

    Pitch, volume and speed default to ``NORMAL`` when nothing matches;
    gender defaults to ``UNKNOWN``. If two keywords for the same factor
    appear, the first occurrence in the caption wins.
    """
    found: dict[str, enum.Enum] = {}
    for word in tokenize(caption):
        hit = lexicon.entries.get(word)
        if hit is not None and hit[0] not in found:
            found[hit[0]] = hit[1]
    return FactorTuple(
        gender=found.get("gender", Gender.UNKNOWN),  # type: ignore[arg-type]
        pitch=found.get("pitch", Pitch.NORMAL),  # type: ignore[arg-type]
        volume=found.get("volume", Volume.NORMAL),  # type: ignore[arg-type]
        speed=found.get("speed", Speed.NORMAL),  # type: ignore[arg-type]
    )
