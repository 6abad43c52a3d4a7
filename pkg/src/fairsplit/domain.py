"""Demographic and task enumerations plus the text parsers used on load."""
from __future__ import annotations

import enum
import re


class TaskKind(str, enum.Enum):
    EXPR = "expr"
    AU = "au"
    VA = "va"

    @classmethod
    def parse(cls, text: str) -> "TaskKind":
        key = text.strip().lower()
        aliases = {"expression": "expr", "fer": "expr", "action_units": "au", "valence_arousal": "va"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown task kind {text!r}; expected expr, au or va") from None


class AgeBin(str, enum.Enum):
    """The nine annotation age bins. Bounds are inclusive; the last bin is open."""

    B0_2 = "0-2"
    B3_9 = "3-9"
    B10_19 = "10-19"
    B20_29 = "20-29"
    B30_39 = "30-39"
    B40_49 = "40-49"
    B50_59 = "50-59"
    B60_69 = "60-69"
    B70_PLUS = "70+"

    @property
    def lower(self) -> int:
        return _AGE_LOWER[self]

    @property
    def upper(self) -> int | None:
        """Inclusive upper bound, ``None`` for the open-ended bin."""
        return _AGE_UPPER[self]


_AGE_LOWER = {b: int(re.match(r"\d+", b.value).group()) for b in AgeBin}
_AGE_UPPER = {
    b: (None if b.value.endswith("+") else int(b.value.split("-")[1])) for b in AgeBin
}
AGE_LOWER_BOUNDS = tuple(sorted(_AGE_LOWER.values()))
AGE_UPPER_BOUNDS = tuple(u for u in (_AGE_UPPER[b] for b in AgeBin) if u is not None)


class Gender(str, enum.Enum):
    MALE = "Male"
    FEMALE = "Female"
    OTHER_UNCERTAIN = "OtherUncertain"


class Race(str, enum.Enum):
    ASIAN = "Asian"
    BLACK = "Black"
    INDIAN = "Indian"
    WHITE = "White"
    UNLABELED = "Unlabeled"


# Values excluded from fairness subgroup statistics, per attribute.
NON_SUBGROUP_VALUES = {
    "age": frozenset({None}),
    "gender": frozenset({None, Gender.OTHER_UNCERTAIN.value}),
    "race": frozenset({None, Race.UNLABELED.value}),
}

_GENDER_ALIASES = {
    "male": Gender.MALE,
    "m": Gender.MALE,
    "man": Gender.MALE,
    "female": Gender.FEMALE,
    "f": Gender.FEMALE,
    "woman": Gender.FEMALE,
    "other": Gender.OTHER_UNCERTAIN,
    "uncertain": Gender.OTHER_UNCERTAIN,
    "other/uncertain": Gender.OTHER_UNCERTAIN,
    "otheruncertain": Gender.OTHER_UNCERTAIN,
}

_RACE_ALIASES = {
    "asian": Race.ASIAN,
    "black": Race.BLACK,
    "african american": Race.BLACK,
    "black (or african american)": Race.BLACK,
    "indian": Race.INDIAN,
    "indian (or alaska native)": Race.INDIAN,
    "white": Race.WHITE,
    "caucasian": Race.WHITE,
    "white (or caucasian)": Race.WHITE,
    "unlabeled": Race.UNLABELED,
}

_UNLABELED_TEXT = {"", "unlabeled", "unknown", "na", "n/a", "none", "?"}


def parse_gender(text: str) -> tuple[str | None, bool]:
    """Return ``(value, recognized)``; unrecognized text maps to ``None``."""
    key = text.strip().lower()
    if key in _GENDER_ALIASES:
        return _GENDER_ALIASES[key].value, True
    return None, key in _UNLABELED_TEXT


def parse_race(text: str) -> tuple[str, bool]:
    key = text.strip().lower()
    if key in _RACE_ALIASES:
        return _RACE_ALIASES[key].value, True
    return Race.UNLABELED.value, key in _UNLABELED_TEXT


def age_bin_of(years: int) -> AgeBin:
    # callers validate years >= 0
    for b in AgeBin:
        if b.upper is None or years <= b.upper:
            return b
    raise AssertionError("unreachable")


_RANGE_RE = re.compile(r"^(\d+)\s*[-\u2013]\s*(\d+)$")
_OPEN_RE = re.compile(r"^(?:>=|≥)?\s*(\d+)\s*(?:\+|and over|or more)?$")
_LE_RE = re.compile(r"^(?:<=|≤)\s*(\d+)$")


def parse_age(text: str) -> tuple[str | None, bool]:
    """Parse an age cell into a bin label.

    Accepts integer years, canonical bin labels ("40-49", "70+"), zero-padded
    variants ("03-09"), and merged labels spanning consecutive canonical bins
    ("3-19", "40-69", "60+"). Returns ``(label, recognized)``.
    """
    key = text.strip().lower()
    if key in _UNLABELED_TEXT:
        return None, True
    if key.isdigit():
        return age_bin_of(int(key)).value, True
    m = _RANGE_RE.match(key)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        if lo in AGE_LOWER_BOUNDS and hi in AGE_UPPER_BOUNDS and lo <= hi:
            return f"{lo}-{hi}", True
        return None, False
    m = _LE_RE.match(key)
    if m and int(m.group(1)) in AGE_UPPER_BOUNDS:
        return f"0-{int(m.group(1))}", True
    if key.endswith("+") or "over" in key or "more" in key or key.startswith((">=", "≥")):
        m = _OPEN_RE.match(key)
        if m and int(m.group(1)) in AGE_LOWER_BOUNDS:
            return f"{int(m.group(1))}+", True
    return None, False


def age_label_sort_key(label: str) -> tuple[int, int]:
    m = re.match(r"(\d+)", label)
    lo = int(m.group(1)) if m else 10**6
    return lo, 1 if label.endswith("+") else 0


DEFAULT_EXPRESSIONS = (
    "Neutral",
    "Happiness",
    "Sadness",
    "Surprise",
    "Fear",
    "Disgust",
    "Anger",
    "Contempt",
)
