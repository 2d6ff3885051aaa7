"""Maven-style version strings: parsing, ordering, change classification and ranges.

Ordering follows the Maven rules for the subset supported here: numeric
segments compare numerically with zero padding, and a qualifier ranks as

    alpha < beta < milestone < rc < snapshot < (release) < sp < other

where "other" qualifiers compare lexically among themselves.  A qualifier
may carry a trailing number (``1.0-beta2``), compared numerically.
"""

from __future__ import annotations

import enum
import re
from bisect import bisect_left
from dataclasses import dataclass, field
from functools import total_ordering
from typing import Iterable, Sequence


class VersionError(ValueError):
    """Raised for malformed version or requirement strings."""

    def __init__(self, message: str, text: str, position: int | None = None):
        self.text = text
        self.position = position
        if position is not None:
            message = f"{message} at position {position} in {text!r}"
        else:
            message = f"{message}: {text!r}"
        super().__init__(message)


# Rank of each canonical qualifier; the empty qualifier is a plain release.
_QUALIFIER_RANK = {
    "alpha": 0,
    "beta": 1,
    "milestone": 2,
    "rc": 3,
    "snapshot": 4,
    "": 5,
    "sp": 6,
}
_UNKNOWN_RANK = 7

_ALIASES = {
    "a": "alpha",
    "b": "beta",
    "m": "milestone",
    "cr": "rc",
    "ga": "",
    "final": "",
    "release": "",
}

DEV_QUALIFIERS = frozenset({"alpha", "beta", "milestone", "rc", "snapshot", "cr", "dev"})

_ALLOWED = re.compile(r"[A-Za-z0-9.\-_]")
_QUALIFIER = re.compile(r"^([a-z]+)[-._]?(\d*)$")


def _normalize_qualifier(raw: str, text: str, offset: int) -> tuple[str, int | None]:
    m = _QUALIFIER.match(raw.lower())
    if not m:
        raise VersionError("malformed qualifier", text, offset)
    name, number = m.group(1), m.group(2)
    # single-letter shorthands only count when followed by a number (Maven rule)
    if name in ("a", "b", "m") and not number:
        canonical = name
    else:
        canonical = _ALIASES.get(name, name)
    return canonical, int(number) if number else None


@total_ordering
@dataclass(frozen=True, eq=False)
class Version:
    original_text: str
    numeric_segments: tuple[int, ...]
    qualifier: str | None = None
    qualifier_number: int | None = None
    is_prerelease: bool = field(default=False)
    key: tuple = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "key", self._sort_key())

    def _sort_key(self) -> tuple:
        # trailing zeros trimmed, so plain tuple comparison equals zero-padded comparison
        segs = list(self.numeric_segments)
        while len(segs) > 1 and segs[-1] == 0:
            segs.pop()
        q = self.qualifier or ""
        rank = _QUALIFIER_RANK.get(q, _UNKNOWN_RANK)
        return (tuple(segs), rank, q if rank == _UNKNOWN_RANK else "", self.qualifier_number or 0)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Version):
            return NotImplemented
        return self.key == other.key

    def __lt__(self, other: Version) -> bool:
        if not isinstance(other, Version):
            return NotImplemented
        return self.key < other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def canonical(self) -> str:
        text = ".".join(str(s) for s in self.numeric_segments)
        if self.qualifier:
            text += "-" + self.qualifier
            if self.qualifier_number is not None:
                text += str(self.qualifier_number)
        elif self.qualifier_number is not None:
            text += "-" + str(self.qualifier_number)
        return text

    def segment(self, i: int) -> int:
        return self.numeric_segments[i] if i < len(self.numeric_segments) else 0

    def __str__(self) -> str:
        return self.original_text

    def __repr__(self) -> str:
        return f"Version({self.original_text!r})"


def parse_version(text: str, dev_qualifiers: Iterable[str] = DEV_QUALIFIERS) -> Version:
    if not text:
        raise VersionError("empty version", text)
    for i, ch in enumerate(text):
        if not _ALLOWED.match(ch):
            raise VersionError(f"illegal character {ch!r}", text, i)
    m = re.match(r"\d+(?:\.\d+)*", text)
    if not m:
        raise VersionError("version must start with a digit", text, 0)
    numeric = m.group(0)
    segments = tuple(int(s) for s in numeric.split("."))
    rest = text[m.end():]
    qualifier: str | None = None
    number: int | None = None
    if rest:
        offset = m.end()
        sep = rest[0]
        if sep in ".-_":
            rest = rest[1:]
            offset += 1
            if not rest:
                raise VersionError("empty segment", text, offset)
            if rest[0] in ".-_":
                raise VersionError("empty segment", text, offset)
        if rest.isdigit():
            # build number such as "1.0-2": kept as an unnamed qualifier number
            number = int(rest)
            qualifier = None
        else:
            qualifier, number = _normalize_qualifier(rest, text, offset)
            if qualifier == "":
                qualifier = None
    devs = {q.lower() for q in dev_qualifiers}
    devs |= {_ALIASES.get(q, q) for q in devs}
    is_pre = qualifier is not None and qualifier in devs
    return Version(text, segments, qualifier, number, is_pre)


class Ordering(enum.IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


def compare(a: Version, b: Version) -> Ordering:
    if a == b:
        return Ordering.EQUAL
    return Ordering.LESS if a < b else Ordering.GREATER


class ChangeKind(str, enum.Enum):
    NONE = "none"
    PATCH = "patch"
    MINOR = "minor"
    MAJOR = "major"
    TO_PRERELEASE = "to_prerelease"


def classify_change(old: Version, new: Version) -> ChangeKind:
    """Classify a version transition by the first differing numeric segment.

    A move from a release to a prerelease overrides the segment rule.
    Downgrades are classified the same way as upgrades.
    """
    if old == new:
        return ChangeKind.NONE
    if not old.is_prerelease and new.is_prerelease:
        return ChangeKind.TO_PRERELEASE
    if old.segment(0) != new.segment(0):
        return ChangeKind.MAJOR
    if old.segment(1) != new.segment(1):
        return ChangeKind.MINOR
    return ChangeKind.PATCH


# -- requirements ------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    lower: Version | None
    lower_inclusive: bool
    upper: Version | None
    upper_inclusive: bool

    def contains(self, v: Version) -> bool:
        if self.lower is not None:
            if v < self.lower or (v == self.lower and not self.lower_inclusive):
                return False
        if self.upper is not None:
            if self.upper < v or (v == self.upper and not self.upper_inclusive):
                return False
        return True

    def __str__(self) -> str:
        lo = "[" if self.lower_inclusive else "("
        hi = "]" if self.upper_inclusive else ")"
        if self.lower is not None and self.lower == self.upper:
            return f"[{self.lower}]"
        low = str(self.lower) if self.lower is not None else ""
        up = str(self.upper) if self.upper is not None else ""
        return f"{lo}{low},{up}{hi}"


class RequirementKind(str, enum.Enum):
    SOFT_PIN = "soft_pin"
    HARD_RANGE_SET = "hard_range_set"


@dataclass(frozen=True)
class VersionRequirement:
    kind: RequirementKind
    pin: Version | None = None
    ranges: tuple[Interval, ...] = ()

    @property
    def is_hard(self) -> bool:
        return self.kind is RequirementKind.HARD_RANGE_SET

    def contains(self, v: Version) -> bool:
        """Hard range membership; a soft pin admits every version."""
        if not self.is_hard:
            return True
        return any(r.contains(v) for r in self.ranges)

    def __str__(self) -> str:
        if self.pin is not None:
            return str(self.pin)
        return ",".join(str(r) for r in self.ranges)


def _parse_interval(body: str, open_ch: str, close_ch: str, text: str, offset: int) -> Interval:
    if "," not in body:
        if open_ch != "[" or close_ch != "]" or not body.strip():
            raise VersionError("exact version must use [x]", text, offset)
        v = parse_version(body.strip())
        return Interval(v, True, v, True)
    lo_text, _, hi_text = body.partition(",")
    if "," in hi_text:
        raise VersionError("too many bounds in range", text, offset)
    lo = parse_version(lo_text.strip()) if lo_text.strip() else None
    hi = parse_version(hi_text.strip()) if hi_text.strip() else None
    if lo is not None and hi is not None:
        if hi < lo:
            raise VersionError("inverted range bounds", text, offset)
        if lo == hi and not (open_ch == "[" and close_ch == "]"):
            raise VersionError("empty range", text, offset)
    if lo is None and open_ch == "[":
        raise VersionError("unbounded lower bound must be exclusive", text, offset)
    if hi is None and close_ch == "]":
        raise VersionError("unbounded upper bound must be exclusive", text, offset)
    return Interval(lo, open_ch == "[", hi, close_ch == "]")


def parse_requirement(text: str) -> VersionRequirement:
    stripped = text.strip()
    if not stripped:
        raise VersionError("empty requirement", text)
    if stripped[0] not in "[(":
        if any(ch in stripped for ch in "[]()"):
            raise VersionError("unbalanced brackets", text)
        return VersionRequirement(RequirementKind.SOFT_PIN, pin=parse_version(stripped))
    ranges: list[Interval] = []
    i = 0
    n = len(stripped)
    while i < n:
        ch = stripped[i]
        if ch not in "[(":
            raise VersionError(f"expected '[' or '(' but found {ch!r}", text, i)
        j = i + 1
        while j < n and stripped[j] not in "])":
            if stripped[j] in "[(":
                raise VersionError("unbalanced brackets", text, j)
            j += 1
        if j >= n:
            raise VersionError("unbalanced brackets", text, i)
        ranges.append(_parse_interval(stripped[i + 1:j], ch, stripped[j], text, i))
        i = j + 1
        if i < n:
            if stripped[i] != ",":
                raise VersionError("expected ',' between ranges", text, i)
            i += 1
            if i >= n:
                raise VersionError("trailing ','", text, i)
    return VersionRequirement(RequirementKind.HARD_RANGE_SET, ranges=tuple(ranges))


def allowed_versions(
    requirements: Iterable[VersionRequirement], available: Sequence[Version]
) -> list[Version]:
    """Versions of ``available`` admitted by every hard requirement.

    Soft pins are recommendations and never restrict.  An empty result means
    the hard ranges do not intersect (a dependency conflict).
    """
    hard = [r for r in requirements if r.is_hard]
    return [v for v in available if all(r.contains(v) for r in hard)]


def distance(available: Sequence[Version], a: Version, b: Version) -> int:
    return abs(_index_of(available, a) - _index_of(available, b))


def _index_of(available: Sequence[Version], v: Version) -> int:
    i = bisect_left(available, v)
    if i == len(available) or available[i] != v:
        raise KeyError(f"version {v} is not among the available versions")
    return i
