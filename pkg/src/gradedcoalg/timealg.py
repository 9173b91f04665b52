"""Grading monoids: exact time, observation counts and sampling intervals.

Times are nonnegative :class:`fractions.Fraction` values.  A sampling interval
is an alternating word ``(t_0, k_0, ..., t_n, k_n)`` of durations and
observation counts; :class:`SamplingWord` always holds the normalized
representative, so ``==`` and ``hash`` are monoid equality.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Union

TimeLike = Union[Fraction, int, str, float]


def as_time(value: TimeLike) -> Fraction:
    """Coerce ``value`` to an exact nonnegative time.

    Strings may be decimals (``"1.5"``) or fractions (``"3/2"``).  Floats are
    read through their shortest repr, so ``0.1`` becomes ``1/10``.
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not times")
    if isinstance(value, Fraction):
        t = value
    elif isinstance(value, int):
        t = Fraction(value)
    elif isinstance(value, float):
        t = Fraction(repr(value))
    elif isinstance(value, str):
        try:
            t = Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a time value: {value!r}") from exc
    else:
        raise TypeError(f"cannot interpret {type(value).__name__} as a time")
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    return t


def format_time(t: Fraction) -> str:
    """Render a time as a terminating decimal when possible, else ``p/q``."""
    t = Fraction(t)
    if t.denominator == 1:
        return str(t.numerator)
    den = t.denominator
    for p in (2, 5):
        while den % p == 0:
            den //= p
    if den != 1:
        return f"{t.numerator}/{t.denominator}"
    # terminating decimal: scale to a power of ten
    digits = 0
    scaled = t
    while scaled.denominator != 1:
        scaled *= 10
        digits += 1
    sign = "-" if scaled < 0 else ""
    text = str(abs(scaled.numerator)).rjust(digits + 1, "0")
    return f"{sign}{text[:-digits]}.{text[-digits:]}"


def _letters(raw: Iterable[tuple[TimeLike, int]]) -> list[tuple[str, object]]:
    """Flatten pairs into a reduced word over the two generating monoids."""
    out: list[tuple[str, object]] = []
    for pair in raw:
        try:
            t_raw, k = pair
        except (TypeError, ValueError) as exc:
            raise ValueError(f"segment must be a (time, count) pair, got {pair!r}") from exc
        t = as_time(t_raw)
        if isinstance(k, bool) or not isinstance(k, int):
            if isinstance(k, Fraction) and k.denominator == 1:
                k = int(k)
            else:
                raise ValueError(f"observation count must be an integer, got {k!r}")
        if k < 0:
            raise ValueError(f"observation count must be nonnegative, got {k}")
        for kind, val in (("t", t), ("k", k)):
            if not val:
                continue
            if out and out[-1][0] == kind:
                out[-1] = (kind, out[-1][1] + val)
            else:
                out.append((kind, val))
    return out


def samp_normalize(raw: Iterable[tuple[TimeLike, int]]) -> tuple[tuple[Fraction, int], ...]:
    """Canonical segment tuple for an arbitrary list of ``(time, count)`` pairs.

    Zero letters are dropped and adjacent letters of the same kind merged;
    the result starts with a time and ends with a count, padding with ``0``.
    """
    letters = _letters(raw)
    if not letters:
        return ((Fraction(0), 0),)
    if letters[0][0] == "k":
        letters.insert(0, ("t", Fraction(0)))
    if letters[-1][0] == "t":
        letters.append(("k", 0))
    return tuple(
        (Fraction(letters[i][1]), int(letters[i + 1][1])) for i in range(0, len(letters), 2)
    )


@dataclass(frozen=True)
class SamplingWord:
    """Element of the coproduct monoid of times and observation counts."""

    segments: tuple[tuple[Fraction, int], ...] = ((Fraction(0), 0),)

    def __post_init__(self):
        norm = samp_normalize(self.segments)
        object.__setattr__(self, "segments", norm)

    @classmethod
    def of(cls, *values: TimeLike) -> "SamplingWord":
        """Build from a flat alternating sequence ``t0, k0, t1, k1, ...``."""
        if len(values) % 2:
            raise ValueError("expected an even number of values (time, count, ...)")
        return cls(tuple((values[i], values[i + 1]) for i in range(0, len(values), 2)))

    @classmethod
    def unit(cls) -> "SamplingWord":
        return cls()

    @property
    def is_unit(self) -> bool:
        return self.segments == ((0, 0),)

    def __mul__(self, other: "SamplingWord") -> "SamplingWord":
        if not isinstance(other, SamplingWord):
            return NotImplemented
        return samp_mul(self, other)

    def __iter__(self):
        return iter(self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def length(self) -> Fraction:
        return length_morphism(self)

    @property
    def count(self) -> int:
        return count_morphism(self)

    def flat(self) -> tuple:
        return tuple(x for seg in self.segments for x in seg)

    def __str__(self) -> str:
        return format_word(self)

    def __repr__(self) -> str:
        return f"SamplingWord({format_word(self)!r})"


def samp_mul(u: SamplingWord, v: SamplingWord) -> SamplingWord:
    """Product of two normalized words by the three-case simplification rule."""
    left, right = list(u.segments), list(v.segments)
    s_m, j_m = left[-1]
    t_0, k_0 = right[0]
    if j_m == 0:
        merged = left[:-1] + [(s_m + t_0, k_0)] + right[1:]
    elif t_0 == 0:
        merged = left[:-1] + [(s_m, j_m + k_0)] + right[1:]
    else:
        merged = left + right
    word = SamplingWord.__new__(SamplingWord)
    object.__setattr__(word, "segments", tuple((Fraction(t), int(k)) for t, k in merged))
    return word


def length_morphism(w: SamplingWord) -> Fraction:
    """Total duration of the sampling interval."""
    return sum((t for t, _ in w.segments), Fraction(0))


def count_morphism(w: SamplingWord) -> int:
    """Total number of observations in the sampling interval."""
    return sum(k for _, k in w.segments)


def is_normalized(segments) -> bool:
    segs = list(segments)
    if not segs:
        return False
    if any(t < 0 or k < 0 for t, k in segs):
        return False
    if any(t == 0 for t, _ in segs[1:]):
        return False
    if any(k == 0 for _, k in segs[:-1]):
        return False
    return True


def parse_word(text: str) -> SamplingWord:
    """Parse ``"1.5:2,3:0"`` style text; the empty string is the unit word."""
    text = text.strip()
    if not text:
        return SamplingWord()
    pairs = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if chunk.count(":") != 1:
            raise ValueError(f"segment {chunk!r} is not of the form time:count")
        t_text, k_text = chunk.split(":")
        try:
            k = int(k_text.strip())
        except ValueError as exc:
            raise ValueError(f"bad observation count in segment {chunk!r}") from exc
        pairs.append((as_time(t_text), k))
    return SamplingWord(tuple(pairs))


def format_word(w: SamplingWord) -> str:
    return ",".join(f"{format_time(t)}:{k}" for t, k in w.segments)


LABEL_STEP = SamplingWord(((0, 1),))


def delay(r: TimeLike) -> SamplingWord:
    """The generator ``(r, 0)``: let time ``r`` pass without observing."""
    return SamplingWord(((as_time(r), 0),))
