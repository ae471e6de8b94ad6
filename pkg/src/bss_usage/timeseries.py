"""Time-of-day usage distributions, P(t) = N(t) / N_total."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .ingest import DAY_NAMES, WEEKDAY, WEEKEND, UsageEvent

RENTAL = "rental"
RETURN = "return"
COMBINED = "combined"
DIRECTIONS = (RENTAL, RETURN, COMBINED)

DAY_SELECTORS = DAY_NAMES + ("Weekday", "Weekend")
DEFAULT_BIN_WIDTH = 60


@dataclass(frozen=True)
class DayDistribution:
    city: str
    day: str
    direction: str
    bin_width: int
    probs: np.ndarray
    total_count: int

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        if len(probs) != 1440 // self.bin_width:
            raise ValueError("probs length must be 1440 / bin_width")
        if self.total_count > 0 and abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("non-empty distribution must sum to 1")
        if self.total_count == 0 and probs.any():
            raise ValueError("empty distribution must be all zeros")

    @property
    def n_bins(self) -> int:
        return len(self.probs)

    @property
    def is_empty(self) -> bool:
        return self.total_count == 0

    @property
    def counts(self) -> np.ndarray:
        # exact for integer counts: N(t) = P(t) * N_total
        return np.rint(self.probs * self.total_count).astype(np.int64)


def check_bin_width(bin_width: int) -> None:
    if bin_width <= 0 or 1440 % bin_width:
        raise ValueError(f"bin_width {bin_width} does not divide 1440")


def _day_matches(weekday: int, selector: str) -> bool:
    if selector == "Weekday":
        return weekday < 5
    if selector == "Weekend":
        return weekday >= 5
    return DAY_NAMES[weekday] == selector


def _event_count(e: UsageEvent, direction: str) -> int:
    if direction == RENTAL:
        return e.rentals
    if direction == RETURN:
        return e.returns
    return e.rentals + e.returns


def from_counts(city, day, direction, bin_width, counts) -> DayDistribution:
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    probs = counts / total if total else np.zeros(len(counts))
    return DayDistribution(city, day, direction, bin_width, probs, total)


def build_distribution(
    events: Iterable[UsageEvent],
    city: str,
    day_filter: str,
    direction: str = RENTAL,
    bin_width: int = DEFAULT_BIN_WIDTH,
) -> DayDistribution:
    """Bin matching events by local minute-of-day and normalize.

    ``day_filter`` is a day name (``Mon`` .. ``Sun``) or ``Weekday`` /
    ``Weekend``.  Events count at their own minute; trips are not spread.
    """
    check_bin_width(bin_width)
    if day_filter not in DAY_SELECTORS:
        raise ValueError(f"unknown day selector {day_filter!r}")
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}")
    counts = np.zeros(1440 // bin_width, dtype=np.int64)
    for e in events:
        if _day_matches(e.minute.weekday(), day_filter):
            counts[(e.minute.hour * 60 + e.minute.minute) // bin_width] += _event_count(e, direction)
    return from_counts(city, day_filter, direction, bin_width, counts)


def distribution_set(
    events: Sequence[UsageEvent],
    city: str,
    bin_width: int = DEFAULT_BIN_WIDTH,
    directions: Sequence[str] = (RENTAL, RETURN),
) -> dict[tuple[str, str], DayDistribution]:
    """Per-day distributions for each direction, keyed (day, direction),
    ordered Mon..Sun and then by direction.  Single pass over events."""
    check_bin_width(bin_width)
    counts = {
        (d, direction): np.zeros(1440 // bin_width, dtype=np.int64)
        for d in DAY_NAMES
        for direction in directions
    }
    for e in events:
        day = DAY_NAMES[e.minute.weekday()]
        b = (e.minute.hour * 60 + e.minute.minute) // bin_width
        for direction in directions:
            counts[(day, direction)][b] += _event_count(e, direction)
    return {
        key: from_counts(city, key[0], key[1], bin_width, c) for key, c in counts.items()
    }


def day_class_of(day: str) -> str:
    return WEEKEND if day in ("Sat", "Sun") else WEEKDAY
