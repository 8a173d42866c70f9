"""Adversary inputs to a trial: wake-up schedules and input assignments.

The adversary is oblivious — schedules and inputs are fixed before any
fault bit is drawn. Schedules are normalized on construction so the first
spontaneous wake-up defines global round 0.
"""
from __future__ import annotations

from dataclasses import dataclass

from .channel import counter_rand64
from .protocol import alarm_beep_rounds


class NoSpontaneousWaker(ValueError):
    """Every schedule needs at least one spontaneously woken processor."""


@dataclass(frozen=True, slots=True)
class WakeupSchedule:
    """Per-processor spontaneous wake offsets; None means wake-by-beep only.

    Invariant: the minimum present offset is 0 (construction normalizes).
    """

    offsets: tuple[int | None, ...]

    def __post_init__(self):
        present = [o for o in self.offsets if o is not None]
        if not present:
            raise NoSpontaneousWaker("no processor wakes spontaneously")
        if min(present) != 0:
            raise ValueError("schedule not normalized: minimum offset must be 0")
        if any(o < 0 for o in present):
            raise ValueError("offsets must be non-negative")

    @property
    def n(self) -> int:
        return len(self.offsets)

    @property
    def spontaneous(self) -> dict[int, int]:
        return {pid: o for pid, o in enumerate(self.offsets) if o is not None}

    @property
    def max_offset(self) -> int:
        return max(o for o in self.offsets if o is not None)

    def is_simultaneous(self) -> bool:
        return all(o == 0 for o in self.offsets)

    def to_json_dict(self) -> dict:
        return {"processors": self.n, "offsets": list(self.offsets)}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "WakeupSchedule":
        offsets = obj["offsets"]
        if obj.get("processors", len(offsets)) != len(offsets):
            raise ValueError("processors count disagrees with offsets length")
        return schedule_staggered(offsets)


def schedule_simultaneous(n: int) -> WakeupSchedule:
    """All n processors wake spontaneously in global round 0."""
    if n < 1:
        raise ValueError("need at least one processor")
    return WakeupSchedule(offsets=(0,) * n)


def schedule_staggered(offsets: list[int | None]) -> WakeupSchedule:
    """Arbitrary offsets (None = beep-woken only), normalized to min 0."""
    present = [o for o in offsets if o is not None]
    if not present:
        raise NoSpontaneousWaker("no processor wakes spontaneously")
    base = min(present)
    return WakeupSchedule(offsets=tuple(None if o is None else o - base for o in offsets))


def schedule_alignment_attack(gamma: int, n: int) -> WakeupSchedule:
    """Offsets that align processor j's first alarm beep with processor
    0's (j+1)-th alarm beep — the attack the growing gaps defeat."""
    if n < 2:
        raise ValueError("alignment attack needs at least two processors")
    beeps = alarm_beep_rounds(gamma)
    if n > len(beeps):
        raise ValueError(f"alignment attack supports at most {len(beeps)} processors at gamma={gamma}")
    return WakeupSchedule(offsets=tuple(beeps[:n]))


def schedule_random(n: int, max_offset: int, seed: int) -> WakeupSchedule:
    """I.i.d. uniform offsets on [0, max_offset], then normalized."""
    if n < 1:
        raise ValueError("need at least one processor")
    if max_offset < 0:
        raise ValueError("max_offset must be non-negative")
    raw = [counter_rand64(seed, pid) % (max_offset + 1) for pid in range(n)]
    return schedule_staggered(raw)


@dataclass(frozen=True, slots=True)
class InputAssignment:
    """Input value per processor, drawn from a finite value set V.

    The default decision value val0 is the smallest element of V.
    """

    values: tuple[int, ...]
    value_set: frozenset[int]

    def __post_init__(self):
        if not self.value_set:
            raise ValueError("value set must be non-empty")
        if any(v < 0 for v in self.value_set):
            raise ValueError("values are non-negative integers")
        missing = [v for v in self.values if v not in self.value_set]
        if missing:
            raise ValueError(f"assigned values outside the value set: {missing}")

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def val0(self) -> int:
        return min(self.value_set)

    @property
    def smallest_assigned(self) -> int:
        return min(self.values)

    def all_equal(self) -> bool:
        return len(set(self.values)) == 1

    def to_json_dict(self) -> dict:
        return {"values": list(self.values), "value_set": sorted(self.value_set)}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "InputAssignment":
        return cls(values=tuple(obj["values"]), value_set=frozenset(obj["value_set"]))


def assign_inputs(values: list[int], value_set: set[int] | None = None) -> InputAssignment:
    """Explicit inputs; V defaults to exactly the assigned values."""
    vs = frozenset(value_set) if value_set is not None else frozenset(values)
    return InputAssignment(values=tuple(values), value_set=vs)


def random_inputs(n: int, max_value: int, seed: int) -> InputAssignment:
    """I.i.d. uniform values on [0, max_value]; V is the full range."""
    if max_value < 0:
        raise ValueError("max_value must be non-negative")
    values = tuple(counter_rand64(seed ^ 0xA5A5A5A5, pid) % (max_value + 1) for pid in range(n))
    return InputAssignment(values=values, value_set=frozenset(range(max_value + 1)))
