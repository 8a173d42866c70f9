"""Round semantics of a fault-prone beeping multiple access channel.

All processors share a single channel. Per round, each awake processor
either beeps or listens; a single fault bit (shared by the whole channel)
decides whether anything is heard. In a fault-free round every listener
hears iff at least one other processor beeps, and every still-dormant
processor is woken by the beep. In a faulty round nothing is heard and
nobody wakes, regardless of behaviour.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

TRACE_SCHEMA = "beepsim.trace/1"

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class Action(Enum):
    BEEP = "beep"
    LISTEN = "listen"


class ExplicitFaultsExhausted(Exception):
    """An explicit fault sequence was shorter than the trace it had to feed."""


def mix64(z: int) -> int:
    """SplitMix64 finalizer; a bijection on 64-bit integers."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def counter_rand64(seed: int, counter: int) -> int:
    """Uniform 64-bit value as a pure function of (seed, counter)."""
    return mix64((seed + (counter + 1) * _GOLDEN) & _MASK64)


def derive_trial_seed(seed: int, trial: int) -> int:
    """Injective per-trial seed: the finalizer is a bijection, so distinct
    trials of one experiment can never share a fault stream."""
    return counter_rand64(seed, trial)


class SeededFaults:
    """I.i.d. Bernoulli(p) fault bits, counter-derived from (seed, round).

    The bit for a round is a pure function of the seed and the round
    number, so replay and out-of-order queries agree and parallel trial
    runners need no shared stream state.
    """

    __slots__ = ("seed", "p", "_threshold")

    def __init__(self, seed: int, p: Fraction | float):
        p = p if isinstance(p, Fraction) else Fraction(str(p))
        if not 0 <= p < 1:
            raise ValueError(f"fault probability must be in [0, 1), got {p}")
        self.seed = seed & _MASK64
        self.p = p
        # count of 64-bit values u with u < p * 2^64 (ceil division)
        self._threshold = -((-p.numerator << 64) // p.denominator)

    def bit(self, global_round: int) -> bool:
        return counter_rand64(self.seed, global_round) < self._threshold

    def describe(self) -> dict:
        return {"mode": "seeded", "seed": self.seed, "p": str(self.p)}


class ExplicitFaults:
    """A fixed, finite fault sequence; errors if the trace outlives it."""

    __slots__ = ("bits",)

    def __init__(self, bits: Sequence[bool]):
        self.bits = tuple(bool(b) for b in bits)

    def bit(self, global_round: int) -> bool:
        if global_round >= len(self.bits):
            raise ExplicitFaultsExhausted(
                f"explicit fault sequence has {len(self.bits)} bits, "
                f"round {global_round} requested"
            )
        return self.bits[global_round]

    def describe(self) -> dict:
        return {"mode": "explicit", "bits": "".join("1" if b else "0" for b in self.bits)}


FaultSource = SeededFaults | ExplicitFaults


def next_fault(source: FaultSource, global_round: int) -> bool:
    """Fault bit of a global round under the given source."""
    return source.bit(global_round)


@dataclass(frozen=True, slots=True)
class RoundRecord:
    """What the channel did in one global round.

    Invariants: a faulty round has no hearers and wakes nobody; a
    fault-free round with at least one beeper is heard by every listener
    and wakes every dormant processor; beepers never hear.
    """

    global_round: int
    fault: bool
    beepers: frozenset[int]
    hearers: frozenset[int]
    woken: frozenset[int]


def resolve_round(
    actions: Mapping[int, Action],
    dormant: Iterable[int],
    fault: bool,
    global_round: int,
) -> RoundRecord:
    """Resolve one round: who beeped, who heard, who woke.

    `actions` covers exactly the awake processors; `dormant` the ones not
    yet started. Processors that already produced their output are in
    neither (they stay silent and deaf). Total function.
    """
    beepers = frozenset(pid for pid, act in actions.items() if act is Action.BEEP)
    if fault or not beepers:
        hearers: frozenset[int] = frozenset()
        woken: frozenset[int] = frozenset()
    else:
        hearers = frozenset(pid for pid, act in actions.items() if act is Action.LISTEN)
        woken = frozenset(dormant)
    return RoundRecord(global_round, fault, beepers, hearers, woken)


@dataclass(slots=True)
class Trace:
    """Per-round log of a finished trial plus the final outputs.

    `outputs` maps processor id to (value, global output round);
    `sync_rounds` maps processor id to the round it finished the clock
    agreement stage (kept for verification and debugging); `meta` echoes
    params, schedule, inputs and the fault source so a trace file is
    self-describing.
    """

    records: list[RoundRecord] = field(default_factory=list)
    outputs: dict[int, tuple[int, int]] = field(default_factory=dict)
    sync_rounds: dict[int, int] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_json_lines(self) -> str:
        lines = []
        for rec in self.records:
            lines.append(json.dumps(
                {
                    "round": rec.global_round,
                    "fault": rec.fault,
                    "beepers": sorted(rec.beepers),
                    "hearers": sorted(rec.hearers),
                    "woken": sorted(rec.woken),
                },
                sort_keys=True, separators=(",", ":"),
            ))
        lines.append(json.dumps(
            {
                "schema": TRACE_SCHEMA,
                "outputs": {str(pid): list(vr) for pid, vr in sorted(self.outputs.items())},
                "sync_rounds": {str(pid): r for pid, r in sorted(self.sync_rounds.items())},
                "meta": self.meta,
            },
            sort_keys=True, separators=(",", ":"),
        ))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_json_lines(cls, text: str) -> "Trace":
        trace = cls()
        tail = None
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "round" in obj:
                trace.records.append(RoundRecord(
                    global_round=obj["round"],
                    fault=obj["fault"],
                    beepers=frozenset(obj["beepers"]),
                    hearers=frozenset(obj["hearers"]),
                    woken=frozenset(obj["woken"]),
                ))
            elif "outcome" in obj:
                continue  # classification line appended by `run`
            else:
                tail = obj
        if tail is None:
            raise ValueError("trace stream has no trailing outputs object")
        if tail.get("schema") != TRACE_SCHEMA:
            raise ValueError(f"unsupported trace schema: {tail.get('schema')!r}")
        trace.outputs = {int(pid): (vr[0], vr[1]) for pid, vr in tail["outputs"].items()}
        trace.sync_rounds = {int(pid): r for pid, r in tail.get("sync_rounds", {}).items()}
        trace.meta = tail.get("meta", {})
        return trace
