"""Trial execution, outcome classification, and the two probability routes.

A trial runs all processors in lockstep global rounds against one fault
source and classifies the result against the consensus requirements
(termination, agreement, validity, plus time agreement). Failure
probability is estimated by seeded Monte Carlo and, for small instances,
computed exactly by branching only on rounds where the fault bit can
change an observation.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from statistics import NormalDist

from .adversary import InputAssignment, WakeupSchedule
from .channel import (
    Action,
    FaultSource,
    RoundRecord,
    SeededFaults,
    Trace,
    derive_trial_seed,
)
from .protocol import (
    DecisionState,
    LoopState,
    Params,
    Wake,
    alarm_beep_rounds,
    decision_init,
    decision_step,
    globalsync_init,
    globalsync_step,
    simultaneous_sync_round,
    transform_input,
)


class HorizonTooSmall(ValueError):
    """The requested horizon cannot cover a worst-case successful run."""


class BranchBudgetExceeded(RuntimeError):
    """One execution path needed more fault branches than budgeted."""

    def __init__(self, count: int):
        super().__init__(f"fault-relevant rounds exceeded the branch budget: {count}")
        self.count = count


class OutcomeKind(Enum):
    SUCCESS = "success"
    AGREEMENT_VIOLATION = "agreement_violation"
    VALIDITY_VIOLATION = "validity_violation"
    TIME_DISAGREEMENT = "time_disagreement"
    TIMEOUT = "timeout"


@dataclass(frozen=True, slots=True)
class TrialOutcome:
    kind: OutcomeKind
    detail: dict

    @property
    def is_success(self) -> bool:
        return self.kind is OutcomeKind.SUCCESS


def min_horizon(params: Params, inputs: InputAssignment) -> int:
    """Smallest horizon that covers every successful run: stage-one exit
    by S + 4*gamma + 1, then at most 2*x*k decision rounds plus the
    output round."""
    k_max = max(len(transform_input(v)) for v in inputs.values)
    return (simultaneous_sync_round(params.gamma) + 4 * params.gamma + 1
            + 2 * params.x * k_max + 1)


def default_horizon(params: Params, schedule: WakeupSchedule, inputs: InputAssignment) -> int:
    """Generous default: twice the success bound, shifted by the last
    scheduled wake-up, so timeout mass is negligible."""
    return schedule.max_offset + 2 * min_horizon(params, inputs)


_DORMANT, _SYNC, _DECIDE, _DONE = 0, 1, 2, 3


def _classify_outputs(outputs: dict[int, tuple[int, int]], inputs: InputAssignment,
                      n: int) -> TrialOutcome:
    if len(outputs) < n:
        missing = sorted(set(range(n)) - set(outputs))
        return TrialOutcome(OutcomeKind.TIMEOUT, {"missing": missing})
    detail = {"outputs": {pid: list(outputs[pid]) for pid in sorted(outputs)}}
    values = {v for v, _ in outputs.values()}
    if len(values) > 1:
        return TrialOutcome(OutcomeKind.AGREEMENT_VIOLATION, detail)
    common = values.pop()
    if inputs.all_equal() and common != inputs.values[0]:
        return TrialOutcome(OutcomeKind.VALIDITY_VIOLATION, detail)
    rounds = {r for _, r in outputs.values()}
    if len(rounds) > 1:
        return TrialOutcome(OutcomeKind.TIME_DISAGREEMENT, detail)
    return TrialOutcome(OutcomeKind.SUCCESS, detail)


def classify(trace: Trace, inputs: InputAssignment, n: int) -> TrialOutcome:
    """Classify a finished trial. Precedence on multiple violations:
    Timeout > Agreement > Validity > TimeDisagreement."""
    return _classify_outputs(trace.outputs, inputs, n)


def _simulate(params: Params, schedule: WakeupSchedule, inputs: InputAssignment,
              faults: FaultSource, horizon: int,
              record: bool) -> tuple[Trace | None, dict[int, tuple[int, int]], dict[int, int]]:
    """Lockstep driver shared by run_trial and the Monte Carlo path."""
    n = schedule.n
    val0 = inputs.val0
    x = params.x

    phases = [_DORMANT] * n
    states: list = [None] * n
    wakes = [-1] * n
    sync_local = [-1] * n
    obs = [False] * n
    outputs: dict[int, tuple[int, int]] = {}
    sync_rounds: dict[int, int] = {}

    wake_at: dict[int, list[int]] = {}
    for pid, off in schedule.spontaneous.items():
        wake_at.setdefault(off, []).append(pid)

    records: list[RoundRecord] = [] if record else None
    beep, listen = Action.BEEP, Action.LISTEN

    for g in range(horizon + 1):
        for pid in wake_at.get(g, ()):
            if phases[pid] == _DORMANT:
                phases[pid] = _SYNC
                states[pid] = globalsync_init(Wake.SPONTANEOUS)
                wakes[pid] = g

        beepers: set[int] = set()
        listeners: set[int] = set()
        decided: list[int] = []
        for pid in range(n):
            ph = phases[pid]
            if ph == _SYNC:
                action, states[pid], event = globalsync_step(states[pid], obs[pid], params)
                if event is not None:
                    sync_local[pid] = event.round
            elif ph == _DECIDE:
                action, states[pid], event = decision_step(states[pid], obs[pid])
                if event is not None:
                    outputs[pid] = (event.value, wakes[pid] + event.round)
                    decided.append(pid)
            else:
                continue
            if action is beep:
                beepers.add(pid)
            else:
                listeners.add(pid)

        dormant = [pid for pid in range(n) if phases[pid] == _DORMANT]
        fault = faults.bit(g)

        if fault or not beepers:
            hearers: set[int] = set()
            woken: list[int] = []
        else:
            hearers = listeners
            woken = dormant

        for pid in listeners:
            obs[pid] = pid in hearers
        for pid in woken:
            phases[pid] = _SYNC
            states[pid] = globalsync_init(Wake.BY_BEEP)
            wakes[pid] = g
            obs[pid] = True
        for pid in beepers:
            obs[pid] = False

        if record:
            records.append(RoundRecord(g, fault, frozenset(beepers),
                                       frozenset(hearers), frozenset(woken)))

        for pid in range(n):
            if phases[pid] == _SYNC and sync_local[pid] >= 0 \
                    and wakes[pid] + sync_local[pid] == g:
                sync_rounds[pid] = g
                phases[pid] = _DECIDE
                states[pid] = decision_init(inputs.values[pid], val0, x, sync_local[pid])
        for pid in decided:
            phases[pid] = _DONE
            states[pid] = None

        if len(outputs) == n:
            break

    if record:
        trace = Trace(records=records, outputs=dict(outputs), sync_rounds=sync_rounds)
        return trace, outputs, sync_rounds
    return None, outputs, sync_rounds


def run_trial(params: Params, schedule: WakeupSchedule, inputs: InputAssignment,
              faults: FaultSource, horizon: int) -> tuple[Trace, TrialOutcome]:
    """Run one trial to completion (or the horizon) and classify it."""
    if schedule.n != inputs.n:
        raise ValueError(f"schedule has {schedule.n} processors, inputs {inputs.n}")
    if horizon < min_horizon(params, inputs):
        raise HorizonTooSmall(
            f"horizon {horizon} < minimum {min_horizon(params, inputs)}")
    trace, outputs, _ = _simulate(params, schedule, inputs, faults, horizon, record=True)
    trace.meta = {
        "params": {"p": str(params.p), "epsilon": str(params.epsilon),
                   "gamma": params.gamma, "x": params.x},
        "schedule": schedule.to_json_dict(),
        "inputs": inputs.to_json_dict(),
        "faults": faults.describe(),
        "horizon": horizon,
    }
    return trace, _classify_outputs(outputs, inputs, schedule.n)


@dataclass(frozen=True, slots=True)
class Estimate:
    """Monte Carlo failure estimate with a 99% Wilson score interval."""

    trials: int
    failures: int
    point: float
    ci_low: float
    ci_high: float


def wilson_interval(failures: int, trials: int, confidence: float = 0.99) -> tuple[float, float]:
    if trials < 1:
        raise ValueError("need at least one trial")
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    phat = failures / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    # the score interval always contains phat; clamping removes float noise
    return min(max(0.0, centre - half), phat), max(min(1.0, centre + half), phat)


def _run_trial_block(params: Params, schedule: WakeupSchedule, inputs: InputAssignment,
                     seed: int, horizon: int, channel_p: Fraction,
                     start: int, stop: int) -> tuple[dict[str, int], int]:
    counts: dict[str, int] = {}
    max_success_round = -1
    for t in range(start, stop):
        faults = SeededFaults(derive_trial_seed(seed, t), channel_p)
        _, outputs, _ = _simulate(params, schedule, inputs, faults, horizon, record=False)
        outcome = _classify_outputs(outputs, inputs, schedule.n)
        counts[outcome.kind.value] = counts.get(outcome.kind.value, 0) + 1
        if outcome.is_success:
            max_success_round = max(max_success_round, max(r for _, r in outputs.values()))
    return counts, max_success_round


def montecarlo_report(params: Params, schedule: WakeupSchedule, inputs: InputAssignment,
                      trials: int, seed: int, horizon: int | None = None,
                      channel_p: Fraction | None = None, workers: int = 1) -> dict:
    """Monte Carlo estimate plus outcome breakdown and round statistics.

    Trial t draws its fault stream from a seed derived injectively from
    (seed, t), so the aggregate is a pure function of the arguments and
    invariant to worker count and trial order.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    if schedule.n != inputs.n:
        raise ValueError(f"schedule has {schedule.n} processors, inputs {inputs.n}")
    if horizon is None:
        horizon = default_horizon(params, schedule, inputs)
    if horizon < min_horizon(params, inputs):
        raise HorizonTooSmall(f"horizon {horizon} < minimum {min_horizon(params, inputs)}")
    if channel_p is None:
        channel_p = params.p

    counts: dict[str, int] = {}
    max_success_round = -1
    if workers <= 1:
        counts, max_success_round = _run_trial_block(
            params, schedule, inputs, seed, horizon, channel_p, 0, trials)
    else:
        chunk = max(1, -(-trials // (workers * 4)))
        blocks = [(s, min(s + chunk, trials)) for s in range(0, trials, chunk)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_trial_block, params, schedule, inputs,
                                   seed, horizon, channel_p, s, e) for s, e in blocks]
            for fut in futures:
                block_counts, block_max = fut.result()
                for key, c in block_counts.items():
                    counts[key] = counts.get(key, 0) + c
                max_success_round = max(max_success_round, block_max)

    failures = trials - counts.get(OutcomeKind.SUCCESS.value, 0)
    low, high = wilson_interval(failures, trials)
    estimate = Estimate(trials=trials, failures=failures, point=failures / trials,
                        ci_low=low, ci_high=high)
    return {
        "estimate": estimate,
        "outcomes": {kind.value: counts.get(kind.value, 0) for kind in OutcomeKind},
        "max_success_round": max_success_round,
        "gamma": params.gamma,
        "x": params.x,
        "horizon": horizon,
    }


def monte_carlo(params: Params, schedule: WakeupSchedule, inputs: InputAssignment,
                trials: int, seed: int, horizon: int | None = None,
                channel_p: Fraction | None = None, workers: int = 1) -> Estimate:
    """Failure-probability estimate over seeded, independent trials."""
    report = montecarlo_report(params, schedule, inputs, trials, seed,
                               horizon, channel_p, workers)
    return report["estimate"]


@dataclass(frozen=True, slots=True)
class ExactResult:
    """Exact failure probability from exhaustive fault branching.

    branch_count is the number of branched nodes explored; leaves the
    number of distinct executions. Leaf weights sum to exactly 1.
    """

    failure_probability: Fraction
    branch_count: int
    leaves: int


class _World:
    """Mutable per-branch simulation state for the exact oracle."""

    __slots__ = ("g", "phases", "states", "wakes", "sync_local", "obs", "outputs")

    def __init__(self, n: int):
        self.g = 0
        self.phases = [_DORMANT] * n
        self.states: list = [None] * n
        self.wakes = [-1] * n
        self.sync_local = [-1] * n
        self.obs = [False] * n
        self.outputs: dict[int, tuple[int, int]] = {}

    def fork(self) -> "_World":
        w = _World.__new__(_World)
        w.g = self.g
        w.phases = self.phases[:]
        w.states = self.states[:]
        w.wakes = self.wakes[:]
        w.sync_local = self.sync_local[:]
        w.obs = self.obs[:]
        w.outputs = dict(self.outputs)
        return w


def exact_failure_probability(params: Params, schedule: WakeupSchedule,
                              inputs: InputAssignment, horizon: int | None = None,
                              branch_budget: int = 30,
                              conservative_relevance: bool = False) -> ExactResult:
    """Exact failure probability by depth-first fault branching.

    Branches only on rounds where the fault bit can change an observation:
    somebody beeps and either a dormant processor could be woken or some
    listener's future behaviour still depends on what it hears. All other
    rounds advance deterministically with weight 1, which is what makes
    exhaustive checking feasible.

    `conservative_relevance` branches on every round with a beeper and any
    listener, ignoring whether the listener still consults observations;
    it explores a larger tree to the same probability and exists as a
    self-check for the pruning.
    """
    if schedule.n != inputs.n:
        raise ValueError(f"schedule has {schedule.n} processors, inputs {inputs.n}")
    if horizon is None:
        horizon = default_horizon(params, schedule, inputs)
    if horizon < min_horizon(params, inputs):
        raise HorizonTooSmall(f"horizon {horizon} < minimum {min_horizon(params, inputs)}")

    n = schedule.n
    val0 = inputs.val0
    x = params.x
    p = Fraction(params.p)
    q = 1 - p

    wake_at: dict[int, list[int]] = {}
    for pid, off in schedule.spontaneous.items():
        wake_at.setdefault(off, []).append(pid)
    last_wake = max(schedule.spontaneous.values())

    stats = {"branches": 0, "leaves": 0, "failure": Fraction(0), "mass": Fraction(0)}

    def listener_cares(state) -> bool:
        if conservative_relevance:
            return True
        if type(state) is LoopState:
            return True
        if type(state) is DecisionState:
            return not state.heard and not state.done and state.clock > state.start + 1
        return False

    def advance(world: _World, fault: bool, beepers: set[int], listeners: set[int],
                dormant: list[int], decided: list[int]) -> None:
        if fault or not beepers:
            hearers: set[int] = set()
            woken: list[int] = []
        else:
            hearers = listeners
            woken = dormant
        for pid in listeners:
            world.obs[pid] = pid in hearers
        for pid in woken:
            world.phases[pid] = _SYNC
            world.states[pid] = globalsync_init(Wake.BY_BEEP)
            world.wakes[pid] = world.g
            world.obs[pid] = True
        for pid in beepers:
            world.obs[pid] = False
        g = world.g
        for pid in range(n):
            if world.phases[pid] == _SYNC and world.sync_local[pid] >= 0 \
                    and world.wakes[pid] + world.sync_local[pid] == g:
                world.phases[pid] = _DECIDE
                world.states[pid] = decision_init(inputs.values[pid], val0, x,
                                                  world.sync_local[pid])
        for pid in decided:
            world.phases[pid] = _DONE
            world.states[pid] = None
        world.g = g + 1

    def leaf(world: _World, weight: Fraction) -> None:
        outcome = _classify_outputs(world.outputs, inputs, n)
        stats["leaves"] += 1
        stats["mass"] += weight
        if not outcome.is_success:
            stats["failure"] += weight

    def explore(world: _World, weight: Fraction, depth: int) -> None:
        while True:
            if len(world.outputs) == n:
                leaf(world, weight)
                return
            if world.g > horizon:
                leaf(world, weight)  # somebody has no output: a timeout leaf
                return
            g = world.g
            for pid in wake_at.get(g, ()):
                if world.phases[pid] == _DORMANT:
                    world.phases[pid] = _SYNC
                    world.states[pid] = globalsync_init(Wake.SPONTANEOUS)
                    world.wakes[pid] = g

            # A world with only dormant processors left and no wake-up
            # pending can never beep again: timeout without iterating.
            if g > last_wake and all(ph in (_DORMANT, _DONE) for ph in world.phases) \
                    and any(ph == _DORMANT for ph in world.phases):
                leaf(world, weight)
                return

            beepers: set[int] = set()
            listeners: set[int] = set()
            decided: list[int] = []
            caring = False
            for pid in range(n):
                ph = world.phases[pid]
                if ph == _SYNC:
                    action, state, event = globalsync_step(world.states[pid],
                                                           world.obs[pid], params)
                    world.states[pid] = state
                    if event is not None:
                        world.sync_local[pid] = event.round
                elif ph == _DECIDE:
                    action, state, event = decision_step(world.states[pid], world.obs[pid])
                    world.states[pid] = state
                    if event is not None:
                        world.outputs[pid] = (event.value, world.wakes[pid] + event.round)
                        decided.append(pid)
                else:
                    continue
                if action is Action.BEEP:
                    beepers.add(pid)
                else:
                    listeners.add(pid)
                    if not caring and listener_cares(world.states[pid]):
                        caring = True

            dormant = [pid for pid in range(n) if world.phases[pid] == _DORMANT]
            relevant = bool(beepers) and (bool(dormant) or caring)
            if not relevant:
                advance(world, False, beepers, listeners, dormant, decided)
                continue

            if depth >= branch_budget:
                raise BranchBudgetExceeded(depth + 1)
            stats["branches"] += 1
            faulty = world.fork()
            advance(faulty, True, beepers, listeners, dormant, decided)
            explore(faulty, weight * p, depth + 1)
            advance(world, False, beepers, listeners, dormant, decided)
            depth += 1
            weight = weight * q

    explore(_World(n), Fraction(1), 0)
    assert stats["mass"] == 1, f"leaf weights sum to {stats['mass']}, not 1"
    return ExactResult(failure_probability=stats["failure"],
                       branch_count=stats["branches"], leaves=stats["leaves"])


def verify_trace_invariants(trace: Trace, params: Params,
                            schedule: WakeupSchedule) -> list[str]:
    """Check a finished trace against the channel and protocol invariants.

    Covers: per-round channel record consistency, the alarm-beep schedule
    of lonely spontaneous processors (and their beep-count milestones),
    and the 2*gamma silence window after the first good round t*.
    Returns a list of human-readable violations; empty means clean.
    """
    violations: list[str] = []
    gamma = params.gamma
    n = schedule.n
    records = trace.records

    for idx, rec in enumerate(records):
        if rec.global_round != idx:
            violations.append(f"round numbering gap at index {idx}: {rec.global_round}")
    last_round = len(records) - 1
    for pid, (_, r_out) in trace.outputs.items():
        if r_out > last_round:
            violations.append(f"output round {r_out} of processor {pid} beyond trace end")

    woken_at: dict[int, int] = {}
    for rec in records:
        for pid in rec.woken:
            woken_at.setdefault(pid, rec.global_round)

    spont = schedule.spontaneous

    def wake_round(pid: int) -> tuple[int | None, bool]:
        """(round the processor started acting from, woke spontaneously)."""
        o = spont.get(pid)
        u = woken_at.get(pid)
        if o is not None and (u is None or o <= u):
            return o, True
        if u is not None:
            return u + 1, False  # dormant during the waking round itself
        return None, False

    acting_from: list[int | None] = [None] * n
    spontaneously: list[bool] = [False] * n
    for pid in range(n):
        acting_from[pid], spontaneously[pid] = wake_round(pid)

    out_round = {pid: r for pid, (_, r) in trace.outputs.items()}

    def actors(g: int) -> set[int]:
        return {pid for pid in range(n)
                if acting_from[pid] is not None and acting_from[pid] <= g
                and (pid not in out_round or g <= out_round[pid])}

    def dormant_set(g: int) -> set[int]:
        out = set()
        for pid in range(n):
            start = acting_from[pid]
            if start is None or g < start:
                # beep-woken processors are dormant through their waking round
                if not spontaneously[pid] and pid in woken_at and g > woken_at[pid]:
                    continue
                out.add(pid)
        return out

    for rec in records:
        g = rec.global_round
        act = actors(g)
        dorm = dormant_set(g)
        listeners = act - rec.beepers
        if rec.beepers & rec.hearers:
            violations.append(f"round {g}: beeper also hears")
        if not rec.beepers <= act:
            violations.append(f"round {g}: beeper not an acting processor")
        if rec.fault and (rec.hearers or rec.woken):
            violations.append(f"round {g}: faulty round heard or woke someone")
        if not rec.fault:
            if rec.beepers:
                if rec.hearers != frozenset(listeners):
                    violations.append(
                        f"round {g}: hearers {sorted(rec.hearers)} != listeners {sorted(listeners)}")
                if rec.woken != frozenset(dorm):
                    violations.append(
                        f"round {g}: woken {sorted(rec.woken)} != dormant {sorted(dorm)}")
            elif rec.hearers or rec.woken:
                violations.append(f"round {g}: nothing beeped but someone heard or woke")

    # Alarm-beep arithmetic of spontaneous processors while lonely.
    schedule_beeps = alarm_beep_rounds(gamma)
    exhaust = simultaneous_sync_round(gamma)
    heard_first: dict[int, int] = {}
    for rec in records:
        for pid in rec.hearers:
            heard_first.setdefault(pid, rec.global_round)
    for pid in range(n):
        if not spontaneously[pid]:
            continue
        o = acting_from[pid]
        h = heard_first.get(pid)
        exit_g = trace.sync_rounds.get(pid, o + exhaust)
        cap = min(exit_g - 1, last_round)
        if h is not None:
            cap = min(cap, h - 1)
        expected = {o + b for b in schedule_beeps if o + b <= cap}
        actual = {rec.global_round for rec in records
                  if rec.global_round <= cap and pid in rec.beepers}
        if expected != actual:
            violations.append(
                f"processor {pid}: lonely alarm beeps at {sorted(actual)}, "
                f"expected {sorted(expected)}")
        for i in range(1, 3 * gamma + 1):
            milestone = o + 4 * gamma * i + i * (i + 1) // 2
            if milestone - 1 > last_round or (h is not None and h <= milestone):
                continue
            count = sum(1 for rec in records
                        if rec.global_round < milestone and pid in rec.beepers)
            if count != i:
                violations.append(
                    f"processor {pid}: {count} beeps before round {milestone}, expected {i}")

    # Silence window after the first good round t*. The claim covers
    # stage-one behaviour: a processor that already exited may legally
    # beep its codeword inside the window.
    if not schedule.is_simultaneous():
        exits = list(trace.sync_rounds.values())
        first_exit = min(exits) if exits else last_round + 1
        t_star = None
        for rec in records:
            g = rec.global_round
            if g >= first_exit:
                break
            if rec.fault or not rec.beepers:
                continue
            if (actors(g) - rec.beepers) or dormant_set(g):
                t_star = g
                break
        if t_star is not None:
            for rec in records:
                g = rec.global_round
                if not t_star < g <= t_star + 2 * gamma:
                    continue
                offenders = [pid for pid in rec.beepers
                             if g < trace.sync_rounds.get(pid, last_round + 1)]
                if offenders:
                    violations.append(
                        f"round {g}: beep by {offenders} inside the silence window "
                        f"({t_star}, {t_star + 2 * gamma}]")

    return violations
