"""Pure state machines for the two protocol stages and their constants.

Stage one (clock agreement): spontaneously woken processors emit alarm
beeps separated by gaps that grow by one round per iteration, listen in
between, and classify what they hear with a two-block beep census; beep-
woken processors answer with a fixed response block. Stage two (decision):
each processor beeps/listens its prefix-free codeword in windows of 2x
rounds and outputs either its own value (silence throughout) or the
default value (first window in which it heard anything).

Machines are deterministic pure functions of (state, observation): the
same arguments always produce the same StepResult. Observations are fed
one round late — step(state, obs) consumes the hearing outcome of the
round the machine just acted in and returns the action for the next one.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import NamedTuple, Union

from .channel import Action


class DomainError(ValueError):
    """A protocol constant was requested outside its domain."""


class IllegalState(RuntimeError):
    """A state machine was stepped past its terminal round."""


def as_probability(value: Fraction | float | str, name: str = "value") -> Fraction:
    """Exact rational in (0, 1); floats go through their shortest repr."""
    if isinstance(value, Fraction):
        prob = value
    elif isinstance(value, str):
        prob = Fraction(value)
    elif isinstance(value, float):
        prob = Fraction(str(value))
    else:
        raise DomainError(f"{name} must be a probability, got {value!r}")
    if not 0 < prob < 1:
        raise DomainError(f"{name} must lie strictly between 0 and 1, got {prob}")
    return prob


def derive_gamma(p: Fraction | float | str, epsilon: Fraction | float | str) -> int:
    """Minimal gamma >= 1 with p**gamma < epsilon/4, compared exactly."""
    prob = as_probability(p, "p")
    eps = as_probability(epsilon, "epsilon")
    bound = eps / 4
    gamma, power = 1, prob
    while power >= bound:
        gamma += 1
        power *= prob
    return gamma


def derive_x(p: Fraction | float | str, epsilon: Fraction | float | str) -> int:
    """Minimal x >= 1 with p**x < epsilon/2, compared exactly."""
    prob = as_probability(p, "p")
    eps = as_probability(epsilon, "epsilon")
    bound = eps / 2
    x, power = 1, prob
    while power >= bound:
        x += 1
        power *= prob
    return x


@dataclass(frozen=True, slots=True)
class Params:
    """Channel and protocol constants for one stage budget.

    `epsilon` is the error budget of a single stage; composed runs split
    a total budget in half per stage (see the CLI). `derive` builds the
    minimal constants for a budget; direct construction accepts any
    positive gamma/x so experiments can pin them freely.
    """

    p: Fraction
    epsilon: Fraction
    gamma: int
    x: int

    def __post_init__(self):
        object.__setattr__(self, "p", as_probability(self.p, "p"))
        object.__setattr__(self, "epsilon", as_probability(self.epsilon, "epsilon"))
        if self.gamma < 1:
            raise DomainError(f"gamma must be a positive integer, got {self.gamma}")
        if self.x < 1:
            raise DomainError(f"x must be a positive integer, got {self.x}")

    @classmethod
    def derive(cls, p: Fraction | float | str, epsilon: Fraction | float | str) -> "Params":
        prob = as_probability(p, "p")
        eps = as_probability(epsilon, "epsilon")
        return cls(p=prob, epsilon=eps, gamma=derive_gamma(prob, eps), x=derive_x(prob, eps))


def simultaneous_sync_round(gamma: int) -> int:
    """Local round at which a processor that never hears exits stage one:
    12*gamma^2 + 3*gamma*(3*gamma+1)/2."""
    if gamma < 1:
        raise DomainError(f"gamma must be a positive integer, got {gamma}")
    return 12 * gamma * gamma + (3 * gamma) * (3 * gamma + 1) // 2


def alarm_beep_rounds(gamma: int) -> list[int]:
    """Local rounds of the 3*gamma alarm beeps of a lonely processor.

    Beep j falls 4*gamma + j rounds after beep j-1 (the growing gap), so
    beep j is at 4*gamma*(j-1) + (j-1)*j/2 local.
    """
    rounds, nxt = [], 0
    for j in range(1, 3 * gamma + 1):
        rounds.append(nxt)
        nxt += 4 * gamma + j
    return rounds


def transform_input(val: int) -> tuple[int, ...]:
    """Prefix-free codeword of a value: binary digits mapped 1 -> 10 and
    0 -> 01, then terminated with 11 (the only 11 on a pair boundary)."""
    if val < 0:
        raise ValueError(f"input values are non-negative integers, got {val}")
    bits: list[int] = []
    for ch in format(val, "b"):
        bits.extend((1, 0) if ch == "1" else (0, 1))
    bits.extend((1, 1))
    return tuple(bits)


class BlockCount(Enum):
    """Census of beeps heard in one block: none, exactly one, or more."""

    ZERO = 0
    ONE = 1
    MANY = "*"


def classify_block(count: int) -> BlockCount:
    if count < 0:
        raise ValueError(f"beep count cannot be negative: {count}")
    if count == 0:
        return BlockCount.ZERO
    if count == 1:
        return BlockCount.ONE
    return BlockCount.MANY


def listen_vector(num1: int, num2: int) -> tuple[BlockCount, BlockCount]:
    """Classify the two 2*gamma blocks following an alarm beep."""
    return classify_block(num1), classify_block(num2)


def respond_branch(h: tuple[BlockCount, BlockCount]) -> bool:
    """Whether a census means 'the first thing heard was an alarm beep'.

    True for [0 0], [0 1], [1 0], [1 1], [1 *]: the processor answers with
    a response block and syncs relative to the heard round. False for
    [0 *], [* 0], [* 1], [* *]: what it heard were responses to its own
    alarm beep, so it syncs relative to that beep.
    """
    h1, h2 = h
    if h1 is BlockCount.ONE:
        return True
    if h1 is BlockCount.ZERO:
        return h2 is not BlockCount.MANY
    return False


@dataclass(frozen=True, slots=True)
class SyncRoundChosen:
    """The machine fixed its stage-one exit round (local clock value)."""

    round: int


@dataclass(frozen=True, slots=True)
class OutputDecided:
    """The machine produced its consensus output in a local round."""

    value: int
    round: int


Event = Union[SyncRoundChosen, OutputDecided, None]


class StepResult(NamedTuple):
    action: Action
    state: "MachineState"
    event: Event


class Wake(Enum):
    SPONTANEOUS = "spontaneous"
    BY_BEEP = "by_beep"


@dataclass(frozen=True, slots=True)
class BeepWokenState:
    """Woken by a beep heard at local round 0; response and exit schedule
    are fixed, observations are never consulted."""

    clock: int = 1
    heard: int = 0


@dataclass(frozen=True, slots=True)
class LoopState:
    """Spontaneous alarm loop.

    `iteration` counts emitted alarm beeps; between beeps the machine
    listens. `heard` is the first local round a beep was heard (loop exit
    pending); num1/num2 accumulate the census blocks that start one round
    after `current_beep`.
    """

    clock: int = 0
    iteration: int = 0
    current_beep: int = -1
    next_beep: int = 0
    heard: int | None = None
    num1: int = 0
    num2: int = 0


@dataclass(frozen=True, slots=True)
class RespondState:
    """Census said alarm beep: answer with 2*gamma beeps, then exit."""

    clock: int
    beep_start: int
    sync_round: int


@dataclass(frozen=True, slots=True)
class WaitState:
    """Exit round fixed; listen (and ignore) until it arrives."""

    clock: int
    sync_round: int


MachineState = Union[BeepWokenState, LoopState, RespondState, WaitState]

HEARD = True
SILENCE = False


def globalsync_init(wake: Wake) -> MachineState:
    """Fresh stage-one machine.

    A spontaneous machine acts from local round 0 (its first alarm beep);
    a beep-woken machine heard the waking beep at local round 0 and acts
    from round 1.
    """
    if wake is Wake.SPONTANEOUS:
        return LoopState()
    return BeepWokenState()


def globalsync_step(state: MachineState, heard_prev: bool, params: Params) -> StepResult:
    """Advance one local round; `heard_prev` is the hearing outcome of the
    round just completed (SILENCE before round 0)."""
    gamma = params.gamma
    if isinstance(state, LoopState):
        return _loop_step(state, heard_prev, gamma)
    if isinstance(state, BeepWokenState):
        # Schedule known since round 0: respond in (2g, 4g], exit at 4g+1.
        sync = 4 * gamma + 1
        nxt = RespondState(clock=state.clock + 1, beep_start=2 * gamma + 1, sync_round=sync)
        if state.clock > sync:
            raise IllegalState(f"stepped past exit round {sync}")
        action = Action.BEEP if 2 * gamma + 1 <= state.clock <= 4 * gamma else Action.LISTEN
        return StepResult(action, nxt, SyncRoundChosen(sync))
    if isinstance(state, RespondState):
        if state.clock > state.sync_round:
            raise IllegalState(f"stepped past exit round {state.sync_round}")
        beeping = state.beep_start <= state.clock < state.beep_start + 2 * gamma
        nxt = RespondState(state.clock + 1, state.beep_start, state.sync_round)
        return StepResult(Action.BEEP if beeping else Action.LISTEN, nxt, None)
    if isinstance(state, WaitState):
        if state.clock > state.sync_round:
            raise IllegalState(f"stepped past exit round {state.sync_round}")
        return StepResult(Action.LISTEN, WaitState(state.clock + 1, state.sync_round), None)
    raise TypeError(f"not a stage-one state: {state!r}")


def _loop_step(state: LoopState, heard_prev: bool, gamma: int) -> StepResult:
    t = state.clock
    heard, num1, num2 = state.heard, state.num1, state.num2

    if heard_prev:
        # Hearing is only possible in gap rounds, i.e. after current_beep.
        when = t - 1
        if heard is None:
            heard = when
        if when <= state.current_beep + 2 * gamma:
            num1 += 1
        elif when <= state.current_beep + 4 * gamma:
            num2 += 1

    if heard is not None:
        # Loop exited; wait until the census blocks that matter are complete.
        if heard <= state.current_beep + 2 * gamma:
            ready = t - 1 >= state.current_beep + 2 * gamma
        elif heard <= state.current_beep + 4 * gamma:
            ready = t - 1 >= state.current_beep + 4 * gamma
        else:
            ready = True  # heard beyond the census window: [0 0]
        if not ready:
            nxt = LoopState(t + 1, state.iteration, state.current_beep,
                            state.next_beep, heard, num1, num2)
            return StepResult(Action.LISTEN, nxt, None)
        if respond_branch(listen_vector(num1, num2)):
            sync = heard + 4 * gamma + 1
            nxt = RespondState(clock=t + 1, beep_start=heard + 2 * gamma + 1, sync_round=sync)
        else:
            sync = state.current_beep + 4 * gamma + 1
            nxt = WaitState(clock=t + 1, sync_round=sync)
        return StepResult(Action.LISTEN, nxt, SyncRoundChosen(sync))

    if t == state.next_beep:
        iteration = state.iteration + 1
        nxt_beep = t + 4 * gamma + iteration
        if iteration == 3 * gamma:
            # Loop exhausted: the round where the next alarm beep would
            # have fallen becomes the exit round.
            return StepResult(Action.BEEP, WaitState(t + 1, nxt_beep), SyncRoundChosen(nxt_beep))
        nxt = LoopState(t + 1, iteration, t, nxt_beep, None, 0, 0)
        return StepResult(Action.BEEP, nxt, None)

    nxt = LoopState(t + 1, state.iteration, state.current_beep, state.next_beep, None, 0, 0)
    return StepResult(Action.LISTEN, nxt, None)


@dataclass(frozen=True, slots=True)
class DecisionState:
    """Codeword playback: symbol index is 1-based, sub_round counts 0 to
    2x-1 inside the current window. `start` is the local round of the
    stage boundary; the first window round is start+1."""

    codeword: tuple[int, ...]
    x: int
    val: int
    val0: int
    start: int
    i: int
    sub_round: int
    heard: bool
    clock: int
    done: bool = False


def decision_init(val: int, val0: int, x: int, r: int) -> DecisionState:
    if x < 1:
        raise DomainError(f"x must be a positive integer, got {x}")
    return DecisionState(
        codeword=transform_input(val), x=x, val=val, val0=val0,
        start=r, i=1, sub_round=0, heard=False, clock=r + 1,
    )


def decision_step(state: DecisionState, heard_prev: bool) -> StepResult:
    """Advance one local round; emits OutputDecided exactly once, in the
    round right after the last window."""
    if state.done:
        raise IllegalState("stepped after output")
    t = state.clock
    x = state.x
    heard = state.heard
    span = 2 * x

    if heard_prev and not heard and t - 1 > state.start:
        # Only rounds we listened in count (we cannot hear our own beeps).
        prev = t - 2 - state.start
        ci = state.codeword[prev // span]
        listening = prev % span >= x if ci == 1 else prev % span < x
        if listening:
            heard = True

    elapsed = t - state.start - 1
    if elapsed > 0 and elapsed % span == 0:
        completed = elapsed // span
        if heard:
            nxt = DecisionState(state.codeword, x, state.val, state.val0, state.start,
                                completed + 1, 0, heard, t + 1, done=True)
            return StepResult(Action.LISTEN, nxt, OutputDecided(state.val0, t))
        if completed == len(state.codeword):
            nxt = DecisionState(state.codeword, x, state.val, state.val0, state.start,
                                completed + 1, 0, heard, t + 1, done=True)
            return StepResult(Action.LISTEN, nxt, OutputDecided(state.val, t))

    i = elapsed // span + 1
    sub = elapsed % span
    ci = state.codeword[i - 1]
    beeping = sub < x if ci == 1 else sub >= x
    nxt = DecisionState(state.codeword, x, state.val, state.val0, state.start,
                        i, sub, heard, t + 1)
    return StepResult(Action.BEEP if beeping else Action.LISTEN, nxt, None)
