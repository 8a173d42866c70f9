"""Deterministic simulator of consensus over a fault-prone beeping MAC."""

from .adversary import (
    InputAssignment,
    NoSpontaneousWaker,
    WakeupSchedule,
    assign_inputs,
    random_inputs,
    schedule_alignment_attack,
    schedule_random,
    schedule_simultaneous,
    schedule_staggered,
)
from .channel import (
    Action,
    ExplicitFaults,
    ExplicitFaultsExhausted,
    RoundRecord,
    SeededFaults,
    Trace,
    next_fault,
    resolve_round,
)
from .harness import (
    BranchBudgetExceeded,
    Estimate,
    ExactResult,
    HorizonTooSmall,
    OutcomeKind,
    TrialOutcome,
    classify,
    default_horizon,
    exact_failure_probability,
    min_horizon,
    monte_carlo,
    montecarlo_report,
    run_trial,
    verify_trace_invariants,
    wilson_interval,
)
from .protocol import (
    BlockCount,
    DomainError,
    IllegalState,
    Params,
    Wake,
    classify_block,
    decision_init,
    decision_step,
    derive_gamma,
    derive_x,
    globalsync_init,
    globalsync_step,
    simultaneous_sync_round,
    transform_input,
)

__version__ = "0.1.0"

__all__ = [
    "Action", "BlockCount", "BranchBudgetExceeded", "DomainError", "Estimate",
    "ExactResult", "ExplicitFaults", "ExplicitFaultsExhausted", "HorizonTooSmall",
    "IllegalState", "InputAssignment", "NoSpontaneousWaker", "OutcomeKind",
    "Params", "RoundRecord", "SeededFaults", "Trace", "TrialOutcome", "Wake",
    "assign_inputs", "classify", "classify_block", "decision_init", "decision_step",
    "default_horizon", "derive_gamma", "derive_x", "exact_failure_probability",
    "globalsync_init", "globalsync_step", "min_horizon", "monte_carlo",
    "montecarlo_report", "next_fault", "random_inputs", "resolve_round",
    "run_trial", "schedule_alignment_attack", "schedule_random",
    "schedule_simultaneous", "schedule_staggered", "simultaneous_sync_round",
    "transform_input", "verify_trace_invariants", "wilson_interval",
]
