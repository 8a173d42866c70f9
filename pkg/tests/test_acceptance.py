"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion
lines. Everything is seeded; reruns are bit-for-bit repeatable.
"""
import random
import time
from fractions import Fraction
from statistics import correlation

import pytest

from beepsim.adversary import assign_inputs, schedule_simultaneous, schedule_staggered
from beepsim.channel import ExplicitFaults, SeededFaults, derive_trial_seed
from beepsim.cli import main
from beepsim.harness import (
    _classify_outputs,
    _simulate,
    default_horizon,
    exact_failure_probability,
    montecarlo_report,
    run_trial,
    verify_trace_invariants,
)
from beepsim.protocol import Params, simultaneous_sync_round, transform_input

PASS = "criterion {n} PASS: {msg}"


def lean_outcome(params, sched, inputs, faults, horizon):
    _, outputs, sync_rounds = _simulate(params, sched, inputs, faults, horizon, record=False)
    return _classify_outputs(outputs, inputs, sched.n), outputs, sync_rounds


def test_criterion_1_simultaneous_wake_exactness():
    started = time.perf_counter()
    expected = {1: 18, 2: 69, 3: 153}
    for gamma in (1, 2, 3):
        params = Params(p=Fraction(1, 2), epsilon=Fraction(1, 2), gamma=gamma, x=1)
        sched = schedule_simultaneous(2)
        inputs = assign_inputs([1, 1])
        horizon = default_horizon(params, sched, inputs)
        for pattern in range(100):
            faults = SeededFaults(derive_trial_seed(1000 + gamma, pattern), Fraction(1, 2))
            outcome, _, sync_rounds = lean_outcome(params, sched, inputs, faults, horizon)
            assert outcome.is_success
            assert set(sync_rounds.values()) == {expected[gamma]}, \
                f"gamma={gamma} pattern={pattern}: {sync_rounds}"
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0, f"took {elapsed:.2f}s, limit 1s"
    print(PASS.format(n=1, msg=f"stage-one exit at rounds {expected} for 300 fault "
                               f"patterns ({elapsed:.2f}s)"))


def test_criterion_2_fault_free_totality():
    started = time.perf_counter()
    param_pool = [Params.derive("0.1", "0.5"), Params.derive("0.3", "0.5"),
                  Params.derive("0.3", "0.2")]
    rng = random.Random(20260811)
    for t in range(1000):
        params = param_pool[t % 3]
        n = rng.randint(1, 5)
        offsets = [None if rng.random() < 0.25 else rng.randint(0, 50) for _ in range(n)]
        if all(o is None for o in offsets):
            offsets[0] = 0
        sched = schedule_staggered(offsets)
        vals = [rng.randrange(2 ** 16) for _ in range(n)]
        if rng.random() < 0.3:
            vals = [vals[0]] * n
        inputs = assign_inputs(vals)
        horizon = default_horizon(params, sched, inputs)
        faults = ExplicitFaults([False] * (horizon + 1))
        outcome, outputs, _ = lean_outcome(params, sched, inputs, faults, horizon)
        assert outcome.is_success, f"config {t}: {outcome}"
        assert len({r for _, r in outputs.values()}) == 1
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"took {elapsed:.2f}s, limit 10s"
    print(PASS.format(n=2, msg=f"1000/1000 fault-free configurations reached consensus "
                               f"in a common round ({elapsed:.2f}s)"))


def test_criterion_3_identical_input_determinism():
    # Stage budget 4e-4 puts gamma at 8: staggered-wake sync failure mass is
    # ~1e-4 per trial, so 500 seeded trials pass with margin; the frozen
    # seed below was verified to give 500/500 (see notes in the repo docs).
    started = time.perf_counter()
    params = Params.derive("0.3", "0.0004")
    master_seed = 2026
    rng = random.Random(master_seed)
    for t in range(500):
        n = rng.choice([1, 2, 3])
        kind = rng.choice(["simultaneous", "staggered", "sleepers"])
        if kind == "simultaneous" or n == 1:
            sched = schedule_simultaneous(n)
        elif kind == "staggered":
            sched = schedule_staggered([rng.randint(0, 20) for _ in range(n)])
        else:
            sched = schedule_staggered([0] + [None] * (n - 1))
        val = rng.choice([1, 3, 7])
        inputs = assign_inputs([val] * n)
        horizon = default_horizon(params, sched, inputs)
        faults = SeededFaults(derive_trial_seed(master_seed, t), params.p)
        outcome, outputs, _ = lean_outcome(params, sched, inputs, faults, horizon)
        assert outcome.is_success, f"trial {t} ({kind}, n={n}): {outcome}"
        assert all(v == val for v, _ in outputs.values()), f"trial {t}: {outputs}"
    elapsed = time.perf_counter() - started
    print(PASS.format(n=3, msg=f"500/500 identical-input trials over mixed schedules "
                               f"output the common input ({elapsed:.2f}s)"))


# 20 oracle-feasible configurations: n=2, derived gamma in {1, 2}, x <= 2,
# all inside the default branch budget of 30.
ORACLE_CONFIGS = [
    ("0.05", "0.5", (0, None), (5, 3)),
    ("0.05", "0.5", (0, 1), (1, 2)),
    ("0.05", "0.5", (0, 3), (0, 1)),
    ("0.05", "0.5", (0, None), (4, 4)),
    ("0.1", "0.9", (0, None), (5, 3)),
    ("0.1", "0.9", (0, 2), (1, 2)),
    ("0.1", "0.9", (0, 5), (0, 1)),
    ("0.1", "0.9", (0, 1), (4, 4)),
    ("0.1", "0.5", (0, None), (5, 3)),
    ("0.1", "0.5", (0, 1), (1, 2)),
    ("0.1", "0.5", (0, 4), (0, 1)),
    ("0.1", "0.5", (0, None), (4, 4)),
    ("0.2", "0.9", (0, None), (5, 3)),
    ("0.2", "0.9", (0, 3), (1, 2)),
    ("0.2", "0.9", (0, 5), (0, 1)),
    ("0.2", "0.9", (0, 2), (4, 4)),
    ("0.3", "0.9", (0, None), (5, 3)),
    ("0.3", "0.9", (0, 1), (1, 2)),
    ("0.25", "0.8", (0, None), (0, 1)),
    ("0.25", "0.8", (0, 3), (4, 4)),
]


def oracle_config(p, eps_total, offsets, values):
    params = Params.derive(p, Fraction(eps_total) / 2)
    sched = schedule_staggered(list(offsets))
    inputs = assign_inputs(list(values))
    return params, sched, inputs


@pytest.fixture(scope="module")
def exact_results():
    results = []
    started = time.perf_counter()
    for p, eps_total, offsets, values in ORACLE_CONFIGS:
        params, sched, inputs = oracle_config(p, eps_total, offsets, values)
        res = exact_failure_probability(params, sched, inputs)
        results.append(res.failure_probability)
    return results, time.perf_counter() - started


def test_criterion_4_epsilon_safety_via_oracle(exact_results):
    probs, elapsed = exact_results
    gammas = set()
    for (p, eps_total, offsets, values), prob in zip(ORACLE_CONFIGS, probs):
        params, _, _ = oracle_config(p, eps_total, offsets, values)
        gammas.add(params.gamma)
        assert params.x <= 2
        assert prob <= Fraction(eps_total), \
            f"config ({p},{eps_total},{offsets},{values}): {float(prob):.4f} > {eps_total}"
    assert gammas == {1, 2}
    assert elapsed < 60.0, f"took {elapsed:.2f}s, limit 60s"
    print(PASS.format(n=4, msg=f"exact failure probability <= epsilon in "
                               f"{len(ORACLE_CONFIGS)}/time {elapsed:.2f}s"))


def test_criterion_5_monte_carlo_oracle_agreement(exact_results):
    probs, _ = exact_results
    started = time.perf_counter()
    hits = 0
    misses = []
    for idx, ((p, eps_total, offsets, values), prob) in enumerate(zip(ORACLE_CONFIGS, probs)):
        params, sched, inputs = oracle_config(p, eps_total, offsets, values)
        report = montecarlo_report(params, sched, inputs, trials=10_000,
                                   seed=derive_trial_seed(5005, idx), workers=2)
        est = report["estimate"]
        if est.ci_low <= float(prob) <= est.ci_high:
            hits += 1
        else:
            misses.append((idx, float(prob), est.point))
    elapsed = time.perf_counter() - started
    assert hits >= 19, f"only {hits}/20 Wilson intervals contain the oracle value: {misses}"
    assert elapsed < 60.0, f"took {elapsed:.2f}s, limit 60s"
    print(PASS.format(n=5, msg=f"{hits}/20 Monte Carlo 99% intervals contain the exact "
                               f"value ({elapsed:.2f}s)"))


def test_criterion_6_round_bound_grows_affinely_in_bitlen():
    started = time.perf_counter()
    params = Params.derive("0.3", Fraction("0.2") / 2)
    gamma, x = params.gamma, params.x
    sync = simultaneous_sync_round(gamma)
    bitlens, max_rounds = [], []
    for w in (1, 2 ** 4, 2 ** 8, 2 ** 12, 2 ** 16):
        sched = schedule_simultaneous(2)
        inputs = assign_inputs([w, w])
        report = montecarlo_report(params, sched, inputs, trials=100,
                                   seed=derive_trial_seed(6006, w))
        assert report["estimate"].failures == 0
        b = max(1, w.bit_length())
        bound = sync + 4 * gamma + 2 + 2 * x * (2 * b + 2) + 1
        assert report["max_success_round"] <= bound
        k = len(transform_input(w))
        assert report["max_success_round"] == sync + 2 * x * k + 1
        bitlens.append(b)
        max_rounds.append(report["max_success_round"])
    r_squared = correlation(bitlens, max_rounds) ** 2
    assert r_squared >= 0.99, f"R^2 = {r_squared}"
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"took {elapsed:.2f}s, limit 30s"
    print(PASS.format(n=6, msg=f"output rounds affine in bitlen(w), R^2 = "
                               f"{r_squared:.6f} ({elapsed:.2f}s)"))


def test_criterion_7_protocol_arithmetic_properties():
    started = time.perf_counter()
    # trace-level checks on a spread of random configurations with faults
    param_pool = [Params.derive("0.1", "0.5"), Params.derive("0.3", "0.5"),
                  Params.derive("0.3", "0.2")]
    rng = random.Random(7007)
    checked = 0
    for t in range(90):
        params = param_pool[t % 3]
        n = rng.randint(1, 4)
        offsets = [None if rng.random() < 0.3 else rng.randint(0, 30) for _ in range(n)]
        if all(o is None for o in offsets):
            offsets[0] = 0
        sched = schedule_staggered(offsets)
        inputs = assign_inputs([rng.randrange(64) for _ in range(n)])
        horizon = default_horizon(params, sched, inputs)
        faults = SeededFaults(derive_trial_seed(7007, t), params.p)
        trace, _ = run_trial(params, sched, inputs, faults, horizon)
        violations = verify_trace_invariants(trace, params, sched)
        assert violations == [], f"config {t}: {violations}"
        checked += 1

    # prefix-freeness: exhaustive below 256, then random larger pairs
    codes = [transform_input(v) for v in range(256)]
    for a in range(256):
        for b in range(a + 1, 256):
            ca, cb = codes[a], codes[b]
            shorter = min(len(ca), len(cb))
            assert ca[:shorter] != cb[:shorter], (a, b)
    for _ in range(10_000):
        a = rng.randrange(2 ** 32)
        b = rng.randrange(2 ** 32)
        if a == b:
            continue
        ca, cb = transform_input(a), transform_input(b)
        shorter = min(len(ca), len(cb))
        assert ca[:shorter] != cb[:shorter], (a, b)
    elapsed = time.perf_counter() - started
    print(PASS.format(n=7, msg=f"beep arithmetic + silence window clean on {checked} "
                               f"traces; prefix-freeness exhaustive <256 and 10^4 "
                               f"random pairs ({elapsed:.2f}s)"))


def test_criterion_8_reproducibility(tmp_path):
    started = time.perf_counter()
    cases = [
        ["run", "--p", "0.3", "--epsilon", "0.2", "--n", "2",
         "--schedule", "staggered:0,4", "--inputs", "5,3", "--seed", "31"],
        ["montecarlo", "--p", "0.3", "--epsilon", "0.5", "--n", "2",
         "--schedule", "staggered:0,2", "--inputs", "1,2", "--trials", "500",
         "--seed", "31"],
        ["exact", "--p", "0.2", "--epsilon", "0.9", "--n", "2",
         "--schedule", "staggered:0,-", "--inputs", "1,2"],
        ["sweep", "--epsilon", "0.5", "--n", "2", "--schedule", "simultaneous",
         "--inputs", "1,1", "--p-grid", "0.1,0.3", "--trials", "50", "--seed", "8"],
    ]
    for idx, args in enumerate(cases):
        a, b = tmp_path / f"{idx}_a.out", tmp_path / f"{idx}_b.out"
        code_a = main(args + ["--output", str(a)])
        code_b = main(args + ["--output", str(b)])
        assert code_a == code_b
        assert code_a in (0, 1)
        assert a.read_bytes() == b.read_bytes(), f"command {args[0]} not reproducible"

    params = Params.derive("0.3", "0.5")
    sched = schedule_staggered([0, 2])
    inputs = assign_inputs([1, 2])
    serial = montecarlo_report(params, sched, inputs, trials=600, seed=77, workers=1)
    parallel = montecarlo_report(params, sched, inputs, trials=600, seed=77, workers=2)
    assert serial == parallel
    elapsed = time.perf_counter() - started
    print(PASS.format(n=8, msg=f"byte-identical reruns for run/montecarlo/exact/sweep; "
                               f"Monte Carlo invariant to parallelism ({elapsed:.2f}s)"))
