"""Command-line front door: run, montecarlo, exact, sweep, check.

p and epsilon are accepted as decimal strings or exact rationals
("0.3" or "3/10"). The total error budget --epsilon is split half/half
between the two protocol stages; --stage-epsilon sets the per-stage
budget directly instead. Seeds are always explicit, never taken from the
environment, so identical invocations produce byte-identical output.
"""
from __future__ import annotations

import argparse
import io
import json
import sys
from fractions import Fraction

from .adversary import (
    InputAssignment,
    WakeupSchedule,
    assign_inputs,
    random_inputs,
    schedule_alignment_attack,
    schedule_random,
    schedule_simultaneous,
    schedule_staggered,
)
from .channel import ExplicitFaults, SeededFaults, Trace, derive_trial_seed
from .harness import (
    BranchBudgetExceeded,
    default_horizon,
    exact_failure_probability,
    montecarlo_report,
    run_trial,
    verify_trace_invariants,
)
from .protocol import Params, as_probability, derive_gamma, derive_x

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_BUDGET = 3


class UsageError(Exception):
    pass


def _parse_fraction(text: str, name: str) -> Fraction:
    try:
        return as_probability(text, name)
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(str(exc)) from None


def _build_params(args) -> tuple[Params, Fraction | None]:
    if args.p is None:
        raise UsageError("--p is required")
    p = _parse_fraction(args.p, "p")
    if args.stage_epsilon is not None:
        stage = _parse_fraction(args.stage_epsilon, "stage epsilon")
        total = None
    elif args.epsilon is not None:
        total = _parse_fraction(args.epsilon, "epsilon")
        stage = total / 2
    else:
        raise UsageError("--epsilon or --stage-epsilon is required")
    return Params(p=p, epsilon=stage, gamma=derive_gamma(p, stage), x=derive_x(p, stage)), total


def _build_schedule(args, gamma: int) -> WakeupSchedule:
    spec = args.schedule or "simultaneous"
    if args.n is None:
        raise UsageError("--n is required")
    n = args.n
    if spec == "simultaneous":
        return schedule_simultaneous(n)
    if spec == "alignment":
        return schedule_alignment_attack(gamma, n)
    if spec.startswith("staggered:"):
        fields = spec.split(":", 1)[1].split(",")
        if len(fields) != n:
            raise UsageError(f"staggered schedule lists {len(fields)} offsets for n={n}")
        offsets = [None if f in ("-", "none") else int(f) for f in fields]
        return schedule_staggered(offsets)
    if spec.startswith("random:"):
        max_offset = int(spec.split(":", 1)[1])
        return schedule_random(n, max_offset, _require_seed(args))
    raise UsageError(f"unknown schedule spec: {spec!r}")


def _build_inputs(args) -> InputAssignment:
    if args.inputs is None:
        raise UsageError("--inputs is required")
    spec = args.inputs
    value_set = _parse_value_set(args.value_set) if args.value_set else None
    if spec.startswith("random:"):
        max_value = int(spec.split(":", 1)[1])
        if value_set is not None:
            raise UsageError("--value-set cannot be combined with random inputs")
        return random_inputs(args.n, max_value, _require_seed(args))
    values = [int(f) for f in spec.split(",")]
    if len(values) != args.n:
        raise UsageError(f"--inputs lists {len(values)} values for n={args.n}")
    return assign_inputs(values, value_set)


def _parse_value_set(spec: str) -> set[int]:
    out: set[int] = set()
    for field in spec.split(","):
        if "-" in field[1:]:
            lo, hi = field.split("-", 1)
            out.update(range(int(lo), int(hi) + 1))
        else:
            out.add(int(field))
    return out


def _build_faults(args, params: Params, horizon: int):
    spec = args.faults or "seeded"
    channel_p = _parse_fraction(args.channel_p, "channel p") if args.channel_p else params.p
    if spec == "seeded":
        return SeededFaults(_require_seed(args), channel_p), channel_p
    if spec.startswith("explicit:"):
        bits = spec.split(":", 1)[1]
        if not set(bits) <= {"0", "1"}:
            raise UsageError("explicit fault bits must be a 0/1 string")
        if len(bits) < horizon + 1:
            raise UsageError(
                f"explicit fault sequence has {len(bits)} bits but the horizon is {horizon}")
        return ExplicitFaults([b == "1" for b in bits]), channel_p
    raise UsageError(f"unknown fault spec: {spec!r}")


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required for seeded randomness")
    return args.seed


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_doc(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def cmd_run(args) -> int:
    params, total = _build_params(args)
    schedule = _build_schedule(args, params.gamma)
    inputs = _build_inputs(args)
    horizon = args.horizon if args.horizon is not None \
        else default_horizon(params, schedule, inputs)
    faults, _ = _build_faults(args, params, horizon)
    trace, outcome = run_trial(params, schedule, inputs, faults, horizon)
    if total is not None:
        trace.meta["epsilon_total"] = str(total)
    buf = io.StringIO()
    buf.write(trace.to_json_lines())
    buf.write(json.dumps(
        {"outcome": outcome.kind.value, "detail": outcome.detail},
        sort_keys=True, separators=(",", ":")) + "\n")
    _emit(buf.getvalue(), args.output)
    return EXIT_OK if outcome.is_success else EXIT_FAILURE


def cmd_montecarlo(args) -> int:
    params, total = _build_params(args)
    schedule = _build_schedule(args, params.gamma)
    inputs = _build_inputs(args)
    if args.trials is None or args.trials < 1:
        raise UsageError("--trials must be a positive integer")
    channel_p = _parse_fraction(args.channel_p, "channel p") if args.channel_p else None
    report = montecarlo_report(params, schedule, inputs, args.trials, _require_seed(args),
                               horizon=args.horizon, channel_p=channel_p,
                               workers=args.workers or 1)
    est = report["estimate"]
    doc = {
        "p": str(params.p),
        "epsilon": str(total) if total is not None else None,
        "stage_epsilon": str(params.epsilon),
        "gamma": report["gamma"],
        "x": report["x"],
        "seed": args.seed,
        "horizon": report["horizon"],
        "trials": est.trials,
        "failures": est.failures,
        "point": est.point,
        "ci_low": est.ci_low,
        "ci_high": est.ci_high,
        "outcomes": report["outcomes"],
        "max_success_round": report["max_success_round"],
    }
    _emit(_json_doc(doc), args.output)
    return EXIT_OK


def cmd_exact(args) -> int:
    params, total = _build_params(args)
    schedule = _build_schedule(args, params.gamma)
    inputs = _build_inputs(args)
    channel_p = _parse_fraction(args.channel_p, "channel p") if args.channel_p else params.p
    oracle_params = Params(p=channel_p, epsilon=params.epsilon,
                           gamma=params.gamma, x=params.x)
    result = exact_failure_probability(oracle_params, schedule, inputs,
                                       horizon=args.horizon,
                                       branch_budget=args.branch_budget)
    prob = result.failure_probability
    doc = {
        "p": str(channel_p),
        "epsilon": str(total) if total is not None else None,
        "stage_epsilon": str(params.epsilon),
        "gamma": params.gamma,
        "x": params.x,
        "failure_probability": f"{prob.numerator}/{prob.denominator}",
        "failure_probability_float": float(prob),
        "branch_count": result.branch_count,
        "leaves": result.leaves,
    }
    _emit(_json_doc(doc), args.output)
    return EXIT_OK


def _grid_values(spec: str | None, parse) -> list | None:
    if spec is None:
        return None
    fields = [f for f in spec.split(",") if f]
    if not fields:
        raise UsageError("empty grid")
    return [parse(f) for f in fields]


def cmd_sweep(args) -> int:
    p_grid = _grid_values(args.p_grid, str)
    eps_grid = _grid_values(args.epsilon_grid, str)
    n_grid = _grid_values(args.n_grid, int)
    w_grid = _grid_values(args.w_grid, int)
    if not any((p_grid, eps_grid, n_grid, w_grid)):
        raise UsageError("sweep needs at least one of --p-grid/--epsilon-grid/--n-grid/--w-grid")
    if eps_grid and args.stage_epsilon is not None:
        raise UsageError("--epsilon-grid cannot be combined with --stage-epsilon")
    if args.trials is None or args.trials < 1:
        raise UsageError("--trials must be a positive integer")
    seed = _require_seed(args)

    ps = p_grid or [args.p]
    epss = eps_grid or [args.epsilon]
    ns = n_grid or [args.n]
    ws = w_grid or [None]

    rows = ["p,epsilon,gamma,x,n,schedule_kind,w,trials,failures,point,ci_low,ci_high"]
    idx = 0
    for p in ps:
        for eps in epss:
            for n in ns:
                for w in ws:
                    sub = argparse.Namespace(**vars(args))
                    sub.p, sub.epsilon, sub.n = p, eps, n
                    if w is not None:
                        sub.inputs = ",".join([str(w)] * n)
                        sub.value_set = None
                    params, total = _build_params(sub)
                    schedule = _build_schedule(sub, params.gamma)
                    inputs = _build_inputs(sub)
                    point_seed = derive_trial_seed(seed, idx)
                    report = montecarlo_report(params, schedule, inputs, args.trials,
                                               point_seed, horizon=args.horizon,
                                               workers=args.workers or 1)
                    est = report["estimate"]
                    rows.append(",".join(str(v) for v in (
                        p, eps if total is not None else args.stage_epsilon,
                        params.gamma, params.x, n,
                        (sub.schedule or "simultaneous").split(":")[0],
                        inputs.smallest_assigned,
                        est.trials, est.failures, est.point, est.ci_low, est.ci_high,
                    )))
                    idx += 1
    _emit("\n".join(rows) + "\n", args.output)
    return EXIT_OK


def cmd_check(args) -> int:
    with open(args.trace, encoding="utf-8") as fh:
        trace = Trace.from_json_lines(fh.read())
    meta = trace.meta
    if not meta.get("params") or not meta.get("schedule"):
        raise UsageError("trace meta lacks params/schedule; cannot verify")
    mp = meta["params"]
    params = Params(p=Fraction(mp["p"]), epsilon=Fraction(mp["epsilon"]),
                    gamma=mp["gamma"], x=mp["x"])
    schedule = WakeupSchedule.from_json_dict(meta["schedule"])
    violations = verify_trace_invariants(trace, params, schedule)
    for v in violations:
        sys.stdout.write(v + "\n")
    sys.stdout.write(f"{len(violations)} violation(s)\n")
    return EXIT_OK if not violations else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with defaults; flags override")
    common.add_argument("--p", help="channel fault probability (decimal or num/den)")
    common.add_argument("--epsilon", help="total error budget, split half per stage")
    common.add_argument("--stage-epsilon", dest="stage_epsilon",
                        help="per-stage error budget (overrides the split)")
    common.add_argument("--n", type=int, help="processor count")
    common.add_argument("--schedule",
                        help="simultaneous | staggered:o1,o2,... (- = beep-woken) | "
                             "alignment | random:MAXOFF")
    common.add_argument("--inputs", help="v1,v2,... | random:MAXVAL")
    common.add_argument("--value-set", dest="value_set",
                        help="value set V, e.g. 0-65535 or 1,5,9 (default: assigned values)")
    common.add_argument("--seed", type=int, help="explicit 64-bit seed")
    common.add_argument("--horizon", type=int, help="round horizon override")
    common.add_argument("--faults", help="seeded | explicit:BITS (default seeded)")
    common.add_argument("--channel-p", dest="channel_p",
                        help="actual channel fault probability if different from --p")
    common.add_argument("--workers", type=int, help="parallel trial workers (default 1)")
    common.add_argument("--output", help="write to file instead of stdout")

    parser = argparse.ArgumentParser(
        prog="beepsim",
        description="Simulate consensus over a fault-prone beeping channel.")
    subs = parser.add_subparsers(dest="command", required=True)

    subs.add_parser("run", parents=[common], help="run one trial, emit trace + outcome")
    mc = subs.add_parser("montecarlo", parents=[common], help="estimate failure probability")
    mc.add_argument("--trials", type=int, help="number of trials")
    ex = subs.add_parser("exact", parents=[common], help="exact failure probability")
    ex.add_argument("--branch-budget", dest="branch_budget", type=int, default=30)
    sw = subs.add_parser("sweep", parents=[common], help="CSV sweep over a parameter grid")
    sw.add_argument("--trials", type=int, help="trials per grid point")
    sw.add_argument("--p-grid", dest="p_grid")
    sw.add_argument("--epsilon-grid", dest="epsilon_grid")
    sw.add_argument("--n-grid", dest="n_grid")
    sw.add_argument("--w-grid", dest="w_grid", help="common input values, e.g. 1,16,256")
    ck = subs.add_parser("check", parents=[common], help="verify invariants of a trace file")
    ck.add_argument("trace", help="trace file produced by `run`")

    return parser


def _apply_config(args) -> None:
    if not getattr(args, "config", None):
        return
    with open(args.config, encoding="utf-8") as fh:
        conf = json.load(fh)
    for key, value in conf.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise UsageError(f"unknown config key: {key}")
        if getattr(args, attr) is None:
            setattr(args, attr, value)


_COMMANDS = {
    "run": cmd_run,
    "montecarlo": cmd_montecarlo,
    "exact": cmd_exact,
    "sweep": cmd_sweep,
    "check": cmd_check,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except BranchBudgetExceeded as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_BUDGET
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
