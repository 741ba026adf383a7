"""``matchpoa`` command-line entry point.

Exit codes: 0 success, 1 a property or bound check failed, 2 bad input or
configuration, 3 inconclusive (a budget or cap was hit).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import constructions as cons
from .core import (
    CapacityError,
    ParseError,
    ShapeError,
    check_order,
    dump_instance,
    format_order,
    format_profile,
    parse_instance,
    to_rational,
    validate_profile,
)
from .equilibrium import (
    DEFAULT_EVAL_BUDGET,
    DEFAULT_PROFILE_BUDGET,
    DeviationSpace,
    best_response_dynamics,
    enumerate_pure_nash,
    no_regret_dynamics,
    verify_pure_nash,
)
from .mechanisms import MECHANISMS, DEFAULT_MAX_EXACT_N, ProbabilisticSerial, get_mechanism
from .properties import (
    check_envy_free,
    check_safe_strategy,
    exhaustive_profiles,
    ps_bounds_suite,
    random_profiles,
    truthful_safety,
)
from .welfare import anarchy_ratios, optimal_matching

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_INCONCLUSIVE = 0, 1, 2, 3

FAMILY_NAMES = {
    "thm4": "thm4-general",
    "thm5": "thm5-deterministic",
    "thm6": "thm6-pos",
    "thm10": "thm10-unit-range",
}


class InputError(Exception):
    pass


# --- output helpers ---------------------------------------------------------------


class Table:
    """CSV writer that appends ``<col>_approx`` decimal columns on request."""

    def __init__(self, header, rational=(), decimal=False):
        self.header = list(header)
        self.rational = [c for c in self.header if c in set(rational)]
        self.decimal = decimal
        self.rows = []

    def add(self, *values):
        self.rows.append(list(values))

    def render(self, comments=()):
        buf = io.StringIO()
        for line in comments:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        extra = [f"{c}_approx" for c in self.rational] if self.decimal else []
        w.writerow(self.header + extra)
        idx = [self.header.index(c) for c in self.rational]
        for row in self.rows:
            cells = [_cell(v) for v in row]
            if self.decimal:
                cells += [_approx(row[k]) for k in idx]
            w.writerow(cells)
        return buf.getvalue()


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _approx(v):
    if v is None or v == "":
        return ""
    return f"{float(v):.12g}"


def _emit(text, output):
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


# --- input helpers ----------------------------------------------------------------


def _read_instance(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read instance {path}: {exc.strerror}") from None
    return parse_instance(text)


def _read_strategies(path, mech, n):
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read strategies {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    if mech.ordinal:
        if "orders" not in data:
            raise ParseError("missing field 'orders'", field="orders")
        orders = data["orders"]
        if len(orders) != n:
            raise ShapeError(f"expected {n} orders, found {len(orders)}")
        try:
            return tuple(check_order([int(j) - 1 for j in o], n) for o in orders)
        except (TypeError, ValueError):
            raise ParseError(f"orders must be permutations of 1..{n}", field="orders") from None
    if "reports" not in data:
        raise ParseError("cardinal mechanisms need a 'reports' matrix", field="reports")
    reports = data["reports"]
    if len(reports) != n or any(len(r) != n for r in reports):
        raise ShapeError(f"reports must be {n}x{n}")
    return tuple(
        tuple(to_rational(v, field=f"reports[{i}][{j}]") for j, v in enumerate(row))
        for i, row in enumerate(reports)
    )


def _parse_order_arg(text):
    try:
        return tuple(int(x) - 1 for x in text.replace(",", " ").split())
    except ValueError:
        raise InputError(f"order must be 1-based integers, got {text!r}") from None


def _space(text):
    if text in (None, "all"):
        return None
    kind, _, arg = text.partition(":")
    try:
        if kind == "top-m":
            return DeviationSpace.top_m(int(arg))
        if kind == "grid":
            return DeviationSpace.value_grid(int(arg))
    except ValueError:
        pass
    raise InputError(f"unknown deviation space {text!r}; use all, top-m:M or grid:D")


def _mechanism(args):
    params = {}
    if args.mechanism == "rp":
        params = dict(
            mode=getattr(args, "mode", "exact"),
            seed=getattr(args, "seed", None),
            trials=getattr(args, "trials", None),
            max_exact_n=getattr(args, "max_exact_n", DEFAULT_MAX_EXACT_N),
        )
    return get_mechanism(args.mechanism, **params)


def _initial(mech, truth, path):
    if path:
        return _read_strategies(path, mech, truth.n)
    return truth.induced_profile() if mech.ordinal else truth.values


def _profile_label(mech, profile):
    if mech.ordinal:
        return format_profile(profile)
    return "|".join(" ".join(str(v) for v in row) for row in profile)


# --- subcommands ------------------------------------------------------------------


def cmd_run(args):
    truth = _read_instance(args.instance)
    mech = _mechanism(args)
    prefs = _initial(mech, truth, args.strategies)
    p = mech.allocate(prefs)
    n = truth.n
    items = [f"item_{j + 1}" for j in range(n)]
    table = Table(["agent"] + items, rational=items, decimal=args.decimal)
    for i, row in enumerate(p):
        table.add(i + 1, *row)
    comments = [f"mechanism={mech.name}"]
    if not p.is_exact:
        comments.append(f"seed={args.seed} trials={args.trials}")
    text = table.render(comments)
    if isinstance(mech, ProbabilisticSerial):
        times = Table(["item", "exhaustion_time"], rational=["exhaustion_time"], decimal=args.decimal)
        for j, t in enumerate(mech.exhaustion_times(prefs)):
            times.add(j + 1, t)
        text += "\n" + times.render()
    _emit(text, args.output)
    return EXIT_OK


def cmd_opt(args):
    truth = _read_instance(args.instance)
    mu, total = optimal_matching(truth)
    table = Table(["welfare", "matching"], rational=["welfare"], decimal=args.decimal)
    table.add(total, format_order(mu))
    _emit(table.render(), args.output)
    return EXIT_OK


def _equilibrium_table(decimal):
    cols = ["profile_id", "verified", "max_gain", "welfare", "opt", "ratio"]
    return Table(cols, rational=["max_gain", "welfare", "opt", "ratio"], decimal=decimal)


def cmd_nash(args):
    truth = _read_instance(args.instance)
    mech = _mechanism(args)
    space = _space(args.space)
    epsilon = to_rational(args.epsilon, "epsilon")
    table = _equilibrium_table(args.decimal)
    comments = [f"mechanism={mech.name} action={args.action} epsilon={epsilon}"]
    status = EXIT_OK
    if args.action == "verify":
        prefs = _initial(mech, truth, args.strategies)
        rep = verify_pure_nash(mech, truth, prefs, space, epsilon, args.budget)
        table.add(_profile_label(mech, rep.profile), rep.verified, rep.max_gain, rep.welfare, rep.opt, rep.ratio)
        comments.append(f"certification: {rep.certification}")
        if not rep.verified:
            agent, strategy = rep.witness
            print(f"profitable deviation: agent {agent + 1} -> {_profile_label(mech, [strategy])}", file=sys.stderr)
            status = EXIT_VIOLATION
    elif args.action == "enumerate":
        reps = enumerate_pure_nash(mech, truth, epsilon, space, args.budget)
        for rep in reps:
            table.add(_profile_label(mech, rep.profile), rep.verified, rep.max_gain, rep.welfare, rep.opt, rep.ratio)
        comments.append(f"equilibria={len(reps)}")
        if reps:
            poa, pos = anarchy_ratios(reps[0].opt, [r.welfare for r in reps])
            comments.append(f"poa={poa} pos={pos}")
    else:
        init = _initial(mech, truth, args.strategies)
        result = best_response_dynamics(
            mech, truth, init, args.max_iters, args.agent_order, args.seed, space, args.budget
        )
        comments.append(f"seed={args.seed} iterations={result.iterations} converged={result.converged}")
        if not result.converged:
            print(f"no convergence within {args.max_iters} passes", file=sys.stderr)
            status = EXIT_INCONCLUSIVE
        else:
            rep = result.report
            table.add(_profile_label(mech, rep.profile), rep.verified, rep.max_gain, rep.welfare, rep.opt, rep.ratio)
    _emit(table.render(comments), args.output)
    return status


def cmd_learn(args):
    truth = _read_instance(args.instance)
    mech = _mechanism(args)
    dist = no_regret_dynamics(mech, truth, args.rounds, args.seed, args.learner, args.eta)
    _, opt = optimal_matching(truth)
    table = Table(["round", "max_average_regret"], rational=["max_average_regret"], decimal=args.decimal)
    for t, r in dist.checkpoints:
        table.add(t, r)
    comments = [
        f"mechanism={mech.name} learner={args.learner} rounds={args.rounds} seed={args.seed}",
        f"average_welfare={dist.average_welfare} opt={opt}",
    ]
    _emit(table.render(comments), args.output)
    return EXIT_OK


def _suite_table(reports, seed):
    table = Table(["check", "instances", "violations", "seed"])
    for rep in reports:
        table.add(rep.name, rep.instances, len(rep.violations), "" if seed is None else seed)
    return table


def cmd_check(args):
    if args.what == "ps-suite":
        if args.nmin < 1 or args.nmax < args.nmin:
            raise InputError("need 1 <= nmin <= nmax")
        suite = ps_bounds_suite(count=args.count, seed=args.seed, nmin=args.nmin, nmax=args.nmax)
        reports = [r for r in suite.checks.values() if r.instances]
    else:
        mech = _mechanism(args)
        if not mech.ordinal:
            raise InputError("envy and safety checks are defined for ordinal mechanisms")
        if args.what == "envy":
            if args.count:
                profiles, mode = random_profiles(args.n, args.count, args.seed), "sampled"
            else:
                profiles, mode = exhaustive_profiles(args.n), "exhaustive"
            reports = [check_envy_free(mech, profiles, mode, args.seed)]
        elif args.strategy:
            strategy = _parse_order_arg(args.strategy)
            true_order = _parse_order_arg(args.true_order) if args.true_order else strategy
            opponents = "sampled" if args.count else "exhaustive"
            reports = [
                check_safe_strategy(mech, args.agent - 1, strategy, true_order, args.n, opponents, args.count, args.seed)
            ]
        else:
            reports = [truthful_safety(mech, args.n)]
    table = _suite_table(reports, args.seed)
    _emit(table.render([f"check={args.what}"]), args.output)
    return EXIT_VIOLATION if any(r.violations for r in reports) else EXIT_OK


def _params(args):
    family = FAMILY_NAMES[args.family]
    n = args.n
    if n is None and args.k is not None and family in ("thm4-general", "thm10-unit-range"):
        n = args.k * args.k
    if n is None:
        raise InputError("give --n (or --k for thm4/thm10)")
    return cons.ConstructionParams(
        family,
        n=n,
        k=args.k,
        alpha=to_rational(args.alpha, "alpha") if args.alpha else None,
        delta=to_rational(args.delta, "delta") if args.delta else None,
    )


def cmd_construct(args):
    params = _params(args)
    generated = cons.generate(params)
    if isinstance(generated, tuple):
        u, u_prime = generated
        _emit(dump_instance(u), args.output)
        prime_path = args.prime_output
        if prime_path is None and args.output:
            out = Path(args.output)
            prime_path = str(out.with_name(out.stem + ".prime" + out.suffix))
        if prime_path:
            Path(prime_path).write_text(dump_instance(u_prime))
        else:
            sys.stdout.write(dump_instance(u_prime))
        for prof in (u, u_prime):
            if not validate_profile(prof):
                return EXIT_VIOLATION
    else:
        _emit(dump_instance(generated), args.output)
        if not validate_profile(generated):
            return EXIT_VIOLATION
    return EXIT_OK


_STATUS_EXIT = {"verified": EXIT_OK, "failed": EXIT_VIOLATION, "inconclusive": EXIT_INCONCLUSIVE}


def _audit(args, params):
    mech = _mechanism(args)
    return cons.verify_construction(mech, params, args.strategy, budget=args.budget, max_iters=args.max_iters)


def cmd_audit(args):
    params = _params(args)
    rep = _audit(args, params)
    if args.format == "text":
        lines = [
            f"family: {rep.family}",
            f"mechanism: {rep.mechanism}",
            f"n: {params.n}",
            f"status: {rep.status}",
            f"welfare: {rep.welfare}",
            f"opt: {rep.opt}",
            f"ratio: {rep.ratio}",
            f"predicted bound: {rep.predicted_bound}",
        ]
        lines += [f"check {name}: {'pass' if ok else 'FAIL'}" for name, ok in rep.checks.items()]
        lines += [f"note: {note}" for note in rep.notes]
        text = "\n".join(lines) + "\n"
    else:
        cols = ["family", "mechanism", "n", "status", "welfare", "opt", "ratio", "predicted_bound"]
        table = Table(cols, rational=["welfare", "opt", "ratio", "predicted_bound"], decimal=args.decimal)
        table.add(rep.family, rep.mechanism, params.n, rep.status, rep.welfare, rep.opt, rep.ratio, rep.predicted_bound)
        checks = Table(["check", "passed"])
        for name, ok in rep.checks.items():
            checks.add(name, ok)
        text = table.render() + "\n" + checks.render()
    _emit(text, args.output)
    for note in rep.notes:
        print(note, file=sys.stderr)
    return _STATUS_EXIT.get(rep.status, EXIT_INCONCLUSIVE)


def cmd_sweep(args):
    try:
        xs = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"--values must be comma separated integers, got {args.values!r}") from None
    use_k = FAMILY_NAMES[args.family] in ("thm4-general", "thm10-unit-range")
    cols = ["x", "n", "status", "welfare", "opt", "ratio", "predicted_bound"]
    table = Table(cols, rational=["welfare", "opt", "ratio", "predicted_bound"], decimal=args.decimal)
    worst = EXIT_OK
    for x in xs:
        args.k, args.n = (x, x * x) if use_k else (None, x)
        params = _params(args)
        rep = _audit(args, params)
        table.add(x, params.n, rep.status, rep.welfare, rep.opt, rep.ratio, rep.predicted_bound)
        worst = max(worst, _STATUS_EXIT.get(rep.status, EXIT_INCONCLUSIVE))
    axis = "k" if use_k else "n"
    _emit(table.render([f"family={args.family} mechanism={args.mechanism} x={axis}"]), args.output)
    return worst


# --- parser -----------------------------------------------------------------------


def _common(p, mechanism=True, default_mech="ps"):
    p.add_argument("-o", "--output", help="write primary output here instead of stdout")
    p.add_argument("--decimal", action="store_true", help="append approximate decimal columns")
    if mechanism:
        p.add_argument("--mechanism", choices=sorted(MECHANISMS), default=default_mech)
        p.add_argument("--mode", choices=["exact", "sample"], default="exact", help="Random Priority mode")
        p.add_argument("--trials", type=int, help="sample count for sampled Random Priority")
        p.add_argument("--max-exact-n", type=int, default=DEFAULT_MAX_EXACT_N, dest="max_exact_n")


def _family_args(p):
    p.add_argument("family", choices=sorted(FAMILY_NAMES))
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--alpha")
    p.add_argument("--delta")


def build_parser():
    parser = argparse.ArgumentParser(prog="matchpoa", description="Exact one-sided matching mechanisms and equilibria.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="allocate an instance with a mechanism")
    _common(p)
    p.add_argument("--instance", required=True)
    p.add_argument("--strategies", help="reported orders (default: truthful)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("opt", help="optimal matching and welfare")
    _common(p, mechanism=False)
    p.add_argument("--instance", required=True)
    p.set_defaults(func=cmd_opt)

    p = sub.add_parser("nash", help="verify, enumerate or search pure Nash equilibria")
    p.add_argument("action", choices=["verify", "enumerate", "brd"])
    _common(p)
    p.add_argument("--instance", required=True)
    p.add_argument("--strategies")
    p.add_argument("--epsilon", default="0")
    p.add_argument("--space", help="all | top-m:M | grid:D")
    p.add_argument("--budget", type=int, default=DEFAULT_EVAL_BUDGET)
    p.add_argument("--max-iters", type=int, default=100, dest="max_iters")
    p.add_argument("--agent-order", choices=["round-robin", "seeded-random"], default="round-robin", dest="agent_order")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_nash)

    p = sub.add_parser("learn", help="no-regret dynamics")
    _common(p)
    p.add_argument("--instance", required=True)
    p.add_argument("--rounds", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--learner", choices=["regret-matching", "multiplicative-weights"], default="regret-matching")
    p.add_argument("--eta", type=float, default=0.1)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("check", help="property suites")
    p.add_argument("what", choices=["ps-suite", "envy", "safe"])
    _common(p)
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--nmin", type=int, default=3)
    p.add_argument("--nmax", type=int, default=5)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--agent", type=int, default=1, help="1-based agent for safe checks")
    p.add_argument("--strategy", help='1-based order, e.g. "2 1 3"')
    p.add_argument("--true-order", dest="true_order")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("construct", help="write an adversarial instance")
    _family_args(p)
    _common(p, mechanism=False)
    p.add_argument("--prime-output", dest="prime_output", help="thm5: where to write the second profile")
    p.set_defaults(func=cmd_construct)

    for name, func, helptext in (
        ("audit", cmd_audit, "run a construction pipeline against a mechanism"),
        ("sweep", cmd_sweep, "run a construction pipeline over several sizes (plot data)"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("family", choices=sorted(FAMILY_NAMES))
        _common(p)
        if name == "audit":
            p.add_argument("--n", type=int)
            p.add_argument("--k", type=int)
            p.add_argument("--format", choices=["csv", "text"], default="csv")
        else:
            p.add_argument("--values", required=True, help="comma separated k (thm4, thm10) or n (thm5, thm6)")
        p.add_argument("--alpha")
        p.add_argument("--delta")
        p.add_argument(
            "--strategy",
            choices=["truthful-candidate", "brd-search", "enumerate"],
            default="truthful-candidate",
        )
        p.add_argument("--budget", type=int, default=DEFAULT_PROFILE_BUDGET)
        p.add_argument("--max-iters", type=int, default=50, dest="max_iters")
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ShapeError, InputError, cons.ConstructionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CapacityError as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE


if __name__ == "__main__":
    sys.exit(main())
