"""Command-line front end.

Every subcommand prints either readable text or, with ``--format json``, one
JSON document ``{"command", "inputs", "result", "status"}``.  Exact values are
written as ``"num/den"`` strings next to a decimal approximation.

Exit codes: 0 success, 1 parse or usage error, 2 budget exceeded, 3 domain or
parameter error, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from . import bounds, brp
from .metric import DEFAULT_PAIR_BUDGET, MetricEngine
from .semantics import BudgetExceeded, derive, reachable
from .syntax import TermError, depth, parse, render, size

EXIT_OK, EXIT_USAGE, EXIT_BUDGET, EXIT_DOMAIN, EXIT_VERIFY = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class VerificationFailed(Exception):
    def __init__(self, message: str, result: dict):
        super().__init__(message)
        self.result = result


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def frac(q) -> str:
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


def rational(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def rational_list(text: str) -> list[Fraction]:
    return [rational(x) for x in text.split(",") if x.strip()]


def _number(q) -> dict:
    return {"fraction": frac(q), "decimal": float(q)}


# ------------------------------------------------------------------ commands

def _read_term(text: str):
    if text == "-":
        text = sys.stdin.read()
    return parse(text)


def _transitions_json(trans) -> list[dict]:
    return [{"action": a, "support": [{"term": render(u), "prob": frac(w)} for u, w in mu.items()]}
            for a, mu in trans]


def _transitions_text(trans, indent: str = "  ") -> list[str]:
    lines = []
    for a, mu in trans:
        support = ", ".join(f"{render(u)}: {frac(w)}" for u, w in mu.items())
        lines.append(f"{indent}--{a}--> {{{support}}}")
    return lines or [f"{indent}(no transitions)"]


def cmd_parse(args):
    t = _read_term(args.term)
    result = {"term": render(t), "size": size(t), "depth": depth(t)}
    return result, [render(t)]


def cmd_derive(args):
    t = _read_term(args.term)
    cache = {}
    if args.depth is None:
        trans = derive(t, cache)
        return {"term": render(t), "transitions": _transitions_json(trans)}, _transitions_text(trans)
    reach = reachable(t, args.depth, args.budget, cache=cache)
    states = sorted(reach.states, key=lambda u: u.sort_key())
    result = {"term": render(t), "depth": args.depth, "truncated": reach.truncated,
              "states": [{"term": render(u), "transitions": _transitions_json(derive(u, cache))}
                         for u in states]}
    lines = []
    for u in states:
        lines.append(render(u))
        lines.extend(_transitions_text(derive(u, cache)))
    if reach.truncated:
        lines.append(f"(truncated at {args.budget} states)")
    return result, lines


def cmd_dist(args):
    s, t = parse(args.left), parse(args.right)
    lam = _discount(args.lam)
    engine = MetricEngine(lam, args.budget)
    if args.upto is not None:
        value = engine.upto(s, t, args.upto)
        lower, upper, exact, used = value, min(Fraction(1), value + lam ** args.upto), False, args.upto
    else:
        res = engine.approx(s, t, args.epsilon) if args.epsilon is not None else engine.exact(s, t)
        value, lower, upper, exact, used = res.value, res.lower, res.upper, res.exact, res.depth_used
    result = {"value": frac(value), "decimal": float(value), "lower": frac(lower),
              "upper": frac(upper), "exact": exact, "depth": used}
    text = f"{frac(value)} (~{float(value):.6g})"
    if not exact and upper != lower:
        text += f"  in [{frac(lower)}, {frac(upper)}]"
    return result, [text]


def _combinator(args) -> bounds.Combinator:
    sync = frozenset(x.strip() for x in args.sync_set.split(",") if x.strip()) if args.sync_set else frozenset()
    return bounds.Combinator(args.op, n=args.n, p=args.p, sync=sync,
                             weights=tuple(args.weights) if args.weights else None)


def _discount(lam: Fraction) -> Fraction:
    if not 0 < lam <= 1:
        raise bounds.DomainError(f"discount factor {lam} outside (0,1]")
    return lam


def cmd_bound(args):
    op = _combinator(args)
    value = bounds.bound(op, _discount(args.lam), args.eps)
    result = {"op": str(op), "bound": frac(value), "decimal": float(value)}
    factor = bounds.lipschitz_factor(op, args.lam)
    if factor is not None:
        result["lipschitz"] = frac(factor)
    return result, [f"{frac(value)} (~{float(value):.6g})"]


def cmd_witness(args):
    op = _combinator(args)
    lam = _discount(args.lam)
    ss, ts = bounds.witness(op, lam, args.eps)
    result = {"op": str(op), "left": [render(x) for x in ss], "right": [render(x) for x in ts],
              "composed": [render(op.compose(ss)), render(op.compose(ts))]}
    lines = [f"s{i + 1} = {render(s)}    t{i + 1} = {render(t)}" for i, (s, t) in enumerate(zip(ss, ts))]
    if not args.verify:
        return result, lines
    report = bounds.verify_tightness(op, lam, args.eps, depth=args.depth, budget=args.budget)
    result["verification"] = {
        "bound": frac(report.formula_value), "engine_lower": frac(report.engine_lower),
        "engine_upper": frac(report.engine_upper), "tight": report.tight,
        "sound": report.sound, "depth": report.depth_used, "witness": report.witness,
    }
    lines.append(f"bound {frac(report.formula_value)}, engine [{frac(report.engine_lower)}, "
                 f"{frac(report.engine_upper)}], {'tight' if report.tight else 'not tight'}"
                 f" ({report.witness} witnesses)")
    # Undiscounted cycles never stabilise, so only soundness can be checked there.
    sound_only = op.kind in bounds.CYCLIC and lam == 1
    if not report.sound or not (report.tight or sound_only):
        raise VerificationFailed("witnesses do not attain the bound", result)
    return result, lines


def cmd_brp_report(args):
    params = brp.BrpParams(args.n, args.t, args.p, args.q, args.domain_size)
    delta = brp.ch_bound(params.p, params.q)
    eps = brp.brp_bound(params.n, params.p, params.q)
    result = {
        "ch_bound": _number(delta), "brp_bound": _number(eps),
        "uniform_bound": _number(brp.uniform_bound(params.n, params.p, params.q)),
        "stream": brp.perf_from_epsilon(eps, params.n, params.t)._asdict(),
        "channel": brp.perf_channel_from_delta(delta, params.t)._asdict(),
    }
    lines = [f"channel bound  {frac(delta)} (~{float(delta):.6g})",
             f"protocol bound {frac(eps)} (~{float(eps):.6g})",
             f"all items delivered with likelihood >= {result['stream']['all_items']:.6g}"]
    if not args.verify:
        return result, lines
    rep = brp.verify_brp_bound(params, _discount(args.lam), args.depth, args.budget)
    result["verification"] = {
        "lambda": frac(rep.lam), "depth": rep.depth,
        "channel_distance": frac(rep.channel.engine_lower),
        "protocol_distance": frac(rep.protocol.engine_lower), "ok": rep.ok,
    }
    lines.append(f"engine: channel d_{rep.depth} = {frac(rep.channel.engine_lower)}, "
                 f"protocol d_{rep.depth} = {frac(rep.protocol.engine_lower)}, "
                 f"{'within bounds' if rep.ok else 'BOUND VIOLATED'}")
    if not rep.ok:
        raise VerificationFailed("engine distance exceeds a bound", result)
    return result, lines


def cmd_brp_solve(args):
    eps = brp.solve_for_epsilon(args.target, args.n, args.t)
    delta = brp.channel_requirement(eps, args.n)
    result = {"epsilon": eps, "channel_delta": delta}
    return result, [f"epsilon = {eps:.6g}", f"channel delta = {delta:.6g}"]


def cmd_selftest(args):
    from .acceptance import run_all

    outcomes = run_all()
    result = {"criteria": [{"id": o.ident, "name": o.name, "passed": o.passed, "detail": o.detail}
                           for o in outcomes]}
    lines = [o.line() for o in outcomes]
    if not all(o.passed for o in outcomes):
        raise VerificationFailed("acceptance criteria failed", result)
    return result, lines


# ------------------------------------------------------------------ wiring

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("text", "json"), default="text")
    common.add_argument("--budget", type=int, default=DEFAULT_PAIR_BUDGET)

    parser = _Parser(prog="procmetric", description="Bisimulation distances for probabilistic process terms.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", parents=[common], help="parse and pretty-print a term")
    p.add_argument("term", help="term text, or - for stdin")
    p.set_defaults(run=cmd_parse)

    p = sub.add_parser("derive", parents=[common], help="list transitions")
    p.add_argument("--term", required=True)
    p.add_argument("--depth", type=int, help="dump all states reachable within this many steps")
    p.set_defaults(run=cmd_derive)

    p = sub.add_parser("dist", parents=[common], help="distance between two terms")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--lambda", dest="lam", type=rational, required=True)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--upto", type=int)
    mode.add_argument("--epsilon", type=rational)
    mode.add_argument("--exact", action="store_true")
    p.set_defaults(run=cmd_dist)

    for name, run, help_text in (("bound", cmd_bound, "evaluate a compositional bound"),
                                 ("witness", cmd_witness, "tightness witnesses for a bound")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--op", required=True)
        p.add_argument("--p", type=rational)
        p.add_argument("--n", type=int)
        p.add_argument("--weights", type=rational_list)
        p.add_argument("--sync-set", default="")
        p.add_argument("--lambda", dest="lam", type=rational, required=True)
        p.add_argument("--eps", type=rational_list, required=True)
        if name == "witness":
            p.add_argument("--verify", action="store_true")
            p.add_argument("--depth", type=int, default=30)
        p.set_defaults(run=run)

    p = sub.add_parser("brp", help="bounded retransmission protocol study")
    bsub = p.add_subparsers(dest="brp_command", required=True, parser_class=_Parser)
    r = bsub.add_parser("report", parents=[common])
    r.add_argument("--n", type=int, required=True)
    r.add_argument("--t", type=int, required=True)
    r.add_argument("--p", type=rational, required=True)
    r.add_argument("--q", type=rational, required=True)
    r.add_argument("--domain-size", type=int, default=1)
    r.add_argument("--lambda", dest="lam", type=rational, default=Fraction(1))
    r.add_argument("--depth", type=int, default=20)
    r.add_argument("--verify", action="store_true")
    r.set_defaults(run=cmd_brp_report)
    s = bsub.add_parser("solve", parents=[common])
    s.add_argument("--target", type=float, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--t", type=int, required=True)
    s.set_defaults(run=cmd_brp_solve)

    p = sub.add_parser("selftest", parents=[common], help="run the acceptance suite")
    p.set_defaults(run=cmd_selftest)
    return parser


def _inputs(args) -> dict:
    skip = {"run", "format", "command", "brp_command"}
    out = {}
    for k, v in vars(args).items():
        if k in skip or v is None:
            continue
        if isinstance(v, Fraction):
            v = frac(v)
        elif isinstance(v, list):
            v = [frac(x) if isinstance(x, Fraction) else x for x in v]
        out[k] = v
    return out


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    wants_json = any(a == "--format=json" for a in argv) or any(
        a == "--format" and b == "json" for a, b in zip(argv, argv[1:]))
    command = " ".join(a for a in argv[:2] if not a.startswith("-")) or None

    def emit(status: str, result, inputs=None, lines=(), error: str | None = None):
        if wants_json:
            doc = {"command": command, "inputs": inputs or {}, "result": result, "status": status}
            if error:
                doc["error"] = error
            print(json.dumps(doc, indent=2))
        else:
            for line in lines:
                print(line)
            if error:
                print(f"error: {error}", file=sys.stderr)

    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        emit("usage_error", None, error=str(e))
        return EXIT_USAGE
    inputs = _inputs(args)
    try:
        result, lines = args.run(args)
    except TermError as e:
        emit("parse_error", None, inputs, error=str(e))
        return EXIT_USAGE
    except BudgetExceeded as e:
        partial = getattr(e, "partial", None)
        if isinstance(partial, tuple) and len(partial) == 2:
            partial = {"lower": frac(partial[0]), "upper": frac(partial[1])}
        else:
            partial = None
        emit("budget_exceeded", {"partial": partial}, inputs, error=str(e))
        return EXIT_BUDGET
    except VerificationFailed as e:
        emit("verification_failed", e.result, inputs, error=str(e))
        return EXIT_VERIFY
    except ValueError as e:
        emit("domain_error", None, inputs, error=str(e))
        return EXIT_DOMAIN
    emit("ok", result, inputs, lines)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
