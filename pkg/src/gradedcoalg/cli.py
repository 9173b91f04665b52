"""Command-line front end: ``gradedcoalg {kernel,trace,equiv,quotient,eval,check}``.

Exit status is 0 on success, 1 when a checked property fails and 2 for usage
or model-validation errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction

from . import ctmc, gcoalg, glogic, suites
from .findist import FinSubDist, format_weight
from .timealg import as_time, format_time, format_word, parse_word

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
BUILTINS = ("repairable4", "repairable3", "randomwalk")


class UsageError(Exception):
    pass


def _split(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _time_list(text: str) -> list[Fraction]:
    try:
        return [as_time(p) for p in _split(text)]
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def build_builtin(name: str, lam, mu, radius: int = 3) -> ctmc.LabelledModel:
    if name == "repairable4":
        return ctmc.repairable_4state(lam, mu)
    if name == "repairable3":
        return ctmc.repairable_3state(lam, mu)
    if name == "randomwalk":
        return ctmc.random_walk_model(lam, mu, radius)
    raise UsageError(f"unknown built-in model {name!r}; choose from {', '.join(BUILTINS)}")


def load_models(args) -> tuple[ctmc.LabelledModel, ctmc.LabelledModel | None]:
    if args.model:
        m1 = ctmc.load_model(args.model)
    else:
        m1 = build_builtin(args.builtin, args.lam, args.mu, args.radius)
    m2 = None
    if getattr(args, "other_model", None):
        m2 = ctmc.load_model(args.other_model)
    elif getattr(args, "other_builtin", None):
        m2 = build_builtin(args.other_builtin, args.lam, args.mu, args.radius)
    return m1, m2


def _exact(args) -> bool:
    return args.mode_arith == "rational"


def _weight(w, args) -> str:
    return format_weight(w, _exact(args))


def _state(m, name: str) -> str:
    if name not in m.states:
        raise UsageError(f"unknown state {name!r}; model has {', '.join(m.states)}")
    return name


def _csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow(r)
    return buf.getvalue().rstrip("\n")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False)


def _weight_json(w, args):
    if _exact(args) and not isinstance(w, float):
        w = Fraction(w)
        return w.numerator if w.denominator == 1 else f"{w.numerator}/{w.denominator}"
    return float(f"{float(w):.12g}")


# ---------------------------------------------------------------------------
# commands


def cmd_kernel(args, out) -> int:
    m, _ = load_models(args)
    times = _time_list(args.time)
    if not times:
        raise UsageError("--time needs at least one value")
    records = []
    for t in times:
        k = ctmc.kernel_at(m.generator, t)
        records.append((t, k))
    if args.format == "json":
        payload = [{"time": format_time(t), "states": list(m.states),
                    "matrix": [[_weight_json(k.matrix[i, j] if t else int(i == j), args) for j in range(len(m.states))]
                               for i in range(len(m.states))]} for t, k in records]
        print(_json(payload), file=out)
    elif args.format == "csv":
        rows = [("time", "from", "to", "weight")]
        for t, k in records:
            for j, src in enumerate(m.states):
                for i, dst in enumerate(m.states):
                    w = k.matrix[i, j] if t else int(i == j)
                    rows.append((format_time(t), src, dst, _weight(w, args)))
        print(_csv(rows), file=out)
    else:
        for t, k in records:
            print(f"t = {format_time(t)}   (entry in row k, column j is the probability j -> k)", file=out)
            cells = [[_weight(k.matrix[i, j] if t else int(i == j), args) for j in range(len(m.states))]
                     for i in range(len(m.states))]
            width = max(max(len(c) for row in cells for c in row), max(len(s) for s in m.states))
            print(" " * (width + 2) + "  ".join(s.rjust(width) for s in m.states), file=out)
            for s, row in zip(m.states, cells):
                print(s.rjust(width) + "  " + "  ".join(c.rjust(width) for c in row), file=out)
    return EXIT_OK


def _show_word(w: tuple) -> str:
    return gcoalg.word_key(w)


def _print_dist(d: FinSubDist, args, out, labels, key: str = "word") -> None:
    rank = {b: i for i, b in enumerate(labels)}
    items = sorted(d.items(), key=lambda a: tuple(rank[b] for b in a[0]))
    if args.format == "json":
        print(_json({_show_word(w): _weight_json(p, args) for w, p in items}), file=out)
    elif args.format == "csv":
        print(_csv([(key, "weight")] + [(_show_word(w), _weight(p, args)) for w, p in items]), file=out)
    else:
        if not items:
            print("0", file=out)
        else:
            print(" + ".join(f"{_weight(p, args)}|{_show_word(w)}⟩" for w, p in items), file=out)


def cmd_trace(args, out) -> int:
    m, _ = load_models(args)
    x = _state(m, args.state)
    try:
        word = parse_word(args.word)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _print_dist(gcoalg.trace_vector(m, x, word), args, out, m.labels)
    return EXIT_OK


def _equiv_config(args) -> gcoalg.EquivConfig:
    try:
        return gcoalg.EquivConfig(
            time_grid=tuple(_time_list(args.time_grid)),
            max_segments=args.max_segments,
            max_obs=args.max_obs,
            tol=args.tol,
            exact=args.exact,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_equiv(args, out) -> int:
    m1, m2 = load_models(args)
    m2 = m2 or m1
    names = _split(args.states)
    if len(names) != 2:
        raise UsageError("--states expects two comma-separated state names")
    x, y = _state(m1, names[0]), _state(m2, names[1])
    if args.mode == "behavioural":
        verdict = gcoalg.behavioural_equivalent(m1, x, m2, y)
    else:
        verdict = gcoalg.trace_equivalent(m1, x, m2, y, _equiv_config(args))
    payload = verdict.to_json()
    if args.format == "json":
        print(_json(payload), file=out)
    elif args.format == "csv":
        print(_csv([("kind", "detail"), (verdict.kind, _summary(verdict))]), file=out)
    else:
        print(f"{x} vs {y}: {verdict.kind}", file=out)
        print(f"  {_summary(verdict)}", file=out)
    return EXIT_OK


def _summary(verdict) -> str:
    if isinstance(verdict, gcoalg.Distinguished):
        return f"word {format_word(verdict.witness_word)}, gap {verdict.gap:.12g}"
    if isinstance(verdict, gcoalg.IndistinguishableUpTo):
        b = verdict.bound
        return (f"no difference within grid {{{', '.join(b['time_grid'])}}}, "
                f"{b['max_segments']} segments, {b['max_obs']} observations, tol {b['tol']:g}")
    if isinstance(verdict, gcoalg.EquivalentWitness):
        return "same block of the lumping: " + " | ".join("{" + ", ".join(b) + "}" for b in verdict.partition)
    return "lumping kept the states apart (not a proof of inequivalence)"


def _budget(args, instance) -> glogic.FormulaBudget:
    base = glogic.FormulaBudget.default(instance)
    depth = base.max_depth if args.max_depth is None else args.max_depth
    try:
        return glogic.FormulaBudget(max_depth=depth, times=tuple(_time_list(args.time_grid)))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_quotient(args, out) -> int:
    m, _ = load_models(args)
    if args.via == "lumping":
        q = ctmc.lumpability_quotient(m)
        partition = q.partition
    else:
        instance = glogic.instance_named(args.logic)
        partition = glogic.logical_quotient(m, instance, _budget(args, instance), tol=args.tol)
        q = ctmc.quotient_model(m, partition)
        report = ctmc.check_homomorphism(q.mapping, m, q.model, tol=args.tol)
        if not report.passed:
            q = None
    blocks = [list(b) for b in partition]
    if args.format == "json":
        payload = {"via": args.via, "partition": blocks}
        if q is not None:
            payload["quotient"] = ctmc.model_to_json(q.model)
        print(_json(payload), file=out)
    elif args.format == "csv":
        print(_csv([("state", "block")] + [(s, "+".join(b)) for b in blocks for s in b]), file=out)
    else:
        print(f"{len(blocks)} blocks: " + " | ".join("{" + ", ".join(b) + "}" for b in blocks), file=out)
        if q is None:
            print("  partition is not lumpable; no quotient model", file=out)
    if args.output:
        if q is None:
            raise UsageError("partition is not lumpable; cannot write a quotient model")
        ctmc.save_model(q.model, args.output)
    return EXIT_OK


def _value_text(v, args) -> str:
    if isinstance(v, bool):
        return "⊤" if v else "⊥"
    return _weight(v, args)


def cmd_eval(args, out) -> int:
    m, _ = load_models(args)
    instance = glogic.instance_named(args.logic)
    try:
        formula = glogic.parse_formula(args.formula, m.labels)
    except glogic.FormulaSyntaxError as exc:
        raise UsageError(f"formula syntax: {exc}") from None
    if not instance.accepts(formula):
        raise UsageError(f"formula uses operators outside the {args.logic} logic")
    if args.all == (args.state is not None):
        raise UsageError("give exactly one of --state or --all")
    states = list(m.states) if args.all else [_state(m, args.state)]
    values = glogic.evaluate(formula, m, instance)
    if args.format == "json":
        print(_json({s: (values[s] if isinstance(values[s], bool) else _weight_json(values[s], args)) for s in states}),
              file=out)
    elif args.format == "csv":
        print(_csv([("state", "value")] + [(s, _value_text(values[s], args)) for s in states]), file=out)
    else:
        print(glogic.format_formula(formula), file=out)
        for s in states:
            print(f"  {s}: {_value_text(values[s], args)}", file=out)
    return EXIT_OK


def cmd_check(args, out) -> int:
    names = args.suite or None
    results = suites.run_suites(names, mutate=args.mutate)
    ok = all(r.passed for r in results)
    if args.format == "json":
        print(_json([{"suite": r.name, "passed": r.passed, "details": r.lines} for r in results]), file=out)
    else:
        for r in results:
            print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}", file=out)
            for line in r.lines:
                print(f"    {line}", file=out)
        print(f"{sum(r.passed for r in results)}/{len(results)} suites passed", file=out)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# parser


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return v


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--model", metavar="PATH", help="model JSON file")
    src.add_argument("--builtin", choices=BUILTINS, default="repairable4", help="built-in model (default repairable4)")
    common.add_argument("--lambda", dest="lam", default="1", help="failure rate for built-ins (default 1)")
    common.add_argument("--mu", default="1", help="repair rate for built-ins (default 1)")
    common.add_argument("--radius", type=int, default=3, help="window radius of the randomwalk built-in")
    common.add_argument("--tol", type=_positive_float, default=1e-8)
    common.add_argument("--format", choices=("table", "csv", "json"), default="table")
    common.add_argument("--mode-arith", choices=("rational", "float"), default="rational",
                        help="print exact weights as fractions (rational) or decimals (float)")

    parser = argparse.ArgumentParser(prog="gradedcoalg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernel", parents=[common], help="transition kernels at given times")
    p.add_argument("--time", required=True, help="comma-separated times, e.g. 0,0.5,1")
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("trace", parents=[common], help="label-word distribution from a state")
    p.add_argument("--state", required=True)
    p.add_argument("--word", default="", help="sampling word such as 1.5:2,3:0 (empty: unit)")
    p.set_defaults(func=cmd_trace)

    grid = "0.1,0.5,1,2,5"
    p = sub.add_parser("equiv", parents=[common], help="behavioural or trace equivalence of two states")
    p.add_argument("--mode", choices=("behavioural", "trace"), default="trace")
    p.add_argument("--states", required=True, help="X,Y (Y refers to the second model when one is given)")
    other = p.add_mutually_exclusive_group()
    other.add_argument("--other-model", metavar="PATH")
    other.add_argument("--other-builtin", choices=BUILTINS)
    p.add_argument("--time-grid", default=grid)
    p.add_argument("--max-segments", type=_nonneg_int, default=3)
    p.add_argument("--max-obs", type=_nonneg_int, default=4)
    p.add_argument("--exact", action="store_true", help="also compare eigen-coefficients of single-segment traces")
    p.set_defaults(func=cmd_equiv)

    p = sub.add_parser("quotient", parents=[common], help="quotient by lumping or by logical equivalence")
    p.add_argument("--via", choices=("lumping", "logic"), default="lumping")
    p.add_argument("--logic", choices=("bool", "quant"), default="bool")
    p.add_argument("--max-depth", type=_nonneg_int, default=None)
    p.add_argument("--time-grid", default=grid)
    p.add_argument("--output", metavar="PATH", help="write the quotient model JSON here")
    p.set_defaults(func=cmd_quotient)

    p = sub.add_parser("eval", parents=[common], help="evaluate a modal formula")
    p.add_argument("--logic", choices=("bool", "quant"), required=True)
    p.add_argument("--formula", required=True)
    p.add_argument("--state")
    p.add_argument("--all", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("check", parents=[common], help="run property suites")
    p.add_argument("--suite", action="append", choices=tuple(suites.SUITES), help="repeatable; default all")
    p.add_argument("--mutate", choices=("swap-label",), help="run against a deliberately broken law")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args, out)
    except (UsageError, ctmc.ModelValidationError, glogic.FormulaSyntaxError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
