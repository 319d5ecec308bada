"""Command-line interface: ``mdpx <subcommand> FILE [options]``.

Exit codes: 0 success, 1 usage error, 2 parse or validation error,
3 infinite value detected, 4 resource guard exceeded.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import approx as approx_mod
from .bounds import compute_bounds, tail_certificate
from .errors import InfiniteValueError, ResourceLimitError
from .exact import PreconditionError, nonneg_ce_exact, nonneg_solve_exact, solve_markov_chain
from .fmt import ParseError, format_rational, parse_mdp, parse_rational, rational_json, serialize_mdp
from .graph import reach_probabilities
from .model import model_constants
from .oracle import oracle_pe, simulate
from .preprocess import (CriticalSchedulerError, classify_finiteness, collapse_to_fail, posmin_transform,
                         prepare, spider_transform)

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_INFINITE, EXIT_RESOURCE = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _rat(text: str) -> Fraction:
    try:
        return parse_rational(text)
    except ParseError as e:
        raise argparse.ArgumentTypeError(str(e))


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="emit the report as JSON")
    common.add_argument("--digits", type=int, default=10, help="decimal digits in renderings (default 10)")
    common.add_argument("--deterministic", action="store_true", help="omit timings from the report")
    common.add_argument("--internal", action="store_true", help="allow reserved __ identifiers in the input")

    p = _Parser(prog="mdpx", description="Partial and conditional expectations in weighted MDPs.",
                parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", parents=[common], help="finiteness classification")
    c.add_argument("file")

    e = sub.add_parser("exact", parents=[common], help="exact values (Markov chains, non-negative weights)")
    e.add_argument("file")
    e.add_argument("--mode", choices=["pe", "ce"], default="pe")
    e.add_argument("--bias", type=_rat, default=Fraction(0))

    a = sub.add_parser("approx", parents=[common], help="epsilon-approximation with a witnessing scheduler")
    a.add_argument("file")
    a.add_argument("--epsilon", type=_rat, required=True)
    a.add_argument("--mode", choices=["pe", "ce"], default="pe")
    a.add_argument("--bias", type=_rat, default=Fraction(0))
    a.add_argument("--emit-scheduler", metavar="PATH")
    a.add_argument("--window-mode", choices=["tight", "generic"], default="tight",
                   help="window sizing: certified tight bound (default) or the closed-form constants")
    a.add_argument("--max-cells", type=int, default=approx_mod.DEFAULT_MAX_CELLS)

    b = sub.add_parser("bounds", parents=[common], help="all derived bound constants")
    b.add_argument("file")
    b.add_argument("--epsilon", type=_rat, default=Fraction(1, 1000))

    t = sub.add_parser("transform", parents=[common], help="apply a model transformation")
    t.add_argument("file")
    g = t.add_mutually_exclusive_group(required=True)
    g.add_argument("--collapse", action="store_true")
    g.add_argument("--spider", action="store_true")
    g.add_argument("--posmin", action="store_true")
    t.add_argument("--out", required=True)

    o = sub.add_parser("oracle", parents=[common], help="brute-force optimum over a fixed window")
    o.add_argument("file")
    o.add_argument("--window", type=int, required=True)
    o.add_argument("--bias", type=_rat, default=Fraction(0))
    o.add_argument("--samples", type=int)
    o.add_argument("--horizon", type=int, default=1000)
    o.add_argument("--seed", type=int, default=0)
    return p


# ------------------------------------------------------------------ subcommands

def _verdict_json(v) -> dict:
    return {"peFinite": v.pe_finite, "ceFinite": v.ce_finite, "reason": v.reason, "witness": v.witness}


def cmd_check(args, model, R):
    v = classify_finiteness(model)
    mc = model_constants(model)
    prof = reach_probabilities(model)
    s0 = model.initial
    return {"verdicts": _verdict_json(v),
            "values": {"W": mc.W, "delta": R(mc.delta), "stateCount": mc.state_count,
                       "pMaxInit": R(prof.p_max[s0]), "pMinInit": R(prof.p_min[s0])}}


def cmd_exact(args, model, R):
    v = classify_finiteness(model)
    if not v.pe_finite or (args.mode == "ce" and not v.ce_finite):
        raise InfiniteValueError(f"{args.mode} is not finite ({v.reason})", v.witness, v.reason)
    if model.is_markov_chain():
        chain, _ = collapse_to_fail(model)
        pe, ce = solve_markov_chain(chain, args.bias)
        vals = {"method": "markov-chain", "pe": R(pe), "ce": R(ce)}
        return {"verdicts": _verdict_json(v), "values": vals}
    if any(w < 0 for w in model.weights()):
        raise PreconditionError("exact values exist only for Markov chains and non-negative weights; "
                                "the optimum may be irrational here, use `mdpx approx`")
    if args.mode == "pe":
        prep = prepare(model)
        if prep.goal_unreachable:
            return {"verdicts": _verdict_json(v), "values": {"method": "goal-unreachable", "pe": R(0)}}
        table = nonneg_solve_exact(prep.model, args.bias)
        vals = {"method": "saturation", "pe": R(table.value(prep.model.initial)),
                "saturation": R(table.saturation), "windowTop": table.window_top}
    else:
        prep = prepare(model, posmin=True)
        theta, hist = nonneg_ce_exact(prep.model)
        vals = {"method": "saturation-fractional", "ce": R(theta), "rounds": len(hist)}
    return {"verdicts": _verdict_json(v), "values": vals}


def _plan_json(trace: dict, R) -> dict:
    return {"mode": trace["mode"], "window": trace["window"], "rPlus": trace["r_plus"],
            "rMinus": R(trace["r_minus"]), "q": R(trace["q"]), "peUb": R(trace["pe_ub"]), "D": R(trace["D"]),
            "cells": trace["cells"], "exactIterations": trace["exact_iterations"]}


def cmd_approx(args, model, R):
    if args.epsilon <= 0:
        raise UsageError("--epsilon must be positive")
    v = classify_finiteness(model)
    if args.mode == "pe":
        if not v.pe_finite:
            raise InfiniteValueError(f"partial expectation is not finite ({v.reason})", v.witness, v.reason)
        res = approx_mod.approx_pe(model, args.epsilon, args.bias, args.window_mode, args.max_cells)
        vals = {"lower": R(res.lower), "upper": R(res.upper), "epsilon": R(res.epsilon),
                "bias": R(args.bias)}
        if "window" in res.trace:
            vals["window"] = _plan_json(res.trace, R)
        sched, smodel = res.scheduler, res.model
    else:
        value, tr = approx_mod.approx_ce(model, args.epsilon, args.window_mode, args.max_cells)
        vals = {"value": R(value), "epsilon": R(args.epsilon), "errorBound": R(3 * args.epsilon),
                "A0": R(tr.A0), "B0": R(tr.B0), "p": R(tr.p), "iterations": len(tr.steps), "stop": tr.stop,
                "steps": [{"A": R(a), "B": R(b), "theta": R(t), "E": R(e)} for a, b, t, e in tr.steps]}
        sched = smodel = None
    if args.emit_scheduler:
        if sched is None:
            raise UsageError("--emit-scheduler is only available with --mode pe")
        doc = sched.to_json(smodel)
        Path(args.emit_scheduler).write_text(json.dumps(doc, indent=1) + "\n")
        Path(args.emit_scheduler).with_suffix(".mdpw").write_text(serialize_mdp(smodel))
        vals["schedulerFile"] = args.emit_scheduler
    return {"verdicts": _verdict_json(v), "values": vals}


def _bounds_json(rep, R) -> dict:
    return {"W": rep.W, "delta": R(rep.delta), "stateCount": rep.state_count,
            "perMec": [{"mec": k, "t": R(sp.t), "u": {str(s): R(x) for s, x in sorted(sp.u.items())},
                        "spread": R(sp.spread), "method": sp.method, "c": R(tc.c), "lambda": R(tc.lam)}
                       for k, sp, tc in rep.per_mec],
           "cM": R(rep.cM), "lambdaM": R(rep.lambdaM), "peUb": R(rep.peUb), "ceUb": R(rep.ceUb),
           "qPerState": {str(s): R(x) for s, x in sorted(rep.q_per_state.items()) if x is not None},
           "q": R(rep.q), "D": R(rep.D), "k": rep.k, "rPlus": rep.rPlus, "rMinus": rep.rMinus,
           "epsilon": R(rep.epsilon)}


def cmd_bounds(args, model, R):
    v = classify_finiteness(model)
    if not v.pe_finite:
        raise InfiniteValueError(f"partial expectation is not finite ({v.reason})", v.witness, v.reason)
    prep = prepare(model)
    m = prep.model
    rep = compute_bounds(m, args.epsilon)
    out = _bounds_json(rep, R)
    # state indices in the report refer to the prepared model; name them
    for key in ("qPerState",):
        out[key] = {m.states[int(s)]: x for s, x in out[key].items()}
    for mec in out["perMec"]:
        mec["u"] = {m.states[int(s)]: x for s, x in mec["u"].items()}
    out["ceUb"] = None
    if v.ce_finite:
        pm = prepare(model, posmin=True).model
        out["ceUb"] = R(compute_bounds(pm, args.epsilon).ceUb)
    cert = tail_certificate(m, args.epsilon, pe_ub_cap=float(rep.peUb))
    out["tightTail"] = None if cert is None else {
        "beta": R(cert.beta), "ratio": R(cert.ratio), "peUb": R(cert.pe_ub), "rPlus": cert.r_plus(rep.D, args.epsilon)}
    return {"verdicts": _verdict_json(v), "values": out}


def cmd_transform(args, model, R):
    if args.collapse:
        out, trace = collapse_to_fail(model)
    elif args.spider:
        m, _ = collapse_to_fail(model)
        div = classify_finiteness(model)
        if not div.pe_finite:
            raise InfiniteValueError("weight-divergent end component", div.witness, div.reason)
        out, trace = spider_transform(m)
    else:
        m, t0 = collapse_to_fail(model)
        if t0.goal_unreachable:
            raise InfiniteValueError("goal unreachable: no positive-probability scheduler", None, "goalUnreachable")
        try:
            out, trace = posmin_transform(m)
        except CriticalSchedulerError as e:
            raise InfiniteValueError(str(e), e.witness, e.reason)
    Path(args.out).write_text(serialize_mdp(out))
    return {"verdicts": {"kind": trace.kind, "goalUnreachable": trace.goal_unreachable},
            "values": {"out": args.out, "states": len(out.states), "stateMapping": trace.state_mapping,
                       "steps": trace.steps}}


def cmd_oracle(args, model, R):
    v = classify_finiteness(model)
    if not v.pe_finite:
        raise InfiniteValueError(f"partial expectation is not finite ({v.reason})", v.witness, v.reason)
    res = oracle_pe(model, args.window, args.bias)
    vals = {"best": R(res.best), "window": [-args.window, args.window], "enumerated": res.enumerated,
            "method": res.method}
    if args.samples:
        est = simulate(res.model, res.arg_best, args.samples, args.horizon, args.seed)
        vals["simulation"] = {"mean": est.mean, "stderr": est.stderr, "samples": est.samples,
                              "horizon": est.horizon, "seed": est.seed, "generator": "numpy PCG64",
                              "truncated": est.truncated}
    return {"verdicts": _verdict_json(v), "values": vals}


COMMANDS = {"check": cmd_check, "exact": cmd_exact, "approx": cmd_approx, "bounds": cmd_bounds,
            "transform": cmd_transform, "oracle": cmd_oracle}


# ------------------------------------------------------------------ rendering

def _render_text(report: dict, out) -> None:
    def walk(prefix, obj):
        if isinstance(obj, dict) and set(obj) == {"exact", "decimal"}:
            out.write(f"{prefix}: {obj['decimal']} ({obj['exact']})\n")
        elif isinstance(obj, dict):
            for k, v in obj.items():
                walk(f"{prefix}.{k}" if prefix else k, v)
        elif isinstance(obj, list) and obj and isinstance(obj[0], dict):
            for i, v in enumerate(obj):
                walk(f"{prefix}[{i}]", v)
        else:
            out.write(f"{prefix}: {obj}\n")
    walk("", report)


def run(argv, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        stderr.write(f"mdpx: usage error: {e}\n")
        return EXIT_USAGE
    t0 = time.perf_counter()

    def R(q):
        return rational_json(q, args.digits)

    try:
        try:
            data = Path(args.file).read_bytes()
        except OSError as e:
            raise ParseError(f"cannot read {args.file}: {e.strerror}")
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError(f"{args.file} is not valid UTF-8")
        model = parse_mdp(text, internal=args.internal)
        t_parse = time.perf_counter()
        body = COMMANDS[args.command](args, model, R)
    except UsageError as e:
        stderr.write(f"mdpx: usage error: {e}\n")
        return EXIT_USAGE
    except PreconditionError as e:
        stderr.write(f"mdpx: {e}\n")
        return EXIT_USAGE
    except ParseError as e:
        stderr.write(f"mdpx: {args.file}: {e}\n")
        return EXIT_PARSE
    except InfiniteValueError as e:
        stderr.write(f"mdpx: infinite value ({e.reason}): {e}\n")
        report = {"query": _query(args), "input_digest": "sha256:" + hashlib.sha256(data).hexdigest(),
                  "verdicts": {"infinite": True, "reason": e.reason, "witness": e.witness}}
        _emit(args, report, stdout)
        return EXIT_INFINITE
    except ResourceLimitError as e:
        stderr.write(f"mdpx: resource limit: {e}\n")
        return EXIT_RESOURCE
    report = {"query": _query(args),
              "input_digest": "sha256:" + hashlib.sha256(data).hexdigest(),
              "verdicts": body["verdicts"], "values": body["values"]}
    if not args.deterministic:
        t1 = time.perf_counter()
        report["timings"] = {"parse_s": round(t_parse - t0, 6), "solve_s": round(t1 - t_parse, 6),
                             "total_s": round(t1 - t0, 6)}
    _emit(args, report, stdout)
    return EXIT_OK


def _query(args) -> str:
    return args.command + (f":{args.mode}" if hasattr(args, "mode") else "")


def _emit(args, report, stdout):
    if args.json:
        stdout.write(json.dumps(report, indent=2, default=_json_default) + "\n")
    else:
        _render_text(report, stdout)


def _json_default(obj):
    if isinstance(obj, Fraction):
        return format_rational(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
