"""Command-line front end.

Every command writes JSON (or CSV for grids) to stdout.  Failures print a
JSON object ``{"error": kind, "message": ...}`` to stderr and exit with
1 for invalid models or inputs, 2 when an enumeration cap is exceeded and
3 for I/O, parse and usage errors.
"""
from __future__ import annotations

import argparse
import csv
import io as _stdio
import json
import sys
from pathlib import Path

import numpy as np

from . import finance as fin
from . import io
from .errors import CapExceededError, MdpSenseError, ValidationError
from .inventory import build_inventory_mdm, builtin_spec, demand_direction, order_table
from .metrics import METRICS, d_hoelder
from .sensitivity import fd_quotient, hadamard_optimal
from .solve import (
    bellman,
    count_optimal_strategies,
    enumerate_optimal_strategies,
    reward_iteration,
)

EXIT_VALIDATION, EXIT_CAP, EXIT_IO = 1, 2, 3
DEFAULT_EPS_GRID = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
BUILTIN_BSM = {"mu": 0.05, "sigma": 0.2, "x0": 1.0, "N": 12}
BUILTIN_BSM_ALPHA, BUILTIN_BSM_NU = 0.5, 0.04
BUILTIN_CRR = {"p": 0.6, "u": 1.5, "d": 0.5, "r": 1.0, "N": 2, "x0": 1.0}
BUILTIN_CRR_ALPHA = 0.5


class UsageError(MdpSenseError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse would exit with 2, which is reserved for cap overruns
        raise UsageError(message)


def _csv_text(header, rows) -> str:
    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _load_model(args):
    if getattr(args, "builtin_paper", False):
        spec = builtin_spec()
        return build_inventory_mdm(spec), spec
    if not args.model:
        raise UsageError("a model file or --builtin-paper is required")
    return io.load_model_document(io.read_json(args.model))


def _strategy_docs(strategies):
    return [io.strategy_to_dict(s)["rules"] for s in strategies]


def _labels(mdm):
    return [io.label_to_json(s) for s in mdm.states]


# -- commands -------------------------------------------------------------------


def cmd_validate(args) -> int:
    mdm, _ = _load_model(args)
    report = mdm.report
    doc = {
        "valid": report.ok,
        "issues": [{"kind": i.kind, "location": i.location, "detail": i.detail} for i in report],
    }
    sys.stdout.write(io.dumps(doc))
    return 0 if report.ok else EXIT_VALIDATION


def cmd_solve(args) -> int:
    mdm, _ = _load_model(args)
    V, maxi = bellman(mdm)
    doc = {"states": _labels(mdm), **io.numeric_fields("values", V)}
    doc["maximizers"] = [[[io.label_to_json(a) for a in acts] for acts in per_n] for per_n in maxi]
    if not args.no_strategies:
        found = enumerate_optimal_strategies(mdm, args.mode, prefilter=args.prefilter)
        doc["mode"] = found.kind.value
        doc["prefiltered"] = found.prefiltered
        doc["n_optimal_strategies"] = len(found)
        doc["optimal_strategies"] = _strategy_docs(found)
    sys.stdout.write(io.dumps(doc))
    return 0


def cmd_eval(args) -> int:
    mdm, _ = _load_model(args)
    strategy = io.strategy_from_dict(io.read_json(args.strategy))
    V = reward_iteration(mdm, strategy)
    sys.stdout.write(io.dumps({"states": _labels(mdm), **io.numeric_fields("values", V)}))
    return 0


def _direction(args, mdm, spec):
    return io.direction_from_dict(io.read_json(args.direction), mdm=mdm, inventory=spec)


def _strategy_set(args, mdm):
    return enumerate_optimal_strategies(mdm, args.strategy_set, prefilter=args.prefilter)


def cmd_sense(args) -> int:
    mdm, spec = _load_model(args)
    Q = _direction(args, mdm, spec)
    strategies = _strategy_set(args, mdm)
    res = hadamard_optimal(mdm, Q, strategies, breakdown=args.breakdown)
    doc = {
        "states": _labels(mdm),
        **io.numeric_fields("derivative", res.derivative),
        "strategy_set": res.kind.value,
        "prefiltered": strategies.prefiltered,
        "n_strategies": len(strategies),
        "achieving": _strategy_docs(res.achieving),
    }
    if args.breakdown:
        doc["breakdown"] = [
            {"strategy": io.strategy_to_dict(s)["rules"], **io.numeric_fields("derivative", d)}
            for s, d in res.breakdown.items()
        ]
    sys.stdout.write(io.dumps(doc))
    return 0


def _eps_grid(text):
    try:
        grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse eps grid {text!r}") from None
    if not grid or any(not 0.0 < e <= 1.0 for e in grid):
        raise UsageError("eps grid values must lie in (0, 1]")
    return grid


def cmd_fd(args) -> int:
    mdm, spec = _load_model(args)
    Q = _direction(args, mdm, spec)
    grid = _eps_grid(args.eps_grid)
    strategies = _strategy_set(args, mdm)
    deriv = hadamard_optimal(mdm, Q, strategies, breakdown=False).derivative
    states = range(mdm.n_states) if args.x0 is None else [args.x0]
    if args.x0 is not None and not 0 <= args.x0 < mdm.n_states:
        raise UsageError(f"x0 must be a state index in 0..{mdm.n_states - 1}")
    rows = []
    for eps in grid:
        quot = fd_quotient(mdm, Q, eps)
        for i in states:
            rows.append((i, eps, float(quot[i]), float(abs(quot[i] - deriv[i]))))
    sys.stdout.write(_csv_text(("x0", "eps", "quotient", "error"), rows))
    return 0


def cmd_metric(args) -> int:
    a = io.measure_from_dict(io.read_json(args.measure_a))
    b = io.measure_from_dict(io.read_json(args.measure_b))
    if not hasattr(a, "points") or not hasattr(b, "points"):
        raise UsageError("metrics are defined for discrete measures")
    if args.metric == "hoelder":
        value = d_hoelder(a, b, args.alpha)
    else:
        value = METRICS[args.metric](a, b)
    doc = {"metric": args.metric, **io.numeric_fields("value", value)}
    if args.metric == "hoelder":
        doc["alpha"] = args.alpha
    sys.stdout.write(io.dumps(doc))
    return 0


def cmd_inventory(args) -> int:
    if args.builtin_paper:
        spec = builtin_spec()
    elif args.spec:
        spec = io.inventory_spec_from_dict(io.read_json(args.spec))
    else:
        raise UsageError("an inventory spec file or --builtin-paper is required")
    mdm = build_inventory_mdm(spec)
    K = spec.truncation
    V, _ = bellman(mdm)
    strategies = enumerate_optimal_strategies(mdm, "exact", prefilter=True)
    # initial states carry no served demand
    starts = [y * (K + 1) for y in range(K + 1)]
    doc = {"initial_levels": list(range(K + 1)), **io.numeric_fields("V0", V[0, starts])}
    derivs = {}
    for j in args.demand:
        res = hadamard_optimal(mdm, demand_direction(spec, j), strategies, breakdown=False)
        derivs[j] = res.derivative[starts]
        doc.update(io.numeric_fields(f"derivative_q{j}", derivs[j]))
    doc["n_optimal_strategies"] = len(strategies)
    if args.count:
        doc["n_optimal_strategies_all_states"] = count_optimal_strategies(mdm)
    table = order_table(mdm, strategies.strategies[0])
    doc["strategy"] = table.tolist()
    sys.stdout.write(io.dumps(doc))
    if args.csv_dir:
        out = Path(args.csv_dir)
        out.mkdir(parents=True, exist_ok=True)
        header = ("y0", "V0") + tuple(f"derivative_q{j}" for j in args.demand)
        rows = [(y, float(V[0, s]), *(float(derivs[j][y]) for j in args.demand)) for y, s in enumerate(starts)]
        (out / "values.csv").write_text(_csv_text(header, rows))
        rows = [(n, y, z, int(table[n, y, z])) for n in range(mdm.horizon) for y in range(K + 1) for z in range(K + 1)]
        (out / "strategy.csv").write_text(_csv_text(("n", "y", "z", "order"), rows))
    return 0


def _finance_model(args):
    sources = sum(bool(x) for x in (args.spec, args.builtin_bsm, args.builtin_crr))
    if sources != 1:
        raise UsageError("give exactly one of a spec file, --builtin-bsm or --builtin-crr")
    if args.spec:
        doc = io.read_json(args.spec)
        if isinstance(doc, dict):
            doc = dict(doc)
            if args.alpha is not None:
                doc["alpha"] = args.alpha
            if args.nu is not None and doc.get("kind") == "bsm":
                doc["nu"] = args.nu
        return io.finance_model_from_dict(doc)
    alpha = args.alpha
    if args.builtin_bsm:
        alpha = BUILTIN_BSM_ALPHA if alpha is None else alpha
        nu = BUILTIN_BSM_NU if args.nu is None else args.nu
        b = BUILTIN_BSM
        return fin.FinanceModel.bsm(b["mu"], b["sigma"], nu, alpha, b["N"], b["x0"])
    c = BUILTIN_CRR
    alpha = BUILTIN_CRR_ALPHA if alpha is None else alpha
    return fin.FinanceModel.crr(c["p"], c["u"], c["d"], c["r"], alpha, c["N"], c["x0"])


def _sweep(args, model) -> int:
    doc = io.read_json(args.sweep)
    if not isinstance(doc, dict):
        raise io.ParseError("sweep spec must be a JSON object")
    if "sweep" in doc:
        io._check_keys(doc, ("model", "sweep"), "sweep document")
        model_spec, sweep_spec = doc.get("model"), doc["sweep"]
    else:
        model_spec, sweep_spec = None, doc
    if model_spec is None:
        par = model.params
        if not isinstance(par, fin.BsmParams):
            raise UsageError("sweeps run on a BSM market; use --builtin-bsm or a bsm spec")
        model_spec = {"mu": par.mu, "sigma": par.sigma, "x0": model.x0, "N": model.horizon}
    try:
        rows = fin.figure_sweeps(model_spec, sweep_spec)
    except (KeyError, TypeError) as exc:
        raise io.ParseError(f"malformed sweep spec: {exc}") from None
    sys.stdout.write(_csv_text(fin.SWEEP_HEADER, rows))
    return 0


def cmd_finance(args) -> int:
    model = _finance_model(args)
    if args.sweep:
        return _sweep(args, model)
    if args.direction:
        Q = io.direction_from_dict(io.read_json(args.direction), finance=model)
    else:
        Q = fin.jump_direction(model, args.delta, args.periods)
    gammas = fin.optimal_gammas(model, method=args.method)
    u0 = fin.u_alpha(model.x0, model.alpha)
    value = fin.value_product(model, gammas)
    deriv = fin.frechet_product(model, Q, gammas) * u0
    doc = {
        "horizon": model.horizon,
        "alpha": model.alpha,
        "x0": model.x0,
        "method": args.method,
        **io.numeric_fields("gamma", gammas),
        **io.numeric_fields("value", value),
        **io.numeric_fields("derivative", deriv),
        "assumption_flags": model.assumption_flags(),
    }
    if isinstance(model.params, fin.BsmParams):
        p = model.params
        doc["mu"], doc["sigma"], doc["nu"] = p.mu, p.sigma, p.nu
        levels, lower, upper = fin.quantile_table(p.mu, p.sigma, model.horizon)
        doc["quantile_levels"] = list(levels)
        doc.update(io.numeric_fields("quantile_lower", lower))
        doc.update(io.numeric_fields("quantile_upper", upper))
    sys.stdout.write(io.dumps(doc))
    return 0


# -- parser -------------------------------------------------------------------------


def _add_model(p, builtin=True):
    p.add_argument("model", nargs="?", help="model JSON (finite model or inventory spec)")
    if builtin:
        p.add_argument("--builtin-paper", action="store_true", help="use the built-in inventory example")


def _add_strategy_set(p):
    p.add_argument("--strategy-set", choices=("exact", "maximizer"), default="exact")
    p.add_argument("--no-prefilter", dest="prefilter", action="store_false",
                   help="test every admissible strategy for membership in the exact set")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mdpsense", description="Sensitivity of finite-horizon Markov decision models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a model document")
    _add_model(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="optimal values, maximizers and optimal strategies")
    _add_model(p)
    p.add_argument("--mode", choices=("exact", "maximizer"), default="exact")
    p.add_argument("--prefilter", action="store_true",
                   help="only test maximizer-built strategies in exact mode")
    p.add_argument("--no-strategies", action="store_true", help="skip strategy enumeration")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="value tables of a fixed strategy")
    _add_model(p)
    p.add_argument("strategy")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sense", help="derivative of the optimal value in a direction")
    _add_model(p)
    p.add_argument("direction")
    _add_strategy_set(p)
    p.add_argument("--breakdown", action="store_true", help="list the derivative of every strategy")
    p.set_defaults(func=cmd_sense)

    p = sub.add_parser("fd", help="finite-difference quotients as CSV")
    _add_model(p)
    p.add_argument("direction")
    p.add_argument("--eps-grid", default=",".join(repr(e) for e in DEFAULT_EPS_GRID))
    p.add_argument("--x0", type=int, default=None, help="initial state index (default: all)")
    _add_strategy_set(p)
    p.set_defaults(func=cmd_fd)

    p = sub.add_parser("metric", help="distance between two discrete measures")
    p.add_argument("measure_a")
    p.add_argument("measure_b")
    p.add_argument("--metric", choices=("tv", "kolm", "wass1", "hoelder"), default="tv")
    p.add_argument("--alpha", type=float, default=1.0, help="Hoelder exponent in (0, 1]")
    p.set_defaults(func=cmd_metric)

    p = sub.add_parser("inventory", help="inventory example: values, derivatives, strategy")
    p.add_argument("spec", nargs="?")
    p.add_argument("--builtin-paper", action="store_true")
    p.add_argument("--demand", type=int, nargs="+", default=[0, 4], help="demand values j for directions")
    p.add_argument("--count", action="store_true", help="also count optimal strategies over all states")
    p.add_argument("--csv-dir", help="write values.csv and strategy.csv here")
    p.set_defaults(func=cmd_inventory)

    p = sub.add_parser("finance", help="terminal-wealth example")
    p.add_argument("spec", nargs="?")
    p.add_argument("--builtin-bsm", action="store_true")
    p.add_argument("--builtin-crr", action="store_true")
    p.add_argument("--alpha", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--delta", type=float, default=0.5, help="jump size of the default direction")
    p.add_argument("--periods", type=int, nargs="+", default=[0], help="jump periods of the default direction")
    p.add_argument("--direction", help="direction JSON instead of --delta/--periods")
    p.add_argument("--method", choices=("auto", "numeric", "closed_form"), default="auto")
    p.add_argument("--sweep", help="sweep JSON; prints CSV rows instead of the summary")
    p.set_defaults(func=cmd_finance)
    return parser


def _fail(kind: str, message: str, code: int, **extra) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code, **extra}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        issues = [str(i) for i in exc.issues] if hasattr(exc, "issues") else []
        return _fail("validation", str(exc), EXIT_VALIDATION, issues=issues)
    except CapExceededError as exc:
        return _fail("cap_exceeded", str(exc), EXIT_CAP)
    except (UsageError, io.ParseError, OSError) as exc:
        return _fail("io", str(exc), EXIT_IO)
    except ValueError as exc:
        return _fail("validation", str(exc), EXIT_VALIDATION)


if __name__ == "__main__":
    sys.exit(main())
