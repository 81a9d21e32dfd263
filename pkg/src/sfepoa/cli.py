"""Command-line front end.

Subcommands::

    analyze           PoA, both bounds, per-generator caps, residuals, congested lines
    bound             bounds only, plus the effective flow limit table
    tightness         worst-case sweep on a weakly-cyclic network
    congestion-sweep  PoA and bounds while uniformly scaling flow limits
    verify            independent checks of one case, as a pass/fail table
    convert           MATPOWER case to canonical JSON

Exit status is 0 on success, 2 for invalid input or violated modelling
assumptions and 3 when a solver or certificate fails.  Errors are also
written to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import oracle
from .congestion import SWEEP_COLUMNS, CongestionSweepConfig, congested_lines, congestion_sweep
from .dispatch import modified_costs
from .errors import CertificationError, SfepoaError, SolverError
from .io import dump_market, load_network, market_from_dict, parse_matpower
from .network import Market, Network
from .poa import default_partitions, max_feasible_supply, network_independent_bound, poa_upper_bound, price_of_anarchy
from .powerflow import shift_factors
from .synthetic import synthetic_case
from .tightness import SWEEP_HEADER, tightness_gap
from .topology import effective_flow_limits
from .validation import validate_market

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3
ANALYZE_COLUMNS = ("poa", "bound_thm1", "bound_indep", "argmax_gen", "cost_opt", "cost_eq",
                   "kkt_residual_opt", "kkt_residual_eq", "congested_lines")
COMPONENT_COLUMNS = ("bus", "capacity", "residual_demand", "network", "cap", "indep_cap")
LIMIT_COLUMNS = ("node", "neighbor", "f", "f_hat", "partition_part", "cycle")
VERIFY_COLUMNS = ("check", "status", "value", "detail")


class UsageError(SfepoaError, ValueError):
    pass


# ------------------------------------------------------------------ input

def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _parse_pair(text: str | None):
    if text is None:
        return None
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--default-quadratic expects 'a,b', got {text!r}") from None
    return a, b


def _format_of(path: str, fmt: str | None) -> str:
    if fmt:
        return fmt
    return "matpower" if path.endswith(".m") else "json"


def load_case(path: str, fmt: str | None = None, default_quadratic=None, validate: bool = True) -> Market:
    """Read a MATPOWER or canonical JSON case; validates unless told not to."""
    text = _read(path)
    if _format_of(path, fmt) == "matpower":
        _, m = parse_matpower(text, default_quadratic)
        if validate:
            validate_market(m).raise_if_failed()
        return m
    return load_network(text, validate=validate)


def load_topology(path: str, fmt: str | None = None) -> Network:
    """Network of a case file; a JSON document with only buses and lines is accepted."""
    text = _read(path)
    if _format_of(path, fmt) == "matpower":
        net, _ = parse_matpower(text, default_quadratic=(0.0, 1.0))
        return net
    doc = json.loads(text)
    doc.setdefault("generators", {})
    return market_from_dict(doc).network


# ------------------------------------------------------------------ output

def _fmt(x):
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return x


def _csv(columns, rows) -> str:
    buf = _io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    for r in rows:
        wr.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def _dumps(doc) -> str:
    return json.dumps(_jsonable(doc), indent=2) + "\n"


# ------------------------------------------------------------------ commands

def _line_name(m: Market, l: int) -> str:
    ln = m.network.lines[l]
    return f"{ln.from_bus}-{ln.to_bus}"


def run_analyze(args) -> int:
    m = load_case(args.input, args.format, _parse_pair(args.default_quadratic))
    sf = shift_factors(m, args.slack)
    rep = price_of_anarchy(m, sf, tol=args.tol)
    cong = [_line_name(m, l) for l in congested_lines(m, rep.equilibrium.flows, args.congestion_threshold)]
    if args.output_format == "json":
        doc = rep.to_dict()
        doc["congested_lines"] = cong
        _emit(_dumps(doc), args.output)
    else:
        row = (rep.poa, rep.bound_thm1, rep.bound_network_independent, rep.argmax_gen, rep.cost_opt,
               rep.cost_eq, rep.optimum.residual, rep.equilibrium.residual, ";".join(cong))
        _emit(_csv(ANALYZE_COLUMNS, [row]), args.output)
    return EXIT_OK


def _limit_rows(m: Market) -> list:
    parts = default_partitions(m)
    f = m.network.limits()
    rows = []
    for n in m.gen_buses:
        part = parts[n]
        el = effective_flow_limits(m.network, part, f)
        for k, group in enumerate(part.parts):
            for j in group:
                l = m.network.line_index(n, j)
                cyc = str(part.assignment[group]) if len(group) == 2 else ""
                rows.append((n, j, float(f[l]), float(el.limits[j]), k, cyc))
    return rows


def run_bound(args) -> int:
    m = load_case(args.input, args.format, _parse_pair(args.default_quadratic))
    b1 = poa_upper_bound(m)
    b0 = network_independent_bound(m)
    rows = [(c.bus, c.capacity, c.residual_demand, c.network, c.value, c.independent_value) for c in b1.components]
    if args.limits_output:
        Path(args.limits_output).write_text(_csv(LIMIT_COLUMNS, _limit_rows(m)))
    if args.output_format == "json":
        doc = {"bound_thm1": b1.value, "bound_indep": b0.value, "argmax_gen": b1.argmax,
               "components": [dict(zip(COMPONENT_COLUMNS, r)) for r in rows]}
        _emit(_dumps(doc), args.output)
    else:
        _emit(_csv(COMPONENT_COLUMNS, rows), args.output)
    return EXIT_OK


def run_tightness(args) -> int:
    net = load_topology(args.input, args.format)
    res = tightness_gap(net, args.eps, D=args.demand, numeric=not args.analytic_only, tol=args.tol)
    rows = [(r.step, r.t, r.d1_hat, r.delta, r.alpha, r.poa_analytic, r.poa_numeric, r.bound, r.gap)
            for r in res.rows]
    _emit(_csv(SWEEP_HEADER, rows), args.output)
    return EXIT_OK


def _targets(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"--targets expects comma-separated percentages, got {text!r}") from None


def run_congestion_sweep(args) -> int:
    if args.synthetic:
        m = synthetic_case(args.synthetic, args.seed)
    elif args.input:
        m = load_case(args.input, args.format, _parse_pair(args.default_quadratic))
    else:
        raise UsageError("congestion-sweep needs --input or --synthetic")
    cfg = CongestionSweepConfig(_targets(args.targets), args.threshold, args.scale_tol, solver_tol=args.tol)
    pts = congestion_sweep(m, cfg)
    _emit(_csv(SWEEP_COLUMNS, [p.as_row() for p in pts]), args.output)
    return EXIT_OK


def verify_case(m: Market, tol: float = 1e-8) -> list:
    """Independent checks of one case as ``(check, passed, value, detail)`` rows."""
    rows = []
    sf = shift_factors(m)
    rep = price_of_anarchy(m, sf, tol=tol)
    rows.append(("kkt-optimum", rep.optimum.residual <= tol, rep.optimum.residual, ""))
    rows.append(("kkt-equilibrium", rep.equilibrium.residual <= tol, rep.equilibrium.residual, ""))
    ok = 1.0 - 1e-9 <= rep.poa <= rep.bound_thm1 + 1e-9 <= rep.bound_network_independent + 2e-9
    rows.append(("bound-ordering", ok, rep.poa,
                 f"poa={rep.poa:.10g} bound={rep.bound_thm1:.10g} indep={rep.bound_network_independent:.10g}"))
    worst = -math.inf
    for c in rep.components:
        val, _ = max_feasible_supply(m, c.bus, sf)
        worst = max(worst, val - c.value)
    rows.append(("supply-cap-relaxation", worst <= 1e-9, worst, "max feasible supply minus analytic cap"))
    w = oracle.recover_bids(rep.equilibrium, m, sf)
    br = oracle.best_response_check(w, m, sf, tol=1e-6)
    rows.append(("best-response", br.passed, br.max_improvement, "recovered bids, largest unilateral gain"))
    s_w = oracle.supply_from_bids(w, m.total_demand)
    dev = float(np.max(np.abs(s_w - rep.equilibrium.supply)))
    rows.append(("bids-reproduce-equilibrium", dev <= 1e-9, dev, ""))
    sfe = oracle.sfe_multipliers(w, rep.equilibrium.certificate, m)
    mm = oracle.multiplier_map_check(w, sfe, m, sf).max
    rows.append(("multiplier-map", mm <= 1e-7, mm, "modified-cost KKT residual of mapped multipliers"))
    if m.n_generators <= 3:
        bf_opt = oracle.brute_force_dispatch(m, sf=sf)
        gap = bf_opt.objective - rep.cost_opt
        rows.append(("brute-force-optimum", -1e-9 <= gap <= bf_opt.resolution, gap, "grid minus solver objective"))
        bf_eq = oracle.brute_force_dispatch(m, modified_costs(m), sf=sf)
        gap = bf_eq.objective - rep.equilibrium.objective
        rows.append(("brute-force-equilibrium", -1e-9 <= gap <= bf_eq.resolution, gap, ""))
    return rows


def run_verify(args) -> int:
    m = load_case(args.input, args.format, _parse_pair(args.default_quadratic))
    rows = verify_case(m, args.tol)
    table = [(name, "PASS" if ok else "FAIL", value, detail) for name, ok, value, detail in rows]
    _emit(_csv(VERIFY_COLUMNS, table), args.output)
    return EXIT_OK if all(ok for _, ok, _, _ in rows) else EXIT_SOLVER


def run_convert(args) -> int:
    m = load_case(args.input, "matpower", _parse_pair(args.default_quadratic), validate=not args.no_validate)
    _emit(dump_market(m) + "\n", args.output)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _tol(text: str) -> float:
    v = float(text)
    if not 0 < v <= 1e-2:
        raise argparse.ArgumentTypeError("tolerance must lie in (0, 1e-2]")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sfepoa", description=__doc__.split("\n\n")[0],
                                allow_abbrev=False)
    sub = p.add_subparsers(dest="command", required=True)

    def case_args(sp, required=True):
        sp.add_argument("--input", required=required, help="case file (.m MATPOWER or canonical .json)")
        sp.add_argument("--format", choices=("matpower", "json"), help="override format detection")
        sp.add_argument("--default-quadratic", metavar="A,B",
                        help="per-unit cost a*s^2 + b*s for cases without gencost")
        sp.add_argument("--output", help="write to this file instead of stdout")

    sp = sub.add_parser("analyze", help="PoA, bounds and residuals of one case", allow_abbrev=False)
    case_args(sp)
    sp.add_argument("--slack", type=int, help="slack bus (default: lowest bus id)")
    sp.add_argument("--tol", type=_tol, default=1e-8)
    sp.add_argument("--output-format", choices=("csv", "json"), default="csv")
    sp.add_argument("--congestion-threshold", type=float, default=1e-6)
    sp.set_defaults(func=run_analyze)

    sp = sub.add_parser("bound", help="analytic bounds without solving dispatch", allow_abbrev=False)
    case_args(sp)
    sp.add_argument("--output-format", choices=("csv", "json"), default="csv")
    sp.add_argument("--limits-output", help="also write the effective flow limit table here")
    sp.set_defaults(func=run_bound)

    sp = sub.add_parser("tightness", help="worst-case sweep on a weakly-cyclic network", allow_abbrev=False)
    sp.add_argument("--input", required=True, help="network or case file")
    sp.add_argument("--format", choices=("matpower", "json"))
    sp.add_argument("--eps", type=float, default=0.01, help="target gap between bound and PoA")
    sp.add_argument("--demand", type=float, help="total demand (default: number of buses)")
    sp.add_argument("--tol", type=_tol, default=1e-8)
    sp.add_argument("--analytic-only", action="store_true", help="skip the numerical cross-check")
    sp.add_argument("--output")
    sp.set_defaults(func=run_tightness)

    sp = sub.add_parser("congestion-sweep", help="bounds under uniformly scaled flow limits", allow_abbrev=False)
    case_args(sp, required=False)
    sp.add_argument("--synthetic", type=int, metavar="N", help="use the built-in synthetic N-bus case")
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--targets", default=",".join(str(x) for x in range(0, 95, 5)))
    sp.add_argument("--threshold", type=float, default=1e-6, help="relative slack counted as congested")
    sp.add_argument("--scale-tol", type=float, default=1e-6)
    sp.add_argument("--tol", type=_tol, default=1e-8)
    sp.set_defaults(func=run_congestion_sweep)

    sp = sub.add_parser("verify", help="independent checks of one case", allow_abbrev=False)
    case_args(sp)
    sp.add_argument("--tol", type=_tol, default=1e-8)
    sp.set_defaults(func=run_verify)

    sp = sub.add_parser("convert", help="MATPOWER case to canonical JSON", allow_abbrev=False)
    case_args(sp)
    sp.add_argument("--no-validate", action="store_true", help="skip the assumption checks")
    sp.set_defaults(func=run_convert)
    return p


def _fail(exc: Exception, code: int) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    failures = getattr(exc, "failures", ())
    if failures:
        doc["failures"] = [{"check": f.name, "detail": f.detail} for f in failures]
    residual = getattr(exc, "residual", None)
    if residual is not None:
        doc["residual"] = residual
    sys.stderr.write(json.dumps(_jsonable(doc)) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SolverError, CertificationError) as exc:
        return _fail(exc, EXIT_SOLVER)
    except (SfepoaError, ValueError, KeyError, json.JSONDecodeError) as exc:
        return _fail(exc, EXIT_INVALID)


if __name__ == "__main__":
    sys.exit(main())
