"""Canonical JSON and MATPOWER case ingestion."""
from __future__ import annotations

import json
import logging
import math
import re
from typing import Any

from .costs import Linear, Quadratic, cost_from_dict
from .errors import InvalidLineError, ParseError, UnsupportedCostError
from .network import Generator, Line, Market, Network
from .validation import require_valid

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- JSON

def market_to_dict(m: Market) -> dict:
    return {
        "buses": list(m.network.buses),
        "lines": [
            {"from": ln.from_bus, "to": ln.to_bus, "b": ln.b, "f": None if ln.unlimited else ln.f}
            for ln in m.network.lines
        ],
        "loads": {str(b): v for b, v in m.loads.items()},
        "generators": {
            str(b): {"smin": g.smin, "smax": g.smax, "cost": g.cost.to_dict()}
            for b, g in m.generators.items()
        },
    }


def dump_market(m: Market) -> str:
    """Canonical JSON text (stable key order, unlimited limits as null)."""
    return json.dumps(market_to_dict(m), indent=2)


def _need(doc: dict, key: str, where: str):
    if key not in doc:
        raise ParseError(f"{where}: missing field {key!r}")
    return doc[key]


def _num(x, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ParseError(f"{where}: expected a number, got {x!r}")
    return float(x)


def market_from_dict(doc: Any) -> Market:
    if not isinstance(doc, dict):
        raise ParseError("market document must be a JSON object")
    buses = _need(doc, "buses", "document")
    if not isinstance(buses, list) or not all(isinstance(b, int) and not isinstance(b, bool) for b in buses):
        raise ParseError("'buses' must be a list of integer ids")
    lines = []
    for k, ln in enumerate(_need(doc, "lines", "document")):
        where = f"lines[{k}]"
        if not isinstance(ln, dict):
            raise ParseError(f"{where}: expected an object")
        f = ln.get("f")
        f = math.inf if f is None else _num(f, where + ".f")
        lines.append(Line(int(_need(ln, "from", where)), int(_need(ln, "to", where)),
                          _num(_need(ln, "b", where), where + ".b"), f))
    loads_doc = doc.get("loads", {})
    if not isinstance(loads_doc, dict):
        raise ParseError("'loads' must be an object mapping bus id to MW")
    loads = {int(b): _num(v, f"loads[{b}]") for b, v in loads_doc.items()}
    gens_doc = _need(doc, "generators", "document")
    if not isinstance(gens_doc, dict):
        raise ParseError("'generators' must be an object mapping bus id to generator data")
    gens = {}
    for b, g in gens_doc.items():
        where = f"generators[{b}]"
        if not isinstance(g, dict):
            raise ParseError(f"{where}: expected an object")
        gens[int(b)] = Generator(_num(_need(g, "smin", where), where + ".smin"),
                                 _num(_need(g, "smax", where), where + ".smax"),
                                 cost_from_dict(_need(g, "cost", where)))
    return Market(Network(tuple(buses), tuple(lines)), loads, gens)


def load_network(text_or_doc, validate: bool = True) -> Market:
    """Load a market from canonical JSON text or an already-decoded dict.

    With ``validate`` set, a market violating a modelling assumption raises
    ``ValidationError`` whose message names the failed checks.
    """
    if isinstance(text_or_doc, (str, bytes)):
        try:
            doc = json.loads(text_or_doc)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    else:
        doc = text_or_doc
    m = market_from_dict(doc)
    if validate:
        require_valid(m)
    return m


# ---------------------------------------------------------------- MATPOWER

def _strip_comments(text: str) -> list:
    return [ln.split("%", 1)[0] for ln in text.splitlines()]


def _parse_blocks(text: str) -> dict:
    """Map block name -> scalar or list of (line number, row values)."""
    lines = _strip_comments(text)
    blocks = {}
    k = 0
    while k < len(lines):
        m = re.match(r"\s*mpc\.(\w+)\s*=\s*(.*)$", lines[k])
        if not m:
            k += 1
            continue
        name, rest = m.group(1), m.group(2).strip()
        if not rest.startswith("["):
            val = rest.rstrip(";").strip()
            if val.startswith("'") or val.startswith('"'):
                blocks[name] = val.strip("'\"")
            else:
                try:
                    blocks[name] = float(val)
                except ValueError:
                    raise ParseError(f"cannot parse value of mpc.{name}: {val!r}", k + 1) from None
            k += 1
            continue
        rows = []
        body, start = rest[1:], k
        while True:
            done = "]" in body
            chunk = body.split("]", 1)[0]
            for piece in chunk.split(";"):
                piece = piece.strip().strip(",")
                if not piece:
                    continue
                try:
                    rows.append((k + 1, [float(v) for v in re.split(r"[\s,]+", piece) if v]))
                except ValueError:
                    raise ParseError(f"malformed row in mpc.{name}: {piece!r}", k + 1) from None
            if done:
                break
            k += 1
            if k >= len(lines):
                raise ParseError(f"unterminated matrix mpc.{name}", start + 1)
            body = lines[k]
        blocks[name] = rows
        k += 1
    return blocks


def _cols(row, need: int, name: str, lineno: int):
    if len(row) < need:
        raise ParseError(f"mpc.{name} row has {len(row)} columns, expected at least {need}", lineno)
    return row


def _gencost_to_cost(row, base: float, lineno: int):
    model = int(row[0])
    if model != 2:
        raise UnsupportedCostError(f"gencost model {model} is not supported (polynomial model 2 only)", lineno)
    ncoef = int(row[3])
    coefs = row[4:4 + ncoef]
    if len(coefs) != ncoef:
        raise ParseError(f"gencost row declares {ncoef} coefficients but has {len(coefs)}", lineno)
    if ncoef > 3:
        raise UnsupportedCostError(f"gencost polynomial degree {ncoef - 1} exceeds 2", lineno)
    padded = [0.0] * (3 - ncoef) + list(coefs)
    c2, c1, c0 = padded
    if c0 != 0:
        log.warning("line %d: dropping constant gencost term %g (costs must vanish at zero output)", lineno, c0)
    a, b = c2 * base * base, c1 * base
    try:
        if a == 0:
            return Linear(b)
        return Quadratic(a, b)
    except UnsupportedCostError as exc:
        raise UnsupportedCostError(str(exc), lineno) from None


def parse_matpower(text: str, default_quadratic: tuple | None = None):
    """Parse a MATPOWER case into ``(Network, Market)`` in per-unit.

    Loads come from PD, lines from (fbus, tbus) with ``B = 1/x`` and limit
    rateA (0 meaning unlimited), generators from PMAX/PMIN, and costs from
    polynomial gencost rows.  Quantities in MW are divided by baseMVA and cost
    coefficients rescaled so that costs are unchanged.  Out-of-service
    branches and generators are skipped.  ``default_quadratic = (a, b)``
    supplies per-unit costs when the case has no gencost block.
    """
    blocks = _parse_blocks(text)
    for name in ("baseMVA", "bus", "branch", "gen"):
        if name not in blocks:
            raise ParseError(f"case is missing mpc.{name}")
    base = blocks["baseMVA"]
    if not isinstance(base, float) or base <= 0:
        raise ParseError("mpc.baseMVA must be a positive number")

    buses, loads = [], {}
    for lineno, row in blocks["bus"]:
        _cols(row, 3, "bus", lineno)
        bid, btype, pd = int(row[0]), int(row[1]), row[2]
        if btype == 4:
            continue
        if pd < 0:
            raise ParseError(f"bus {bid} has negative demand {pd}; loads must be nonnegative", lineno)
        buses.append(bid)
        if pd:
            loads[bid] = pd / base
    live = set(buses)

    lines = []
    for lineno, row in blocks["branch"]:
        _cols(row, 6, "branch", lineno)
        if len(row) >= 11 and row[10] == 0:
            continue
        fb, tb, x, rate = int(row[0]), int(row[1]), row[3], row[5]
        if fb not in live or tb not in live:
            continue
        if x <= 0:
            raise InvalidLineError(f"branch {fb}-{tb} has nonpositive reactance {x}", lineno)
        lines.append(Line(fb, tb, 1.0 / x, math.inf if rate == 0 else rate / base))

    gen_rows = blocks["gen"]
    cost_rows = blocks.get("gencost")
    if cost_rows is None and default_quadratic is None:
        raise UnsupportedCostError("case has no mpc.gencost block; supply default quadratic costs explicitly")
    gens = {}
    for k, (lineno, row) in enumerate(gen_rows):
        _cols(row, 10, "gen", lineno)
        if row[7] <= 0:
            continue
        bus = int(row[0])
        if bus in gens:
            raise ParseError(f"more than one generator at bus {bus}; co-located generators are not supported", lineno)
        if cost_rows is not None:
            if k >= len(cost_rows):
                raise ParseError(f"no gencost row for generator {k + 1}", lineno)
            clineno, crow = cost_rows[k]
            _cols(crow, 4, "gencost", clineno)
            cost = _gencost_to_cost(crow, base, clineno)
        else:
            a, b = default_quadratic
            cost = Quadratic(float(a), float(b)) if a else Linear(float(b))
        pmax, pmin = row[8], row[9]
        gens[bus] = Generator(max(pmin, 0.0) / base, pmax / base, cost)

    net = Network(tuple(buses), tuple(lines))
    return net, Market(net, loads, gens)
