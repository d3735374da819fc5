"""Parser for the subset of Liberty needed to describe cell function and NLDM tables.

Two passes: a generic tokenizer/tree builder that understands Liberty's group and
attribute syntax, then a semantic pass that picks out cells, pins, timing and
internal-power groups and resolves lookup-table templates.
"""

from __future__ import annotations

import bisect
import enum
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from . import boolfn


class LibertyError(Exception):
    pass


class LibertySyntaxError(LibertyError):
    def __init__(self, line: int, expected: str, got: str = ""):
        self.line = line
        self.expected = expected
        msg = f"line {line}: expected {expected}"
        if got:
            msg += f", got {got!r}"
        super().__init__(msg)


class LibertySemanticError(LibertyError):
    pass


class NamingError(LibertyError):
    pass


class Property(enum.Enum):
    RISE_DELAY = "rise_delay"
    FALL_DELAY = "fall_delay"
    RISE_TRANSITION = "rise_transition"
    FALL_TRANSITION = "fall_transition"
    RISE_POWER = "rise_power"
    FALL_POWER = "fall_power"

    @property
    def index(self) -> int:
        return PROPERTIES.index(self)


PROPERTIES = tuple(Property)

_TIMING_TABLES = {
    "cell_rise": Property.RISE_DELAY,
    "cell_fall": Property.FALL_DELAY,
    "rise_transition": Property.RISE_TRANSITION,
    "fall_transition": Property.FALL_TRANSITION,
}
_POWER_TABLES = {"rise_power": Property.RISE_POWER, "fall_power": Property.FALL_POWER}

_SLEW_VARS = {"input_net_transition", "input_transition_time", "related_pin_transition"}
_LOAD_VARS = {"total_output_net_capacitance"}

# timing_type values that describe a propagation arc; constraint arcs are skipped
_ARC_TIMING_TYPES = {None, "combinational", "combinational_rise", "combinational_fall",
                     "rising_edge", "falling_edge"}

DEFAULT_TYPE_RULES = (
    r"_ASAP7_[0-9A-Za-z]+_[A-Za-z]+$",
    r"x(?:p\d+|\d+)[a-z]*$",
)


# --------------------------------------------------------------------------
# data model


@dataclass(frozen=True, eq=False)
class LookupTable2D:
    index1: np.ndarray
    index2: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for name, idx in (("index1", self.index1), ("index2", self.index2)):
            if idx.ndim != 1 or len(idx) == 0:
                raise LibertySemanticError(f"{name} must be a nonempty 1-D list")
            if np.any(np.diff(idx) <= 0):
                raise LibertySemanticError(f"{name} breakpoints are not strictly ascending: {idx}")
        if self.values.shape != (len(self.index1), len(self.index2)):
            raise LibertySemanticError(
                f"values shape {self.values.shape} does not match index lengths "
                f"({len(self.index1)}, {len(self.index2)})"
            )
        if not np.all(np.isfinite(self.values)):
            raise LibertySemanticError("table contains non-finite values")

    def __eq__(self, other):
        if not isinstance(other, LookupTable2D):
            return NotImplemented
        return (np.array_equal(self.index1, other.index1)
                and np.array_equal(self.index2, other.index2)
                and np.array_equal(self.values, other.values))

    def scaled(self, factor: float) -> "LookupTable2D":
        return LookupTable2D(self.index1, self.index2, self.values * factor)

    def to_dict(self) -> dict:
        return {"index1": self.index1.tolist(), "index2": self.index2.tolist(),
                "values": self.values.tolist()}


@dataclass(eq=True)
class TimingArcTables:
    output_pin: str
    related_pin: str
    tables: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return all(p in self.tables for p in PROPERTIES)

    @property
    def key(self) -> tuple:
        return (self.output_pin, self.related_pin)


@dataclass(eq=True)
class Cell:
    name: str
    cell_type: str
    input_pins: list
    output_pins: list  # (pin name, expression or None)
    arcs: list = field(default_factory=list)
    pin_capacitance: dict = field(default_factory=dict)
    sequential: bool = False

    @property
    def single_output(self) -> bool:
        return len(self.output_pins) == 1

    @property
    def combinational(self) -> bool:
        return not self.sequential and all(e is not None for _, e in self.output_pins)

    def function(self, pin: Optional[str] = None):
        if pin is None:
            return self.output_pins[0][1]
        for name, expr in self.output_pins:
            if name == pin:
                return expr
        raise KeyError(pin)

    def arc(self, output_pin: str, related_pin: str) -> TimingArcTables:
        for a in self.arcs:
            if a.output_pin == output_pin and a.related_pin == related_pin:
                return a
        raise KeyError((self.name, output_pin, related_pin))


@dataclass(eq=True)
class Library:
    name: str
    cells: dict
    slew_unit: str = ""
    load_unit: str = ""
    time_unit: str = ""
    warnings: list = field(default_factory=list, compare=False)

    def __post_init__(self):
        self.cells = {k: self.cells[k] for k in sorted(self.cells)}

    def cell_types(self) -> dict:
        """Map cell type -> member cells, both in lexicographic order."""
        out: dict = {}
        for cell in self.cells.values():
            out.setdefault(cell.cell_type, []).append(cell)
        return {k: out[k] for k in sorted(out)}

    def arcs(self) -> Iterator[tuple]:
        """Yield (cell, arc) in deterministic order."""
        for cell in self.cells.values():
            for arc in sorted(cell.arcs, key=lambda a: a.key):
                yield cell, arc

    def complete_arcs(self) -> list:
        return [(c, a) for c, a in self.arcs() if a.complete]

    def merged(self, other: "Library") -> "Library":
        cells = dict(self.cells)
        for name, cell in other.cells.items():
            if name in cells:
                raise LibertySemanticError(f"duplicate cell {name!r} across libraries")
            cells[name] = cell
        return Library(self.name, cells, self.slew_unit, self.load_unit, self.time_unit,
                       self.warnings + other.warnings)

    def to_dict(self) -> dict:
        cells = []
        for cell in self.cells.values():
            cells.append({
                "name": cell.name,
                "cell_type": cell.cell_type,
                "sequential": cell.sequential,
                "input_pins": [{"name": p, "capacitance": cell.pin_capacitance.get(p)}
                               for p in cell.input_pins],
                "output_pins": [{"name": p, "function": None if e is None else boolfn.to_string(e)}
                                for p, e in cell.output_pins],
                "arcs": [{"output_pin": a.output_pin, "related_pin": a.related_pin,
                          "tables": {p.value: a.tables[p].to_dict()
                                     for p in PROPERTIES if p in a.tables}}
                         for a in sorted(cell.arcs, key=lambda a: a.key)],
            })
        return {
            "schema": "lib2vec.library/1",
            "name": self.name,
            "units": {"slew": self.slew_unit, "load": self.load_unit, "time": self.time_unit},
            "cells": cells,
            "warnings": list(self.warnings),
        }


# --------------------------------------------------------------------------
# lookup


def _axis_weights(breakpoints: np.ndarray, x: np.ndarray) -> tuple:
    """Lower index and fractional offset for each query, clamped into range."""
    n = len(breakpoints)
    x = np.clip(np.asarray(x, dtype=float), breakpoints[0], breakpoints[-1])
    if n == 1:
        return np.zeros(x.shape, dtype=int), np.zeros(x.shape)
    lo = np.clip(np.searchsorted(breakpoints, x, side="right") - 1, 0, n - 2)
    t = (x - breakpoints[lo]) / (breakpoints[lo + 1] - breakpoints[lo])
    return lo, t


def lut_query(table: LookupTable2D, slew: float, load: float) -> float:
    """Bilinear interpolation; out-of-range queries are clamped to the table edge."""
    if not (slew > 0 and load > 0):
        raise ValueError(f"slew and load must be positive, got ({slew}, {load})")
    i1, i2, v = table.index1, table.index2, table.values

    def locate(bp, x):
        x = min(max(x, bp[0]), bp[-1])
        if len(bp) == 1:
            return 0, 0, 0.0
        k = min(max(bisect.bisect_right(bp, x) - 1, 0), len(bp) - 2)
        return k, k + 1, (x - bp[k]) / (bp[k + 1] - bp[k])

    a0, a1, s = locate(i1.tolist(), slew)
    b0, b1, t = locate(i2.tolist(), load)
    if s == 0.0 and t == 0.0:
        return float(v[a0, b0])
    return float((1 - s) * ((1 - t) * v[a0, b0] + t * v[a0, b1])
                 + s * ((1 - t) * v[a1, b0] + t * v[a1, b1]))


def interpolation_matrix(breakpoints: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Matrix W with ``W @ f(breakpoints)`` = clamped linear interpolation at ``points``."""
    lo, t = _axis_weights(breakpoints, points)
    w = np.zeros((len(points), len(breakpoints)))
    rows = np.arange(len(points))
    if len(breakpoints) == 1:
        w[:, 0] = 1.0
        return w
    w[rows, lo] += 1.0 - t
    w[rows, lo + 1] += t
    return w


def lut_grid(table: LookupTable2D, slews: np.ndarray, loads: np.ndarray) -> np.ndarray:
    """Bilinear lookup over the full (slews x loads) grid; same result as ``lut_query``."""
    ws = interpolation_matrix(table.index1, slews)
    wl = interpolation_matrix(table.index2, loads)
    return ws @ table.values @ wl.T


# --------------------------------------------------------------------------
# cell naming


def cell_type_of(name: str, rules: Sequence[str] = DEFAULT_TYPE_RULES) -> str:
    """Strip drive-strength / VT / library suffixes by applying each regex once, in order."""
    key = name
    for rule in rules:
        key = re.sub(rule, "", key, count=1)
    if not key:
        raise NamingError(f"cell name {name!r} reduces to an empty type key")
    return key


# --------------------------------------------------------------------------
# syntax pass


@dataclass
class _Group:
    kind: str
    args: list
    line: int
    attrs: list = field(default_factory=list)     # (name, value, line)
    complex: list = field(default_factory=list)   # (name, args, line)
    groups: list = field(default_factory=list)

    def attr(self, name, default=None):
        for n, v, _ in self.attrs:
            if n == name:
                return v
        return default

    def complex_attr(self, name):
        for n, a, _ in self.complex:
            if n == name:
                return a
        return None


_LEX = re.compile(
    r"""
    (?P<ws>[ \t\r\f]+|\\\r?\n)
  | (?P<nl>\n)
  | (?P<bcomment>/\*.*?\*/)
  | (?P<lcomment>//[^\n]*)
  | (?P<string>"(?:[^"\\]|\\.|\\\n)*")
  | (?P<punct>[{}():;,])
  | (?P<word>[^\s{}():;,"]+)
    """,
    re.VERBOSE | re.DOTALL,
)


def _lex(text: str) -> list:
    tokens = []
    line = 1
    pos = 0
    while pos < len(text):
        m = _LEX.match(text, pos)
        if m is None:
            raise LibertySyntaxError(line, "a token", text[pos:pos + 10])
        kind = m.lastgroup
        tok = m.group()
        if kind == "string":
            tokens.append(("str", tok[1:-1].replace("\\\n", "").replace("\\\r\n", ""), line))
        elif kind == "punct":
            tokens.append((tok, tok, line))
        elif kind == "word":
            tokens.append(("word", tok, line))
        line += tok.count("\n")
        pos = m.end()
    tokens.append(("eof", "", line))
    return tokens


class _TreeParser:
    def __init__(self, text: str):
        self.toks = _lex(text)
        self.i = 0

    def peek(self, k=0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def expect(self, kind, what=None):
        tok = self.peek()
        if tok[0] != kind:
            raise LibertySyntaxError(tok[2], what or repr(kind), tok[1] or tok[0])
        self.i += 1
        return tok

    def value(self):
        tok = self.peek()
        if tok[0] not in ("word", "str"):
            raise LibertySyntaxError(tok[2], "a value", tok[1] or tok[0])
        self.i += 1
        parts = [tok[1]]
        # unquoted values may span several words; stop where the next statement starts
        while self.peek()[0] == "word" and self.peek(1)[0] not in (":", "("):
            parts.append(self.peek()[1])
            self.i += 1
        return " ".join(parts)

    def parse(self) -> _Group:
        tok = self.peek()
        if tok[0] != "word":
            raise LibertySyntaxError(tok[2], "'library' group", tok[1] or tok[0])
        top = self.statement()
        if not isinstance(top, _Group):
            raise LibertySyntaxError(tok[2], "'library' group")
        if self.peek()[0] != "eof":
            t = self.peek()
            raise LibertySyntaxError(t[2], "end of file", t[1])
        return top

    def args(self):
        self.expect("(")
        out = []
        while self.peek()[0] != ")":
            tok = self.peek()
            if tok[0] in ("word", "str"):
                out.append(tok[1])
                self.i += 1
            elif tok[0] == ",":
                self.i += 1
            else:
                raise LibertySyntaxError(tok[2], "')'", tok[1] or tok[0])
        self.expect(")")
        return out

    def statement(self):
        name_tok = self.expect("word", "attribute or group name")
        name, line = name_tok[1], name_tok[2]
        nxt = self.peek()
        if nxt[0] == ":":
            self.i += 1
            val = self.value()
            if self.peek()[0] == ";":
                self.i += 1
            return ("attr", name, val, line)
        if nxt[0] == "(":
            args = self.args()
            if self.peek()[0] == "{":
                self.i += 1
                group = _Group(name, args, line)
                while self.peek()[0] != "}":
                    if self.peek()[0] == "eof":
                        raise LibertySyntaxError(self.peek()[2], "'}'", "end of file")
                    if self.peek()[0] == ";":
                        self.i += 1
                        continue
                    st = self.statement()
                    if isinstance(st, _Group):
                        group.groups.append(st)
                    elif st[0] == "attr":
                        group.attrs.append(st[1:])
                    else:
                        group.complex.append(st[1:])
                self.expect("}")
                return group
            if self.peek()[0] == ";":
                self.i += 1
            return ("complex", name, args, line)
        raise LibertySyntaxError(nxt[2], "':' or '('", nxt[1] or nxt[0])


# --------------------------------------------------------------------------
# semantic pass


def _floats(s: str) -> list:
    return [float(x) for x in re.split(r"[,\s]+", s.strip()) if x]


class _Builder:
    def __init__(self, type_rules):
        self.type_rules = type_rules
        self.skipped: Counter = Counter()
        self.first_line: dict = {}
        self.notes: list = []
        self.templates: dict = {}

    def skip(self, scope: str, name: str, line: int):
        key = (scope, name)
        self.skipped[key] += 1
        self.first_line.setdefault(key, line)

    def warn(self, msg: str):
        self.notes.append(msg)

    def warnings(self) -> list:
        out = [f"skipped '{name}' in {scope} (x{n}, first at line {self.first_line[(scope, name)]})"
               for (scope, name), n in sorted(self.skipped.items())]
        return out + self.notes

    def template(self, g: _Group):
        name = g.args[0] if g.args else ""
        v1, v2 = g.attr("variable_1"), g.attr("variable_2")
        i1, i2 = g.complex_attr("index_1"), g.complex_attr("index_2")
        self.templates[name] = {
            "variables": (v1, v2),
            "index_1": _floats(",".join(i1)) if i1 else None,
            "index_2": _floats(",".join(i2)) if i2 else None,
        }

    def table(self, g: _Group, where: str) -> Optional[LookupTable2D]:
        tname = g.args[0] if g.args else "scalar"
        if tname == "scalar":
            self.warn(f"{where}: scalar table '{g.kind}' skipped")
            return None
        if tname not in self.templates:
            raise LibertySemanticError(f"{where}: table '{g.kind}' references unknown template {tname!r} "
                                       f"(line {g.line})")
        tpl = self.templates[tname]
        v1, v2 = tpl["variables"]
        i1 = g.complex_attr("index_1")
        i2 = g.complex_attr("index_2")
        idx1 = _floats(",".join(i1)) if i1 else tpl["index_1"]
        idx2 = _floats(",".join(i2)) if i2 else tpl["index_2"]
        vals = g.complex_attr("values")
        if v2 is None or idx2 is None:
            self.warn(f"{where}: one-dimensional table '{g.kind}' skipped")
            return None
        if idx1 is None or vals is None:
            raise LibertySemanticError(f"{where}: table '{g.kind}' lacks breakpoints or values (line {g.line})")
        rows = [_floats(r) for r in vals]
        if len(rows) == 1 and len(rows[0]) == len(idx1) * len(idx2) and len(idx1) > 1:
            rows = [rows[0][k * len(idx2):(k + 1) * len(idx2)] for k in range(len(idx1))]
        try:
            values = np.array(rows, dtype=float)
        except ValueError:
            raise LibertySemanticError(f"{where}: ragged values in '{g.kind}' (line {g.line})") from None
        index1, index2 = np.array(idx1), np.array(idx2)
        if v1 in _LOAD_VARS and v2 in _SLEW_VARS:
            index1, index2, values = index2, index1, values.T
        elif not (v1 in _SLEW_VARS and v2 in _LOAD_VARS):
            self.warn(f"{where}: template {tname!r} has unsupported variables ({v1}, {v2}); table skipped")
            return None
        return LookupTable2D(index1, index2, values)

    def cell(self, g: _Group) -> Optional[Cell]:
        name = g.args[0] if g.args else ""
        if not name:
            raise LibertySemanticError(f"cell group without a name (line {g.line})")
        inputs, outputs, caps = [], [], {}
        pin_groups = []
        state_vars: set = set()
        sequential = False
        for n, _, line in g.attrs:
            self.skip("cell", n, line)
        for n, _, line in g.complex:
            self.skip("cell", n, line)
        for sub in g.groups:
            if sub.kind == "pin":
                for pin in sub.args:
                    pin_groups.append((pin, sub))
            elif sub.kind in ("ff", "latch", "ff_bank", "latch_bank", "statetable"):
                sequential = True
                state_vars.update(a for a in sub.args if sub.kind in ("ff", "latch"))
            else:
                self.skip("cell", sub.kind, sub.line)
        functions = {}
        for pin, pg in pin_groups:
            direction = pg.attr("direction")
            if direction == "input":
                inputs.append(pin)
                cap = pg.attr("capacitance")
                if cap is not None:
                    caps[pin] = float(cap)
            elif direction == "output":
                func = pg.attr("function")
                functions[pin] = func
                outputs.append(pin)
            else:
                self.skip("pin", f"direction {direction}", pg.line)
        out_pins = []
        for pin in outputs:
            func = functions[pin]
            expr = None
            if func is not None:
                try:
                    expr = boolfn.parse(func)
                except boolfn.BoolParseError as e:
                    raise LibertySemanticError(f"cell {name}: bad function on pin {pin}: {e}") from None
                unknown = boolfn.variables(expr) - set(inputs)
                if unknown:
                    if sequential or unknown <= state_vars:
                        sequential = True
                        self.warn(f"cell {name}: function of {pin} references internal nodes "
                                  f"{sorted(unknown)}; excluded from functional data")
                        expr = None
                    else:
                        raise LibertySemanticError(
                            f"cell {name}: function of pin {pin} references undeclared pins {sorted(unknown)}")
            out_pins.append((pin, expr))
        if not out_pins:
            self.warn(f"cell {name}: no output pin, skipped")
            return None
        arcs: dict = {}
        for pin, pg in pin_groups:
            if pg.attr("direction") != "output":
                for sub in pg.groups:
                    if sub.kind not in ("timing", "internal_power"):
                        self.skip("pin", sub.kind, sub.line)
                continue
            for sub in pg.groups:
                if sub.kind == "timing":
                    self._timing(name, pin, sub, arcs, inputs)
                elif sub.kind == "internal_power":
                    self._power(name, pin, sub, arcs, inputs)
                else:
                    self.skip("pin", sub.kind, sub.line)
            for n, _, line in pg.attrs:
                if n not in ("direction", "function", "capacitance", "related_pin"):
                    self.skip("pin", n, line)
        try:
            ctype = cell_type_of(name, self.type_rules)
        except NamingError as e:
            raise LibertySemanticError(str(e)) from None
        arc_list = [arcs[k] for k in sorted(arcs)]
        return Cell(name, ctype, inputs, out_pins, arc_list, caps, sequential)

    def _related(self, cell, pin, g, inputs):
        rel = g.attr("related_pin")
        if rel is None:
            return []
        pins = rel.split()
        for r in pins:
            if r not in inputs:
                self.warn(f"cell {cell}: arc {pin}<-{r} has unknown related pin; skipped")
        return [r for r in pins if r in inputs]

    def _timing(self, cell, pin, g, arcs, inputs):
        ttype = g.attr("timing_type")
        if ttype not in _ARC_TIMING_TYPES:
            self.skip("timing", f"timing_type {ttype}", g.line)
            return
        for rel in self._related(cell, pin, g, inputs):
            arc = arcs.setdefault((pin, rel), TimingArcTables(pin, rel))
            where = f"cell {cell} arc {pin}<-{rel}"
            if any(p in arc.tables for p in _TIMING_TABLES.values()):
                self.warn(f"{where}: duplicate timing group (line {g.line}); kept the first")
                continue
            for sub in g.groups:
                prop = _TIMING_TABLES.get(sub.kind)
                if prop is None:
                    self.skip("timing", sub.kind, sub.line)
                    continue
                t = self.table(sub, where)
                if t is not None:
                    arc.tables[prop] = t

    def _power(self, cell, pin, g, arcs, inputs):
        for rel in self._related(cell, pin, g, inputs):
            arc = arcs.setdefault((pin, rel), TimingArcTables(pin, rel))
            where = f"cell {cell} power {pin}<-{rel}"
            if any(p in arc.tables for p in _POWER_TABLES.values()):
                self.warn(f"{where}: duplicate internal_power group (line {g.line}); kept the first")
                continue
            for sub in g.groups:
                prop = _POWER_TABLES.get(sub.kind)
                if prop is None:
                    self.skip("internal_power", sub.kind, sub.line)
                    continue
                t = self.table(sub, where)
                if t is not None:
                    arc.tables[prop] = t


def parse_liberty(text: str, type_rules: Sequence[str] = DEFAULT_TYPE_RULES) -> Library:
    """Parse Liberty source text into a :class:`Library`."""
    top = _TreeParser(text).parse()
    if top.kind != "library":
        raise LibertySyntaxError(top.line, "'library' group", top.kind)
    b = _Builder(type_rules)
    time_unit = top.attr("time_unit", "")
    load = top.complex_attr("capacitive_load_unit")
    load_unit = "".join(load) if load else ""
    for sub in top.groups:
        if sub.kind in ("lu_table_template", "power_lut_template"):
            b.template(sub)
    cells = {}
    for sub in top.groups:
        if sub.kind == "cell":
            cell = b.cell(sub)
            if cell is None:
                continue
            if cell.name in cells:
                raise LibertySemanticError(f"duplicate cell {cell.name!r}")
            cells[cell.name] = cell
        elif sub.kind not in ("lu_table_template", "power_lut_template"):
            b.skip("library", sub.kind, sub.line)
    for n, _, line in top.attrs:
        if n != "time_unit":
            b.skip("library", n, line)
    for cell in cells.values():
        for arc in cell.arcs:
            if not arc.complete:
                missing = [p.value for p in PROPERTIES if p not in arc.tables]
                b.warn(f"cell {cell.name} arc {arc.output_pin}<-{arc.related_pin}: "
                       f"missing {missing}; excluded from electrical data")
    name = top.args[0] if top.args else ""
    return Library(name, cells, slew_unit=time_unit, load_unit=load_unit, time_unit=time_unit,
                   warnings=b.warnings())


def read_liberty(paths: Iterable, type_rules: Sequence[str] = DEFAULT_TYPE_RULES) -> Library:
    """Parse and merge one or more Liberty files."""
    lib = None
    for path in sorted(str(p) for p in paths):
        one = parse_liberty(Path(path).read_text(encoding="utf-8", errors="replace"), type_rules)
        lib = one if lib is None else lib.merged(one)
    if lib is None:
        raise LibertyError("no Liberty files given")
    return lib


def check_type_consistency(lib: Library) -> list:
    """Return human-readable problems with cell-type groups (empty when consistent)."""
    problems = []
    for ctype, members in lib.cell_types().items():
        ref = members[0]
        ref_pins = sorted(ref.input_pins)
        ref_tt = None
        if ref.combinational and ref.single_output:
            ref_tt = boolfn.cell_truth_table(ref)
        for cell in members[1:]:
            if sorted(cell.input_pins) != ref_pins:
                problems.append(f"{ctype}: {cell.name} pins {sorted(cell.input_pins)} != {ref_pins}")
                continue
            if ref_tt is not None and cell.combinational and cell.single_output:
                if boolfn.cell_truth_table(cell) != ref_tt:
                    problems.append(f"{ctype}: {cell.name} function differs from {ref.name}")
    return problems


def global_ranges(lib: Library) -> tuple:
    """(min slew, max slew, min load, max load) over all complete arcs' breakpoints."""
    s_lo = l_lo = math.inf
    s_hi = l_hi = -math.inf
    for _, arc in lib.complete_arcs():
        for t in arc.tables.values():
            s_lo, s_hi = min(s_lo, t.index1[0]), max(s_hi, t.index1[-1])
            l_lo, l_hi = min(l_lo, t.index2[0]), max(l_hi, t.index2[-1])
    return s_lo, s_hi, l_lo, l_hi
