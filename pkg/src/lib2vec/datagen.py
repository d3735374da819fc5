"""Self-supervised datasets: functional/electrical output and difference prediction."""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import boolfn
from ._io import atomic_write_bytes, atomic_write_text
from .liberty import PROPERTIES, Library, Property
from .testgen import ConditionGrid, response_vectors

log = logging.getLogger(__name__)

SCHEMA = "lib2vec.datasets/1"
DEFAULT_PAIR_CAP = 20000
DEFAULT_ELEC_PARTNERS = 4


@dataclass(frozen=True)
class FuncOutExample:
    cell: str
    output_pin: str
    assignment: tuple  # ((pin, value), ...) in pin order
    target: int


@dataclass(frozen=True)
class FuncDiffExample:
    cell_a: str
    cell_b: str
    output_a: str
    output_b: str
    assignment: tuple
    target: int


@dataclass(frozen=True, eq=False)
class ElecOutExample:
    arc: tuple  # (cell, output pin, related pin)
    property: str
    target: np.ndarray


@dataclass(frozen=True, eq=False)
class ElecDiffExample:
    arc_a: tuple
    arc_b: tuple
    property: str
    target: np.ndarray


@dataclass
class Datasets:
    func_out: list = field(default_factory=list)
    func_diff: list = field(default_factory=list)
    elec_out: list = field(default_factory=list)
    elec_diff: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def functional_cells(lib: Library, limit: int = boolfn.DEFAULT_MAX_INPUTS) -> tuple:
    """(usable cells, skip counts) for functional data."""
    cells, skipped = [], {"sequential": 0, "multi_output": 0, "too_many_inputs": 0, "no_function": 0}
    for cell in lib.cells.values():
        if cell.sequential:
            skipped["sequential"] += 1
        elif not cell.single_output:
            skipped["multi_output"] += 1
        elif cell.output_pins[0][1] is None:
            skipped["no_function"] += 1
        elif len(cell.input_pins) > limit:
            skipped["too_many_inputs"] += 1
        else:
            cells.append(cell)
    return cells, skipped


def gen_functional(lib: Library, seed: int = 0, pair_cap: Optional[int] = DEFAULT_PAIR_CAP,
                   limit: int = boolfn.DEFAULT_MAX_INPUTS) -> tuple:
    """Exhaustive output examples and (possibly sampled) pairwise difference examples."""
    cells, skipped = functional_cells(lib, limit)
    tables = {c.name: boolfn.cell_truth_table(c, limit) for c in cells}
    out = []
    for cell in cells:
        tt = tables[cell.name]
        rows = boolfn.assignments(tt.input_pins)
        for row, bit in zip(rows, tt.bits):
            out.append(FuncOutExample(cell.name, cell.output_pins[0][0],
                                      tuple(zip(tt.input_pins, (int(v) for v in row))), bit))
    groups: dict = {}
    for cell in cells:
        groups.setdefault(tables[cell.name].input_pins, []).append(cell)
    pairs = [(a, b) for _, members in sorted(groups.items())
             for a, b in itertools.combinations(members, 2)]
    if pair_cap is not None and len(pairs) > pair_cap:
        rng = np.random.default_rng([seed, 1])
        pairs = [pairs[i] for i in np.sort(rng.choice(len(pairs), pair_cap, replace=False))]
    diff = []
    for a, b in pairs:
        ta, tb = tables[a.name], tables[b.name]
        rows = boolfn.assignments(ta.input_pins)
        for row, ya, yb in zip(rows, ta.bits, tb.bits):
            diff.append(FuncDiffExample(a.name, b.name, a.output_pins[0][0], b.output_pins[0][0],
                                        tuple(zip(ta.input_pins, (int(v) for v in row))), ya - yb))
    return out, diff, skipped


def gen_electrical(lib: Library, grid: ConditionGrid, seed: int = 0,
                   partners: int = DEFAULT_ELEC_PARTNERS,
                   properties: Sequence[Property] = PROPERTIES,
                   warnings: Optional[list] = None) -> tuple:
    """Per-(arc, property) response targets and sampled same-property difference targets."""
    out, diff = [], []
    for prop in properties:
        vecs = response_vectors(lib, prop, grid, warnings)
        keys = sorted(vecs)
        for k in keys:
            out.append(ElecOutExample(k, prop.value, vecs[k]))
        if len(keys) < 2 or partners <= 0:
            continue
        rng = np.random.default_rng([seed, 2, prop.index])
        for i, k in enumerate(keys):
            n = min(partners, len(keys) - 1)
            picks = rng.choice(len(keys) - 1, size=n, replace=False)
            for j in sorted(int(p) + (int(p) >= i) for p in picks):
                other = keys[j]
                diff.append(ElecDiffExample(k, other, prop.value, vecs[k] - vecs[other]))
    return out, diff


def generate(lib: Library, grid: Optional[ConditionGrid], seed: int = 0,
             pair_cap: Optional[int] = DEFAULT_PAIR_CAP,
             partners: int = DEFAULT_ELEC_PARTNERS) -> Datasets:
    fo, fd, skipped = gen_functional(lib, seed=seed, pair_cap=pair_cap)
    warnings: list = []
    if grid is not None and lib.complete_arcs():
        eo, ed = gen_electrical(lib, grid, seed=seed, partners=partners, warnings=warnings)
    else:
        eo, ed = [], []
    meta = {
        "schema": SCHEMA,
        "seed": seed,
        "grid": list(grid.shape) if grid is not None else None,
        "pair_cap": pair_cap,
        "partners": partners,
        "skipped_cells": skipped,
        "cell_types": {c.name: c.cell_type for c in lib.cells.values()},
        "counts": {"func_out": len(fo), "func_diff": len(fd), "elec_out": len(eo), "elec_diff": len(ed)},
        "warnings": warnings,
    }
    return Datasets(fo, fd, eo, ed, meta)


# --------------------------------------------------------------------------
# JSON-lines I/O


def _floats(v: np.ndarray) -> list:
    return [float(x) for x in v]


class _Sidecar:
    def __init__(self):
        self.chunks: list = []
        self.offset = 0

    def add(self, v: np.ndarray) -> dict:
        data = np.asarray(v, dtype="<f4").tobytes()
        ref = {"offset": self.offset, "length": len(v)}
        self.chunks.append(data)
        self.offset += len(v)
        return ref


def write_datasets(ds: Datasets, out_dir, sidecar: bool = False) -> None:
    """One JSON object per line per task; electrical targets optionally in ``elec_targets.f32``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    side = _Sidecar() if sidecar else None

    def target(v):
        return side.add(v) if side else _floats(v)

    lines = {
        "func_out": [{"task": "func_out", "cell": e.cell, "output_pin": e.output_pin,
                      "pins": dict(e.assignment), "target": e.target} for e in ds.func_out],
        "func_diff": [{"task": "func_diff", "cell": [e.cell_a, e.cell_b],
                       "output_pin": [e.output_a, e.output_b],
                       "pins": dict(e.assignment), "target": e.target} for e in ds.func_diff],
        "elec_out": [{"task": "elec_out", "cell": e.arc[0],
                      "pins": {"output": e.arc[1], "related": e.arc[2]},
                      "property": e.property, "target": target(e.target)} for e in ds.elec_out],
        "elec_diff": [{"task": "elec_diff", "cell": [e.arc_a[0], e.arc_b[0]],
                       "pins": [{"output": e.arc_a[1], "related": e.arc_a[2]},
                                {"output": e.arc_b[1], "related": e.arc_b[2]}],
                       "property": e.property, "target": target(e.target)} for e in ds.elec_diff],
    }
    for name, recs in lines.items():
        text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in recs)
        atomic_write_text(out / f"{name}.jsonl", text)
    meta = dict(ds.meta, sidecar="elec_targets.f32" if side else None)
    if side:
        atomic_write_bytes(out / "elec_targets.f32", b"".join(side.chunks))
    elif (out / "elec_targets.f32").exists():
        (out / "elec_targets.f32").unlink()
    atomic_write_text(out / "meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_datasets(in_dir) -> Datasets:
    src = Path(in_dir)
    meta = json.loads((src / "meta.json").read_text())
    if meta.get("schema") != SCHEMA:
        raise ValueError(f"unsupported dataset schema {meta.get('schema')!r}")
    side = None
    if meta.get("sidecar"):
        side = np.fromfile(src / meta["sidecar"], dtype="<f4").astype(np.float64)

    def target(t):
        if isinstance(t, dict):
            return side[t["offset"]:t["offset"] + t["length"]].copy()
        return np.array(t, dtype=np.float64)

    def records(name):
        path = src / f"{name}.jsonl"
        if not path.exists():
            return []
        return [json.loads(l) for l in path.read_text().splitlines() if l]

    ds = Datasets(meta=meta)
    ds.func_out = [FuncOutExample(r["cell"], r["output_pin"], tuple(r["pins"].items()), r["target"])
                   for r in records("func_out")]
    ds.func_diff = [FuncDiffExample(r["cell"][0], r["cell"][1], r["output_pin"][0], r["output_pin"][1],
                                    tuple(r["pins"].items()), r["target"]) for r in records("func_diff")]
    ds.elec_out = [ElecOutExample((r["cell"], r["pins"]["output"], r["pins"]["related"]),
                                  r["property"], target(r["target"])) for r in records("elec_out")]
    ds.elec_diff = [ElecDiffExample((r["cell"][0], r["pins"][0]["output"], r["pins"][0]["related"]),
                                    (r["cell"][1], r["pins"][1]["output"], r["pins"][1]["related"]),
                                    r["property"], target(r["target"])) for r in records("elec_diff")]
    return ds
