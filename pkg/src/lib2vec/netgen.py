"""Artificial combinational netlists and their logic labels."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import boolfn
from ._io import atomic_write_text
from .liberty import Library

SCHEMA = "lib2vec.netlist/1"
DEFAULT_VECTORS = 10_000
EXACT_INPUT_LIMIT = 16
MAX_ATTEMPTS = 2000


class NetgenError(Exception):
    pass


class EnvelopeInfeasible(NetgenError):
    pass


class UnconnectedNet(NetgenError):
    pass


@dataclass(frozen=True)
class Envelope:
    """Inclusive bounds on netlist statistics."""

    cells: tuple = (16, 235)
    inputs: tuple = (1, 16)
    edges: tuple = (34, 875)
    levels: tuple = (7, 111)
    mean_cells: float = 117.0

    def check(self, min_pins: int = 1, max_pins: int = 1) -> None:
        for name in ("cells", "inputs", "edges", "levels"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 1:
                raise EnvelopeInfeasible(f"{name} bounds {lo}..{hi} are empty")
        if self.levels[0] > self.cells[1]:
            raise EnvelopeInfeasible(f"{self.levels[0]} levels need more than {self.cells[1]} cells")
        if self.edges[0] > self.cells[1] * max_pins:
            raise EnvelopeInfeasible(f"{self.edges[0]} edges unreachable with {self.cells[1]} cells "
                                     f"of at most {max_pins} inputs")
        if self.edges[1] < max(self.cells[0], self.levels[0]) * min_pins:
            raise EnvelopeInfeasible(f"{self.edges[1]} edges too few for {self.cells[0]} cells")

    def contains(self, stats: Mapping[str, int]) -> bool:
        return all(getattr(self, k)[0] <= stats[k] <= getattr(self, k)[1]
                   for k in ("cells", "inputs", "edges", "levels"))


DEFAULT_ENVELOPE = Envelope()


@dataclass
class Instance:
    name: str
    cell: str
    pins: dict          # input pin -> net
    output_pin: str
    output_net: str
    level: int


@dataclass
class Netlist:
    name: str
    inputs: list
    instances: list
    functions: dict     # cell -> (input pins, truth-table bits)
    seed: Optional[int] = None

    @property
    def nets(self) -> list:
        return list(self.inputs) + [i.output_net for i in self.instances]

    def stats(self) -> dict:
        return {
            "cells": len(self.instances),
            "inputs": len(self.inputs),
            "edges": sum(len(i.pins) for i in self.instances),
            "levels": max((i.level for i in self.instances), default=0),
        }

    def primary_outputs(self) -> list:
        used = {n for i in self.instances for n in i.pins.values()}
        return [i.output_net for i in self.instances if i.output_net not in used]

    def topological(self) -> list:
        return sorted(self.instances, key=lambda i: (i.level, i.name))

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "name": self.name,
            "seed": self.seed,
            "inputs": list(self.inputs),
            "instances": [{"name": i.name, "cell": i.cell, "pins": dict(sorted(i.pins.items())),
                           "output_pin": i.output_pin, "output_net": i.output_net, "level": i.level}
                          for i in self.instances],
            "functions": {c: {"pins": list(p), "bits": "".join(map(str, b))}
                          for c, (p, b) in sorted(self.functions.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Netlist":
        if d.get("schema") != SCHEMA:
            raise NetgenError(f"unsupported netlist schema {d.get('schema')!r}")
        insts = [Instance(r["name"], r["cell"], dict(r["pins"]), r["output_pin"], r["output_net"], r["level"])
                 for r in d["instances"]]
        funcs = {c: (tuple(f["pins"]), tuple(int(b) for b in f["bits"])) for c, f in d["functions"].items()}
        return cls(d["name"], list(d["inputs"]), insts, funcs, d.get("seed"))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True) + "\n"

    def write(self, path) -> None:
        atomic_write_text(path, self.dumps())

    @classmethod
    def read(cls, path) -> "Netlist":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# --------------------------------------------------------------------------
# generation


def usable_cells(lib: Library, max_inputs: int = 6) -> list:
    """(cell name, output pin, truth table) for combinational single-output cells."""
    out = []
    for cell in lib.cells.values():
        if cell.sequential or not cell.single_output or cell.output_pins[0][1] is None:
            continue
        if not 1 <= len(cell.input_pins) <= max_inputs:
            continue
        out.append((cell.name, cell.output_pins[0][0], boolfn.cell_truth_table(cell)))
    return sorted(out, key=lambda c: c[0])


def _try_build(rng, cells, env: Envelope, name: str):
    lo, hi = env.cells
    mode = min(max(3 * env.mean_cells - lo - hi, lo), hi)
    n_cells = int(round(rng.triangular(lo, mode, hi))) if hi > lo else lo
    max_lv = min(env.levels[1], n_cells)
    if max_lv < env.levels[0]:
        return None
    n_levels = int(rng.integers(env.levels[0], max_lv + 1))
    n_inputs = int(rng.integers(env.inputs[0], env.inputs[1] + 1))
    # every level gets one cell, the rest are spread uniformly
    per_level = np.ones(n_levels, dtype=int)
    np.add.at(per_level, rng.integers(0, n_levels, n_cells - n_levels), 1)
    choice = rng.integers(0, len(cells), n_cells)
    edges = sum(len(cells[c][2].input_pins) for c in choice)
    if not env.edges[0] <= edges <= env.edges[1]:
        return None

    inputs = [f"I{k}" for k in range(n_inputs)]
    by_level = [list(inputs)]
    instances = []
    anchors = []  # (instance index, pin) that fixes the instance level
    k = 0
    for lv in range(1, n_levels + 1):
        earlier = [n for nets in by_level for n in nets]
        level_nets = []
        for _ in range(per_level[lv - 1]):
            cname, opin, tt = cells[choice[k]]
            pins = {}
            order = list(tt.input_pins)
            anchor = order[int(rng.integers(len(order)))]
            prev = by_level[lv - 1]
            for p in order:
                pool = prev if p == anchor else earlier
                pins[p] = pool[int(rng.integers(len(pool)))]
            inst = Instance(f"U{k}", cname, pins, opin, f"n{k}", lv)
            instances.append(inst)
            anchors.append((k, anchor))
            level_nets.append(inst.output_net)
            k += 1
        by_level.append(level_nets)

    # tie every unused port to a free pin (not a level anchor, unless at level 1)
    uses: dict = {}
    for inst in instances:
        for n in inst.pins.values():
            uses[n] = uses.get(n, 0) + 1
    free = [(ix, p) for ix, inst in enumerate(instances) for p in sorted(inst.pins)
            if (ix, p) != anchors[ix] or inst.level == 1]
    slots = iter(rng.permutation(len(free)).tolist())
    for port in inputs:
        if uses.get(port):
            continue
        for s in slots:
            ix, p = free[s]
            old = instances[ix].pins[p]
            if old in inputs and uses[old] == 1:
                continue
            instances[ix].pins[p] = port
            uses[old] -= 1
            uses[port] = 1
            break
        else:
            return None
    funcs = {cells[c][0]: (cells[c][2].input_pins, cells[c][2].bits) for c in set(choice.tolist())}
    return Netlist(name, inputs, instances, funcs)


def generate_netlist(lib_or_cells, seed: int, envelope: Envelope = DEFAULT_ENVELOPE,
                     name: Optional[str] = None) -> Netlist:
    """Level-by-level random DAG whose statistics lie inside ``envelope``."""
    cells = usable_cells(lib_or_cells) if isinstance(lib_or_cells, Library) else list(lib_or_cells)
    if not cells:
        raise EnvelopeInfeasible("library has no usable combinational cells")
    widths = [len(c[2].input_pins) for c in cells]
    envelope.check(min(widths), max(widths))
    rng = np.random.default_rng([seed, 11])
    for _ in range(MAX_ATTEMPTS):
        net = _try_build(rng, cells, envelope, name or f"net{seed}")
        if net is not None and envelope.contains(net.stats()):
            net.seed = seed
            validate(net)
            return net
    raise EnvelopeInfeasible(f"no netlist inside {envelope} after {MAX_ATTEMPTS} attempts")


def validate(net: Netlist) -> None:
    """Acyclic, every pin driven, levels consistent, all ports used."""
    level = {p: 0 for p in net.inputs}
    for inst in net.topological():
        for p, n in inst.pins.items():
            if n not in level:
                raise UnconnectedNet(f"{inst.name}/{p} reads undriven or later net {n!r}")
        if inst.output_net in level:
            raise NetgenError(f"net {inst.output_net!r} has two drivers")
        want = 1 + max(level[n] for n in inst.pins.values())
        if want != inst.level:
            raise NetgenError(f"{inst.name} is at level {inst.level}, connectivity says {want}")
        pins, _ = net.functions[inst.cell]
        if set(pins) != set(inst.pins):
            raise UnconnectedNet(f"{inst.name} pins {sorted(inst.pins)} do not match {inst.cell}")
        level[inst.output_net] = inst.level
    used = {n for i in net.instances for n in i.pins.values()}
    floating = [p for p in net.inputs if p not in used]
    if floating:
        raise UnconnectedNet(f"input ports {floating} drive nothing")


# --------------------------------------------------------------------------
# simulation


@dataclass
class LogicLabels:
    bits: dict              # net -> uint8 array over the applied vectors
    probability: dict       # net -> P(1)
    activity: dict          # net -> toggle rate between consecutive vectors
    n_vectors: int
    exact: bool = False

    def records(self, netlist: Netlist, with_bits: bool = False) -> list:
        out = []
        for inst in netlist.topological():
            r = {"pin": f"{inst.name}/{inst.output_pin}", "net": inst.output_net, "cell": inst.cell,
                 "probability": self.probability[inst.output_net],
                 "activity": self.activity[inst.output_net]}
            if with_bits:
                r["bits"] = "".join(map(str, self.bits[inst.output_net].tolist()))
            out.append(r)
        return out

    def dumps(self, netlist: Netlist, with_bits: bool = False) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records(netlist, with_bits))


def random_vectors(n_inputs: int, count: int = DEFAULT_VECTORS, seed: int = 0) -> np.ndarray:
    return np.random.default_rng([seed, 12]).integers(0, 2, size=(count, n_inputs), dtype=np.uint8)


def all_vectors(n_inputs: int) -> np.ndarray:
    if n_inputs > EXACT_INPUT_LIMIT:
        raise ValueError(f"exhaustive enumeration limited to {EXACT_INPUT_LIMIT} inputs")
    return boolfn.assignments([f"I{k}" for k in range(n_inputs)])


def evaluate(net: Netlist, vectors: np.ndarray) -> dict:
    """net -> uint8 array of values, evaluating instances level by level."""
    vectors = np.asarray(vectors, dtype=np.uint8)
    if vectors.ndim != 2 or vectors.shape[1] != len(net.inputs):
        raise UnconnectedNet(f"vectors must have shape (N, {len(net.inputs)}), got {vectors.shape}")
    values = {p: vectors[:, k] for k, p in enumerate(net.inputs)}
    for inst in net.topological():
        pins, bits = net.functions[inst.cell]
        idx = np.zeros(len(vectors), dtype=np.int64)
        for p in pins:
            try:
                idx = (idx << 1) | values[inst.pins[p]]
            except KeyError:
                raise UnconnectedNet(f"{inst.name}/{p} reads undriven net {inst.pins.get(p)!r}") from None
        values[inst.output_net] = np.asarray(bits, dtype=np.uint8)[idx]
    return values


def labels_from_values(net: Netlist, values: Mapping[str, np.ndarray], exact: bool = False) -> LogicLabels:
    bits, prob, act = {}, {}, {}
    for inst in net.instances:
        b = values[inst.output_net]
        bits[inst.output_net] = b
        p = float(b.mean()) if len(b) else float("nan")
        prob[inst.output_net] = p
        if exact:
            act[inst.output_net] = 2 * p * (1 - p)
        else:
            act[inst.output_net] = float(np.mean(b[1:] ^ b[:-1])) if len(b) > 1 else float("nan")
    n = len(next(iter(values.values()))) if values else 0
    return LogicLabels(bits, prob, act, n, exact)


def simulate(net: Netlist, vectors: np.ndarray) -> LogicLabels:
    """Labels measured over the given input vectors, in the given order."""
    return labels_from_values(net, evaluate(net, vectors))


def exact_labels(net: Netlist) -> LogicLabels:
    """Exact probabilities by enumerating every input vector; activity is 2p(1-p)."""
    return labels_from_values(net, evaluate(net, all_vectors(len(net.inputs))), exact=True)


def default_labels(net: Netlist, count: int = DEFAULT_VECTORS, seed: int = 0) -> LogicLabels:
    if len(net.inputs) <= EXACT_INPUT_LIMIT:
        return exact_labels(net)
    return simulate(net, random_vectors(len(net.inputs), count, seed))


def fixed_point_evaluate(net: Netlist, vector: Sequence[int]) -> dict:
    """Reference evaluator: sweep instances in file order until nothing changes."""
    values = {p: int(v) for p, v in zip(net.inputs, vector)}
    changed = True
    while changed:
        changed = False
        for inst in net.instances:
            if inst.output_net in values:
                continue
            if not all(n in values for n in inst.pins.values()):
                continue
            pins, bits = net.functions[inst.cell]
            row = 0
            for p in pins:
                row = row * 2 + values[inst.pins[p]]
            values[inst.output_net] = bits[row]
            changed = True
    missing = [i.output_net for i in net.instances if i.output_net not in values]
    if missing:
        raise UnconnectedNet(f"nets never resolved: {missing[:5]}")
    return values


def toggle_sigma(p: float, n: int) -> float:
    """Standard deviation of the measured toggle rate over ``n`` i.i.d. uniform vectors.

    Consecutive toggle indicators are 1-dependent, so the variance carries a
    lag-one covariance term: q(1-q) + 2(p(1-p) - q^2) per step with q = 2p(1-p).
    """
    steps = n - 1
    q = 2 * p * (1 - p)
    var = q * (1 - q) + 2 * (p * (1 - p) - q * q)
    return float(np.sqrt(max(var, 0.0) / steps))


def probability_sigma(p: float, n: int) -> float:
    return float(np.sqrt(p * (1 - p) / n))
