"""Regularity tests derived from a parsed library, and scoring of embeddings against them.

Three families are produced:

* inverting analogies, ``(X vs X_bar) = (Y vs ?)`` over pairs of complementary cell types;
* functional similarity choices, ``which of A, B is closer to C``, graded Easy/Hard
  by the gap in truth-table agreement;
* electrical nearest-arc questions, answered by Euclidean distance between log
  response vectors over a shared (slew, load) condition grid.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import boolfn
from .liberty import PROPERTIES, Library, Property, global_ranges, lut_grid

log = logging.getLogger(__name__)

SCHEMA = "lib2vec.tests/1"
EASY_MARGIN = 0.5
DEFAULT_ELECTRICAL_CAP = 1000

# reference test counts per property for the 190-cell ASAP7 corpus, in PROPERTIES order
ASAP7_ELECTRICAL_COUNTS = (635, 467, 975, 858, 722, 722)
ASAP7_CORPUS_SHAPE = (190, 86)


class TestGenError(Exception):
    pass


class EmptyLibrary(TestGenError):
    pass


class NonPositiveValue(TestGenError):
    def __init__(self, index: int, value: float):
        self.index = index
        super().__init__(f"non-positive interpolated value {value!r} at condition {index}")


class MissingVector(TestGenError, KeyError):
    pass


# --------------------------------------------------------------------------
# condition grid and response vectors


@dataclass(frozen=True, eq=False)
class ConditionGrid:
    slew_points: np.ndarray
    load_points: np.ndarray

    @property
    def shape(self) -> tuple:
        return (len(self.slew_points), len(self.load_points))

    @property
    def size(self) -> int:
        return len(self.slew_points) * len(self.load_points)

    @property
    def conditions(self) -> np.ndarray:
        """(S*L, 2) array of (slew, load), slew-major."""
        s, l = np.meshgrid(self.slew_points, self.load_points, indexing="ij")
        return np.column_stack([s.ravel(), l.ravel()])


def log_points(lo: float, hi: float, n: int) -> np.ndarray:
    return np.exp(np.linspace(np.log(lo), np.log(hi), n))


def build_condition_grid(lib: Library, s: int = 150, l: int = 150) -> ConditionGrid:
    """Log-uniform grid spanning the global slew and load breakpoint ranges."""
    if s < 2 or l < 2:
        raise ValueError("grid needs at least two points per axis")
    if not lib.complete_arcs():
        raise EmptyLibrary("library has no arc with all six tables")
    s_lo, s_hi, l_lo, l_hi = global_ranges(lib)
    if s_lo <= 0 or l_lo <= 0:
        raise TestGenError("breakpoints must be positive to build a log-spaced grid")
    return ConditionGrid(log_points(s_lo, s_hi, s), log_points(l_lo, l_hi, l))


def response_vector(arc, prop: Property, grid: ConditionGrid) -> np.ndarray:
    """Natural log of the interpolated property over every grid condition."""
    vals = lut_grid(arc.tables[prop], grid.slew_points, grid.load_points).ravel()
    bad = np.flatnonzero(vals <= 0)
    if len(bad):
        raise NonPositiveValue(int(bad[0]), float(vals[bad[0]]))
    return np.log(vals)


def arc_id(cell_name: str, arc) -> tuple:
    return (cell_name, arc.output_pin, arc.related_pin)


def response_vectors(lib: Library, prop: Property, grid: ConditionGrid,
                     warnings: Optional[list] = None) -> dict:
    """arc id -> response vector for every complete arc with a valid response."""
    out = {}
    for cell, arc in lib.complete_arcs():
        try:
            out[arc_id(cell.name, arc)] = response_vector(arc, prop, grid)
        except NonPositiveValue as e:
            msg = f"{cell.name} {arc.output_pin}<-{arc.related_pin} {prop.value}: {e}; excluded"
            log.warning(msg)
            if warnings is not None:
                warnings.append(msg)
    return out


# --------------------------------------------------------------------------
# functional type table


@dataclass(frozen=True)
class TypeInfo:
    name: str
    cells: tuple
    input_pins: tuple
    table: boolfn.TruthTable


def functional_types(lib: Library, limit: int = boolfn.DEFAULT_MAX_INPUTS) -> dict:
    """Single-output combinational cell types with their truth tables."""
    out = {}
    for ctype, members in lib.cell_types().items():
        cells = [c for c in members if c.combinational and c.single_output]
        if not cells or len(cells) != len(members):
            continue
        try:
            tt = boolfn.cell_truth_table(cells[0], limit)
        except boolfn.TooManyInputs:
            log.warning("type %s skipped: too many inputs", ctype)
            continue
        out[ctype] = TypeInfo(ctype, tuple(c.name for c in cells), tt.input_pins, tt)
    return out


def _by_pins(types: Mapping[str, TypeInfo]) -> dict:
    groups: dict = {}
    for t in types.values():
        groups.setdefault(t.input_pins, []).append(t.name)
    return {k: sorted(v) for k, v in sorted(groups.items())}


# --------------------------------------------------------------------------
# test records


@dataclass(frozen=True)
class InvertingAnalogyTest:
    given: tuple   # (X, X_bar)
    probe: str     # Y
    answer: str    # Y_bar
    kind: str = "inverting"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "given": list(self.given), "probe": self.probe, "answer": self.answer}

    @classmethod
    def from_dict(cls, d) -> "InvertingAnalogyTest":
        return cls(tuple(d["given"]), d["probe"], d["answer"])


@dataclass(frozen=True)
class FunctionalSimilarityTest:
    anchor: str
    candidates: tuple  # (A, B), lexicographic
    answer: str
    difficulty: str
    margin: float
    kind: str = "funsim"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "anchor": self.anchor, "candidates": list(self.candidates),
                "answer": self.answer, "difficulty": self.difficulty, "margin": self.margin}

    @classmethod
    def from_dict(cls, d) -> "FunctionalSimilarityTest":
        return cls(d["anchor"], tuple(d["candidates"]), d["answer"], d["difficulty"], d["margin"])


@dataclass(frozen=True)
class ElectricalSimilarityTest:
    property: str
    query_arc: tuple
    candidate_type: str
    candidates: tuple   # arc ids, lexicographic
    answer_arc: tuple
    distance: float
    kind: str = "electrical"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "property": self.property, "query_arc": list(self.query_arc),
                "candidate_type": self.candidate_type, "candidates": [list(c) for c in self.candidates],
                "answer_arc": list(self.answer_arc), "distance": self.distance}

    @classmethod
    def from_dict(cls, d) -> "ElectricalSimilarityTest":
        return cls(d["property"], tuple(d["query_arc"]), d["candidate_type"],
                   tuple(tuple(c) for c in d["candidates"]), tuple(d["answer_arc"]), d["distance"])


# --------------------------------------------------------------------------
# generation


def polarity_key(tt: boolfn.TruthTable) -> int:
    """1 when the function outputs 1 on the all-ones assignment (the non-inverted side)."""
    return tt.bits[-1]


def inverting_pairs(types: Mapping[str, TypeInfo]) -> list:
    """Complementary type pairs, oriented (non-inverted, inverted), sorted."""
    pairs = []
    for names in _by_pins(types).values():
        for a, b in itertools.combinations(names, 2):
            ta, tb = types[a].table, types[b].table
            if boolfn.is_inverting_pair(ta, tb):
                pairs.append((a, b) if polarity_key(ta) >= polarity_key(tb) else (b, a))
    return sorted(pairs)


def generate_inverting_tests(lib_or_types) -> list:
    types = lib_or_types if isinstance(lib_or_types, Mapping) else functional_types(lib_or_types)
    pairs = inverting_pairs(types)
    tests = []
    for (x, xb), (y, yb) in itertools.permutations(pairs, 2):
        if {x, xb} & {y, yb}:
            # a type shared by two pairs would leave no valid candidate for the answer
            continue
        tests.append(InvertingAnalogyTest((x, xb), y, yb))
    return tests


def generate_funsim_tests(lib_or_types) -> list:
    types = lib_or_types if isinstance(lib_or_types, Mapping) else functional_types(lib_or_types)
    tests = []
    for names in _by_pins(types).values():
        for c in names:
            others = [n for n in names if n != c]
            for a, b in itertools.combinations(others, 2):
                sa = boolfn.fun_sim(types[a].table, types[c].table)
                sb = boolfn.fun_sim(types[b].table, types[c].table)
                margin = abs(sb - sa)
                if margin == 0:
                    continue
                tests.append(FunctionalSimilarityTest(
                    c, (a, b), a if sa > sb else b,
                    "easy" if margin >= EASY_MARGIN else "hard", margin))
    return tests


def _is_asap7_corpus(lib: Library) -> bool:
    return (len(lib.cells), len(lib.cell_types())) == ASAP7_CORPUS_SHAPE


def nearest_arc(query: np.ndarray, candidates: Sequence[tuple], vectors: Mapping) -> tuple:
    """(arc id, distance) of the closest candidate; ties go to the lexicographically first."""
    best = None
    for cand in sorted(candidates):
        d = float(np.linalg.norm(vectors[cand] - query))
        if best is None or d < best[1]:
            best = (cand, d)
    return best


def generate_electrical_tests(lib: Library, grid: ConditionGrid, seed: int = 0,
                              cap: Optional[int] = DEFAULT_ELECTRICAL_CAP, min_candidates: int = 2,
                              properties: Sequence[Property] = PROPERTIES,
                              warnings: Optional[list] = None) -> list:
    """Nearest-arc tests per property; answers found by exhaustive distance search."""
    tests = []
    asap7 = _is_asap7_corpus(lib)
    for prop in properties:
        vectors = response_vectors(lib, prop, grid, warnings)
        by_type: dict = {}
        for aid in sorted(vectors):
            by_type.setdefault(lib.cells[aid[0]].cell_type, []).append(aid)
        cand_types = [t for t, arcs in sorted(by_type.items()) if len(arcs) >= min_candidates]
        eligible = [(q, t) for q in sorted(vectors) for t in cand_types
                    if t != lib.cells[q[0]].cell_type]
        limit = cap
        if asap7:
            limit = ASAP7_ELECTRICAL_COUNTS[prop.index]
        if limit is not None and len(eligible) > limit:
            rng = np.random.default_rng([seed, prop.index])
            pick = np.sort(rng.choice(len(eligible), size=limit, replace=False))
            eligible = [eligible[i] for i in pick]
        for q, t in eligible:
            cands = tuple(by_type[t])
            ans, dist = nearest_arc(vectors[q], cands, vectors)
            tests.append(ElectricalSimilarityTest(prop.value, q, t, cands, ans, dist))
        log.info("%s: %d electrical tests", prop.value, sum(1 for x in tests if x.property == prop.value))
    return tests


# --------------------------------------------------------------------------
# scoring


def _vec(vectors: Mapping, key):
    try:
        return np.asarray(vectors[key], dtype=float)
    except KeyError:
        raise MissingVector(f"no vector for {key!r}") from None


def analogy_ranking(type_vectors: Mapping[str, np.ndarray], x: str, xb: str, y: str) -> list:
    """Types sorted by distance to vec(xb) - vec(x) + vec(y), excluding the three query types."""
    target = _vec(type_vectors, xb) - _vec(type_vectors, x) + _vec(type_vectors, y)
    names = sorted(n for n in type_vectors if n not in (x, xb, y))
    if not names:
        return []
    mat = np.stack([_vec(type_vectors, n) for n in names])
    dist = np.linalg.norm(mat - target, axis=1)
    order = np.lexsort((np.arange(len(names)), dist))
    return [names[i] for i in order]


def score_inverting(tests: Sequence[InvertingAnalogyTest], type_vectors: Mapping, k: int) -> float:
    if not tests:
        return float("nan")
    hits = 0
    for t in tests:
        _vec(type_vectors, t.answer)
        ranking = analogy_ranking(type_vectors, t.given[0], t.given[1], t.probe)
        hits += t.answer in ranking[:k]
    return hits / len(tests)


def funsim_prediction(t: FunctionalSimilarityTest, type_vectors: Mapping) -> str:
    c = _vec(type_vectors, t.anchor)
    a, b = t.candidates
    da = np.linalg.norm(_vec(type_vectors, a) - c)
    db = np.linalg.norm(_vec(type_vectors, b) - c)
    return b if db < da else a


def score_funsim(tests: Sequence[FunctionalSimilarityTest], type_vectors: Mapping) -> dict:
    """Accuracy for easy, hard and all tests (NaN where a group is empty)."""
    out = {}
    for group in ("easy", "hard", "all"):
        sel = [t for t in tests if group == "all" or t.difficulty == group]
        if not sel:
            out[group] = float("nan")
            continue
        out[group] = sum(funsim_prediction(t, type_vectors) == t.answer for t in sel) / len(sel)
    return out


def arc_rank(t: ElectricalSimilarityTest, arc_vectors: Mapping) -> int:
    """0-based rank of the answer among the candidates by distance to the query."""
    q = _vec(arc_vectors, (*t.query_arc, t.property))
    cands = sorted(t.candidates)
    dist = np.array([np.linalg.norm(_vec(arc_vectors, (*c, t.property)) - q) for c in cands])
    order = np.lexsort((np.arange(len(cands)), dist))
    ranked = [cands[i] for i in order]
    return ranked.index(tuple(t.answer_arc))


def score_electrical(tests: Sequence[ElectricalSimilarityTest], arc_vectors: Mapping, k: int) -> dict:
    """Top-k accuracy per property, plus macro (mean of properties) and micro (all tests)."""
    per: dict = {}
    for t in tests:
        per.setdefault(t.property, []).append(arc_rank(t, arc_vectors) < k)
    out = {p.value: float(np.mean(per[p.value])) for p in PROPERTIES if p.value in per}
    out["macro"] = float(np.mean(list(out.values()))) if out else float("nan")
    allhits = [h for hs in per.values() for h in hs]
    out["micro"] = float(np.mean(allhits)) if allhits else float("nan")
    return out


def random_baseline_inverting(num_types: int, k: int) -> float:
    return min(k, num_types - 3) / (num_types - 3)


def random_baseline_electrical(tests: Sequence[ElectricalSimilarityTest], k: int) -> float:
    return float(np.mean([min(k, len(t.candidates)) / len(t.candidates) for t in tests]))


# --------------------------------------------------------------------------
# serialization


@dataclass
class TestSuite:
    inverting: list = field(default_factory=list)
    funsim: list = field(default_factory=list)
    electrical: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def counts(self) -> dict:
        elec: dict = {p.value: 0 for p in PROPERTIES}
        for t in self.electrical:
            elec[t.property] += 1
        return {
            "inverting": len(self.inverting),
            "funsim_easy": sum(t.difficulty == "easy" for t in self.funsim),
            "funsim_hard": sum(t.difficulty == "hard" for t in self.funsim),
            "electrical": elec,
        }


_FILES = {"inverting": InvertingAnalogyTest, "funsim": FunctionalSimilarityTest,
          "electrical": ElectricalSimilarityTest}


def generate_all(lib: Library, grid: ConditionGrid, seed: int = 0,
                 cap: Optional[int] = DEFAULT_ELECTRICAL_CAP) -> TestSuite:
    types = functional_types(lib)
    warnings: list = []
    suite = TestSuite(
        inverting=generate_inverting_tests(types),
        funsim=generate_funsim_tests(types),
        electrical=generate_electrical_tests(lib, grid, seed=seed, cap=cap, warnings=warnings),
    )
    suite.meta = {
        "schema": SCHEMA,
        "seed": seed,
        "grid": list(grid.shape),
        "num_types": len(types),
        "functional_types": sorted(types),
        "counts": suite.counts(),
        "warnings": warnings,
    }
    return suite


def write_suite(suite: TestSuite, out_dir) -> None:
    from ._io import atomic_write_text

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in _FILES:
        lines = [json.dumps(t.to_dict(), sort_keys=True) for t in getattr(suite, name)]
        atomic_write_text(out / f"{name}.jsonl", "".join(l + "\n" for l in lines))
    atomic_write_text(out / "meta.json", json.dumps(suite.meta, indent=2, sort_keys=True) + "\n")


def read_suite(in_dir) -> TestSuite:
    src = Path(in_dir)
    meta = json.loads((src / "meta.json").read_text())
    if meta.get("schema") != SCHEMA:
        raise TestGenError(f"unsupported test schema {meta.get('schema')!r}")
    suite = TestSuite(meta=meta)
    for name, cls in _FILES.items():
        path = src / f"{name}.jsonl"
        if path.exists():
            setattr(suite, name, [cls.from_dict(json.loads(l)) for l in path.read_text().splitlines() if l])
    return suite
