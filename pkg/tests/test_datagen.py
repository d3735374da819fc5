import dataclasses
import json
import math

import numpy as np
import pytest

from lib2vec import boolfn, datagen, liberty, testgen
from lib2vec.liberty import PROPERTIES, LookupTable2D


def _func_index(out):
    return {(e.cell, e.assignment): e.target for e in out}


def test_and2_example(toy_lib):
    out, diff, _ = datagen.gen_functional(toy_lib)
    and2 = next(c for c in toy_lib.cells if toy_lib.cells[c].cell_type == "AND2")
    xor2 = next(c for c in toy_lib.cells if toy_lib.cells[c].cell_type == "XOR2")
    (a, b) = toy_lib.cells[and2].input_pins
    row = ((a, 1), (b, 0))
    assert _func_index(out)[(and2, row)] == 0
    hits = [e for e in diff if {e.cell_a, e.cell_b} == {and2, xor2} and e.assignment == row]
    assert len(hits) == 1
    e = hits[0]
    assert e.target == (-1 if e.cell_a == and2 else 1)


def test_funcout_is_exhaustive_and_labels_match_eval(toy_lib):
    out, _, skipped = datagen.gen_functional(toy_lib)
    assert sum(skipped.values()) == 0
    per_cell = {}
    for e in out:
        per_cell.setdefault(e.cell, []).append(e)
        expr = toy_lib.cells[e.cell].function()
        assert e.target == boolfn.evaluate(expr, dict(e.assignment))
    assert set(per_cell) == set(toy_lib.cells)
    for name, rows in per_cell.items():
        n = len(toy_lib.cells[name].input_pins)
        assert len(rows) == 2 ** n
        assert len({r.assignment for r in rows}) == 2 ** n


def test_funcdiff_consistent_with_funcout(toy_lib):
    out, diff, _ = datagen.gen_functional(toy_lib)
    index = _func_index(out)
    assert diff
    for e in diff:
        assert e.cell_a != e.cell_b
        assert e.target == index[(e.cell_a, e.assignment)] - index[(e.cell_b, e.assignment)]


def test_funcdiff_covers_all_same_pin_pairs(toy_lib):
    _, diff, _ = datagen.gen_functional(toy_lib, pair_cap=None)
    groups = {}
    for c in toy_lib.cells.values():
        groups.setdefault(tuple(sorted(c.input_pins)), []).append(c.name)
    expected = sum(len(m) * (len(m) - 1) // 2 * 2 ** len(k) for k, m in groups.items())
    assert len(diff) == expected


def test_same_function_pairs_give_zero_difference(toy_lib):
    # two drive strengths of one type are a self-pair in function
    _, diff, _ = datagen.gen_functional(toy_lib)
    types = {n: c.cell_type for n, c in toy_lib.cells.items()}
    same = [e for e in diff if types[e.cell_a] == types[e.cell_b]]
    assert same
    assert all(e.target == 0 for e in same)


def test_pair_cap_is_seeded_sample(toy_lib):
    full = datagen.gen_functional(toy_lib, pair_cap=None)[1]
    a = datagen.gen_functional(toy_lib, seed=3, pair_cap=5)[1]
    b = datagen.gen_functional(toy_lib, seed=3, pair_cap=5)[1]
    c = datagen.gen_functional(toy_lib, seed=4, pair_cap=5)[1]
    pairs = lambda d: sorted({(e.cell_a, e.cell_b) for e in d})
    assert a == b
    assert len(pairs(a)) == 5
    assert set(pairs(a)) <= set(pairs(full))
    assert pairs(a) != pairs(c)


def test_sequential_and_multi_output_skipped(mini_text):
    lib = liberty.parse_liberty(mini_text)
    nand = lib.cells["NAND2x1_ASAP7_75t_R"]
    dff = dataclasses.replace(nand, name="DFFx1_ASAP7_75t_R", cell_type="DFF", sequential=True)
    ha = dataclasses.replace(nand, name="HAx1_ASAP7_75t_R", cell_type="HA",
                             output_pins=nand.output_pins + [("CON", boolfn.parse("A B"))])
    lib = liberty.Library("m", dict(lib.cells, **{dff.name: dff, ha.name: ha}))
    out, _, skipped = datagen.gen_functional(lib)
    assert skipped["sequential"] == 1
    assert skipped["multi_output"] == 1
    assert {e.cell for e in out} == {"INVx1_ASAP7_75t_R", "NAND2x1_ASAP7_75t_R"}


def _const_arc(arc, c):
    tables = {}
    for p, t in arc.tables.items():
        tables[p] = LookupTable2D(t.index1, t.index2, np.full_like(t.values, c))
    return liberty.TimingArcTables(arc.output_pin, arc.related_pin, tables)


def _two_cell_lib(demo_lib, make_second):
    cell = next(c for c in demo_lib.cells.values() if c.cell_type == "INV")
    second = dataclasses.replace(cell, name=cell.name.replace("INV", "INVB"),
                                 arcs=[make_second(a) for a in cell.arcs])
    return liberty.Library("pair", {cell.name: cell, second.name: second}), cell, second


def test_constant_table_gives_constant_log_target(demo_lib):
    lib, cell, _ = _two_cell_lib(demo_lib, lambda a: _const_arc(a, 2.5))
    lib = liberty.Library("one", {n: c for n, c in lib.cells.items() if n != cell.name})
    grid = testgen.build_condition_grid(lib, 5, 4)
    out, _ = datagen.gen_electrical(lib, grid)
    assert len(out) == len(PROPERTIES)
    for e in out:
        assert e.target.shape == (20,)
        assert np.allclose(e.target, math.log(2.5), rtol=0, atol=1e-12)


def test_scaled_tables_give_constant_log_difference(demo_lib):
    alpha = 1.7

    def scale(arc):
        return liberty.TimingArcTables(arc.output_pin, arc.related_pin,
                                       {p: t.scaled(alpha) for p, t in arc.tables.items()})

    lib, cell, second = _two_cell_lib(demo_lib, scale)
    grid = testgen.build_condition_grid(lib, 6, 6)
    _, diff = datagen.gen_electrical(lib, grid, partners=1)
    assert len(diff) == 2 * len(PROPERTIES)
    for e in diff:
        sign = 1.0 if e.arc_a[0] == second.name else -1.0
        assert np.allclose(e.target, sign * math.log(alpha), rtol=0, atol=1e-12)


def test_electrical_coverage_and_consistency(demo_lib, demo_grid):
    out, diff = datagen.gen_electrical(demo_lib, demo_grid, seed=1)
    arcs = {testgen.arc_id(c.name, a) for c, a in demo_lib.complete_arcs()}
    for prop in PROPERTIES:
        assert {e.arc for e in out if e.property == prop.value} == arcs
    index = {(e.arc, e.property): e.target for e in out}
    for e in out:
        assert e.target.shape == (len(demo_grid.conditions),)
        assert np.all(np.isfinite(e.target))
    per_arc = {}
    for e in diff:
        assert e.arc_a != e.arc_b
        assert np.array_equal(e.target, index[(e.arc_a, e.property)] - index[(e.arc_b, e.property)])
        per_arc[(e.arc_a, e.property)] = per_arc.get((e.arc_a, e.property), 0) + 1
    assert set(per_arc.values()) == {datagen.DEFAULT_ELEC_PARTNERS}


def test_electrical_twin_pair_is_zero(demo_lib):
    lib, _, _ = _two_cell_lib(demo_lib, lambda a: a)
    grid = testgen.build_condition_grid(lib, 4, 4)
    _, diff = datagen.gen_electrical(lib, grid, partners=1)
    assert len(diff) == 2 * len(PROPERTIES)
    assert all(not np.any(e.target) for e in diff)


def test_electrical_sampling_is_seeded(demo_lib, demo_grid):
    key = lambda d: [(e.arc_a, e.arc_b, e.property) for e in d]
    a = datagen.gen_electrical(demo_lib, demo_grid, seed=5)[1]
    b = datagen.gen_electrical(demo_lib, demo_grid, seed=5)[1]
    c = datagen.gen_electrical(demo_lib, demo_grid, seed=6)[1]
    assert key(a) == key(b)
    assert key(a) != key(c)


def test_failing_arc_is_excluded_with_warning(demo_lib):
    lib, cell, second = _two_cell_lib(demo_lib, lambda a: _const_arc(a, -1.0))
    grid = testgen.build_condition_grid(lib, 4, 4)
    warnings = []
    out, _ = datagen.gen_electrical(lib, grid, warnings=warnings)
    assert {e.arc[0] for e in out} == {cell.name}
    assert warnings and second.name in " ".join(map(str, warnings))


def _files(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


@pytest.mark.parametrize("sidecar", [False, True])
def test_write_read_roundtrip(demo_lib, demo_grid, tmp_path, sidecar):
    ds = datagen.generate(demo_lib, demo_grid, seed=2)
    datagen.write_datasets(ds, tmp_path, sidecar=sidecar)
    assert (tmp_path / "elec_targets.f32").exists() == sidecar
    back = datagen.read_datasets(tmp_path)
    assert back.func_out == ds.func_out
    assert back.func_diff == ds.func_diff
    assert len(back.elec_out) == len(ds.elec_out)
    for x, y in zip(back.elec_out, ds.elec_out):
        assert (x.arc, x.property) == (y.arc, y.property)
        tol = 1e-6 * np.abs(y.target).max() if sidecar else 0.0
        assert np.allclose(x.target, y.target, rtol=0, atol=tol)
    for x, y in zip(back.elec_diff, ds.elec_diff):
        assert (x.arc_a, x.arc_b, x.property) == (y.arc_a, y.arc_b, y.property)


def test_dataset_files_byte_identical(demo_lib, demo_grid, tmp_path):
    for run in ("a", "b"):
        ds = datagen.generate(demo_lib, demo_grid, seed=9)
        datagen.write_datasets(ds, tmp_path / run)
    assert _files(tmp_path / "a") == _files(tmp_path / "b")


def test_jsonl_line_shape(toy_lib, tmp_path):
    ds = datagen.generate(toy_lib, testgen.build_condition_grid(toy_lib, 3, 3))
    datagen.write_datasets(ds, tmp_path)
    rec = json.loads((tmp_path / "func_diff.jsonl").read_text().splitlines()[0])
    assert set(rec) == {"task", "cell", "output_pin", "pins", "target"}
    assert rec["task"] == "func_diff" and len(rec["cell"]) == 2
    rec = json.loads((tmp_path / "elec_out.jsonl").read_text().splitlines()[0])
    assert rec["task"] == "elec_out" and len(rec["target"]) == 9
