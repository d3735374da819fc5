import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ortho_group

from lib2vec import datagen, evalkit, testgen
from lib2vec.config import RunConfig


def _random_vectors(names, d, seed):
    rng = np.random.default_rng(seed)
    return {n: rng.normal(size=d) for n in names}


def _toy_types(toy_lib):
    return {n: c.cell_type for n, c in toy_lib.cells.items()}


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 10_000))
def test_centroid_is_member_mean(n_types, per_type, seed):
    cells = {f"T{t}x{i}": f"T{t}" for t in range(n_types) for i in range(per_type)}
    vecs = _random_vectors(cells, 4, seed)
    cent = evalkit.type_centroids(vecs, cells)
    assert sorted(cent) == sorted(set(cells.values()))
    for t, v in cent.items():
        members = [vecs[c] for c, tt in cells.items() if tt == t]
        assert np.allclose(v, sum(members) / len(members), rtol=0, atol=1e-12)


def _additive_type_vectors(toy_lib):
    """Family base vectors plus a shared inversion offset: analogies hold exactly."""
    types = testgen.functional_types(toy_lib)
    pairs = testgen.inverting_pairs(types)
    d = len(pairs) + 2
    vecs = {}
    for i, (pos, neg) in enumerate(pairs):
        base = np.zeros(d)
        base[i] = 10.0
        vecs[pos] = base.copy()
        vecs[neg] = base.copy()
        vecs[neg][-1] = 1.0
    return vecs


def test_exact_additive_structure_scores_rank_one(toy_lib):
    vecs = _additive_type_vectors(toy_lib)
    tests = testgen.generate_inverting_tests(toy_lib)
    assert tests
    assert testgen.score_inverting(tests, vecs, 1) == 1.0
    for t in tests:
        assert evalkit.analogy(vecs, *t.given, t.probe)[0] == t.answer


def test_degenerate_analogy_ranks_by_distance_to_probe():
    vecs = _random_vectors(list("ABCDEFG"), 3, 4)
    ranked = evalkit.analogy(vecs, "A", "A", "B")
    expect = sorted((n for n in vecs if n not in "AB"), key=lambda n: np.linalg.norm(vecs[n] - vecs["B"]))
    assert ranked == expect


def test_analogy_missing_vector():
    with pytest.raises(testgen.MissingVector):
        evalkit.analogy({"A": np.zeros(2), "B": np.ones(2)}, "A", "Z", "B")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_analogy_invariant_under_rigid_motion(seed):
    names = [f"T{i}" for i in range(8)]
    vecs = _random_vectors(names, 5, seed)
    q = ortho_group.rvs(5, random_state=seed)
    shift = np.random.default_rng(seed + 1).normal(size=5) * 3
    moved = {n: q @ v + shift for n, v in vecs.items()}
    assert evalkit.analogy(vecs, "T0", "T1", "T2") == evalkit.analogy(moved, "T0", "T1", "T2")


def test_export_shape_and_stability(tmp_path):
    cells = {"INVx1": "INV", "INVx2": "INV", "BUFx2": "BUF"}
    vecs = _random_vectors(cells, 4, 0)
    report = evalkit.EmbeddingReport(4, vecs, evalkit.type_centroids(vecs, cells), {}, cells)
    paths = evalkit.export_vectors(report, tmp_path / "a")
    text = (tmp_path / "a" / "functional_cells.csv").read_text(encoding="utf-8")
    lines = text.splitlines()
    assert lines[0] == "name,type,v0,v1,v2,v3"
    assert len(lines) == 4
    assert all(len(l.split(",")) == 6 for l in lines)
    assert [l.split(",")[0] for l in lines[1:]] == sorted(cells)
    again = evalkit.export_vectors(report, tmp_path / "b")
    for p, q in zip(paths, again):
        assert p.read_bytes() == q.read_bytes()


def test_export_error_carries_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    report = evalkit.EmbeddingReport(2, {"A": np.zeros(2)}, {"A": np.zeros(2)}, {}, {"A": "A"})
    with pytest.raises(OSError, match="file"):
        evalkit.export_vectors(report, blocker / "sub")


def test_csv_roundtrip_rescoring_matches(toy_lib, tmp_path):
    cell_types = _toy_types(toy_lib)
    vecs = _random_vectors(cell_types, 16, 11)
    report = evalkit.EmbeddingReport(16, vecs, evalkit.type_centroids(vecs, cell_types), {}, cell_types)
    evalkit.export_vectors(report, tmp_path)
    back = evalkit.read_vectors_csv(tmp_path / "functional_types.csv")
    for k, v in report.type_vectors.items():
        assert np.array_equal(back[k], v)
    tests = testgen.generate_funsim_tests(toy_lib)
    assert testgen.score_funsim(tests, back) == testgen.score_funsim(tests, report.type_vectors)
    inv = testgen.generate_inverting_tests(toy_lib)
    assert testgen.score_inverting(inv, back, 3) == testgen.score_inverting(inv, report.type_vectors, 3)


def test_arc_vectors_shape_and_identity(demo_lib, demo_grid):
    from lib2vec import nn

    ds = datagen.generate(demo_lib, testgen.build_condition_grid(demo_lib, 3, 3))
    cells, pins = evalkit.electrical_vocab(ds)
    m = nn.ElectricalModel(cells, pins, 9, d=8, hidden=6)
    arc = ds.elec_out[0].arc
    v = evalkit.arc_vector(m, arc, "rise_delay")
    assert v.shape == (8,)
    assert np.array_equal(v, evalkit.arc_vector(m, tuple(arc), "rise_delay"))
    allv = evalkit.all_arc_vectors(m, {"rise_delay": [arc, arc]})
    assert list(allv) == [(*arc, "rise_delay")]
    assert np.allclose(allv[(*arc, "rise_delay")], v)


def _small_config(**kw):
    base = dict(d=8, hidden=16, epochs_functional=5, epochs_electrical=3, lr=1e-2, batch=32, seed=0)
    base.update(kw)
    return RunConfig(**base).validate()


def test_empty_electrical_dataset_is_skipped_with_warning(toy_lib, caplog):
    ds = datagen.generate(toy_lib, None)
    assert not ds.elec_out
    with caplog.at_level(logging.WARNING):
        out = evalkit.train(_small_config(), ds)
    assert out["electrical"] is None
    assert out["functional"] is not None
    assert any("electrical" in r.getMessage() for r in caplog.records)
    rep = out["report"]
    assert rep.arc_vectors == {}
    assert set(rep.cell_vectors) == set(toy_lib.cells)
    assert all(v.shape == (8,) for v in rep.cell_vectors.values())


def test_report_is_deterministic_and_hashes_track_inputs(demo_lib):
    grid = testgen.build_condition_grid(demo_lib, 3, 3)
    ds = datagen.generate(demo_lib, grid, seed=0)
    a = evalkit.train(_small_config(), ds)["report"].to_dict()
    b = evalkit.train(_small_config(), ds)["report"].to_dict()
    assert a == b
    assert a["arcs"] and all(len(r["vector"]) == 8 for r in a["arcs"])
    c = evalkit.train(_small_config(seed=1), ds)["report"].to_dict()
    assert c["metadata"]["config_hash"] != a["metadata"]["config_hash"]
    assert c["metadata"]["dataset_hash"] == a["metadata"]["dataset_hash"]
    ds2 = datagen.generate(demo_lib, grid, seed=0, partners=2)
    assert evalkit.dataset_hash(ds2) != a["metadata"]["dataset_hash"]
    back = evalkit.EmbeddingReport.from_dict(a)
    assert back.to_dict() == a


def test_non_finite_loss_names_the_step(toy_lib):
    from lib2vec import nn

    ds = datagen.generate(toy_lib, None)
    s = evalkit.TrainSettings(d=4, hidden=4, epochs=2, lr=1e300, batch=8)
    with pytest.raises(nn.NonFiniteLoss, match="epoch"):
        with np.errstate(all="ignore"):
            evalkit.train_functional(ds, s)


def test_evaluate_rows_include_baselines(toy_lib):
    suite = testgen.TestSuite(inverting=testgen.generate_inverting_tests(toy_lib),
                              funsim=testgen.generate_funsim_tests(toy_lib))
    tv = _random_vectors(sorted(set(_toy_types(toy_lib).values())), 6, 2)
    scores = evalkit.evaluate(suite, tv, {}, ks=(1, 3))
    rows = evalkit.score_rows(scores)
    assert ("funsim", "easy", scores["funsim"]["easy"], 0.5) in rows
    m = len(tv)
    assert scores["inverting_random"]["top3"] == pytest.approx(3 / (m - 3))


@pytest.mark.parametrize("name,strength", [
    ("INVx1_ASAP7_75t_R", 1.0), ("INVx13_ASAP7_75t_SL", 13.0), ("INVxp33_ASAP7_75t_R", 0.33),
    ("INVxp67_ASAP7_75t_L", 0.67), ("BUFx12f_ASAP7_75t_R", 12.0),
])
def test_drive_strength_parse(name, strength):
    assert evalkit.drive_strength(name) == pytest.approx(strength)


def test_drive_strength_ordering_on_monotone_curve():
    names = ["INVxp33_X", "INVx1_X", "INVx2_X", "INVx4_X", "INVx8_X"]
    t = np.log([evalkit.drive_strength(n) for n in names])
    vecs = {(n, "Y", "A", "rise_delay"): np.array([t_, 0.2 * np.exp(t_), 0.1 * np.sin(t_)])
            for n, t_ in zip(names, t)}
    types = {n: "INV" for n in names}
    assert evalkit.drive_strength_ordering(vecs, types) == pytest.approx(1.0)


def test_pca_sign_is_deterministic():
    x = np.random.default_rng(0).normal(size=(10, 4))
    a = evalkit.pca(x, 2)
    b = evalkit.pca(-x, 2)
    assert np.allclose(np.abs(a), np.abs(b))
    # flipping the data flips the scores but not the component orientation rule
    assert np.allclose(a, -b) or np.allclose(a, b)
