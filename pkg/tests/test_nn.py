import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from lib2vec import datagen, evalkit, liberty, nn

CELLS = ["C0", "C1", "C2"]
PINS = ["A", "B", "C", "Y"]
ROWS = [
    ("C0", "Y", (("A", 0),)),
    ("C1", "Y", (("A", 1), ("B", 0))),
    ("C2", "Y", (("A", 1), ("B", 1), ("C", 0))),
    ("C1", "Y", (("A", 0), ("B", 1))),
]
ARCS = [("C0", "Y", "A"), ("C1", "Y", "B"), ("C2", "Y", "C"), ("C1", "Y", "A")]
PROPS = ["rise_delay", "fall_transition", "rise_power", "fall_delay"]


def micro_func(seed=0):
    m = nn.FunctionalModel(CELLS, PINS, d=4, hidden=5, seed=seed)
    # spread the attention so the softmax path carries real gradient
    m.params["att.Wq"] *= 10.0
    m.params["att.Wk"] *= 10.0
    return m


def micro_elec(seed=0):
    return nn.ElectricalModel(CELLS, PINS, n_outputs=3, d=4, hidden=5, seed=seed)


def _func_out_loss(m):
    batch = m.encode(ROWS)
    y = np.array([0.0, 1.0, 1.0, 0.0])

    def f():
        grads = {}
        z, back = m.forward_out(batch, grads)
        loss, dz = nn.bce_with_logits(z, y)
        back(dz)
        return loss, grads
    return f


def _func_diff_loss(m):
    a = m.encode(ROWS)
    b = m.encode([(c, o, r) for (_, o, r), c in zip(ROWS, ["C2", "C0", "C1", "C0"])])
    cls = np.array([0, 1, 2, 1])

    def f():
        grads = {}
        z, back = m.forward_diff(a, b, grads)
        loss, dz = nn.cross_entropy(z, cls)
        back(dz)
        return loss, grads
    return f


def _elec_out_loss(m):
    batch = m.encode(list(zip(ARCS, PROPS)))
    t = np.random.default_rng(1).normal(size=(4, 3))

    def f():
        grads = {}
        y, back = m.forward_out(batch, grads)
        loss, dy = nn.mse(y, t)
        back(dy)
        return loss, grads
    return f


def _elec_diff_loss(m):
    a = m.encode(list(zip(ARCS, PROPS)))
    b = m.encode(list(zip(ARCS[::-1], PROPS)))
    t = np.random.default_rng(2).normal(size=(4, 3))

    def f():
        grads = {}
        y, back = m.forward_diff(a, b, grads)
        loss, dy = nn.mse(y, t)
        back(dy)
        return loss, grads
    return f


PATHS = {
    "func_out": (micro_func, _func_out_loss),
    "func_diff": (micro_func, _func_diff_loss),
    "elec_out": (micro_elec, _elec_out_loss),
    "elec_diff": (micro_elec, _elec_diff_loss),
}


@pytest.mark.parametrize("path", sorted(PATHS))
@pytest.mark.parametrize("seed", [0, 1])
def test_gradients_match_finite_differences(path, seed):
    make, loss = PATHS[path]
    m = make(seed)
    f = loss(m)
    _, grads = f()
    report = nn.finite_difference_check(m.params, f, h=1e-4)
    worst = max(report.values())
    assert worst < 1e-4, {k: v for k, v in report.items() if v >= 1e-4}
    # every parameter the path uses receives a gradient
    if path.startswith("func"):
        head = "func_out" if path == "func_out" else "diff"
        used = [k for k in m.params if k.startswith((head, "att", "cell_emb", "pin_emb", "value_emb"))]
    else:
        head = "elec_out" if path == "elec_out" else "diff"
        used = [k for k in m.params if not k.startswith(("func_out", "elec_out", "diff"))
                or k.startswith(head)]
    assert set(used) <= set(grads)


@settings(max_examples=50, deadline=None)
@given(
    tokens=hnp.arrays(np.float64, (3, 5, 4), elements=st.floats(-30, 30)),
    mask_bits=hnp.arrays(np.bool_, (3, 5)),
)
def test_attention_weights_are_a_distribution(tokens, mask_bits):
    mask = mask_bits.copy()
    mask[:, 0] = True
    rng = np.random.default_rng(0)
    params = {f"att.{w}": rng.normal(size=(4, 4)) for w in ("Wq", "Wk", "Wv")}
    _, a, _ = nn.attention(params, {}, "att", tokens[:, 0], tokens, mask)
    assert np.all(a >= 0)
    assert np.all(a[~mask] == 0)
    assert np.allclose(a.sum(axis=1), 1.0, atol=1e-6)


def test_single_token_attention_returns_value_projection():
    rng = np.random.default_rng(3)
    params = {f"att.{w}": rng.normal(size=(4, 4)) for w in ("Wq", "Wk", "Wv")}
    tok = rng.normal(size=(2, 1, 4))
    out, a, _ = nn.attention(params, {}, "att", rng.normal(size=(2, 4)), tok)
    assert np.array_equal(a, np.ones((2, 1)))
    assert np.allclose(out, tok[:, 0] @ params["att.Wv"])


def test_zero_value_projection_makes_logit_independent_of_attention():
    m = micro_func()
    m.params["att.Wv"][:] = 0.0
    batch = m.encode(ROWS)
    z0, _ = m.forward_out(batch)
    m.params["att.Wq"] = np.random.default_rng(9).normal(size=(4, 4)) * 5
    z1, _ = m.forward_out(batch)
    assert np.allclose(z0, z1)
    assert np.allclose(z0, z0[0])


def test_functional_diff_self_pair_equals_head_at_zero():
    m = micro_func()
    batch = m.encode(ROWS)
    logits, _ = m.forward_diff(batch, batch)
    at_zero, _ = nn.fcl2(m.params, {}, "diff", np.zeros((1, 4)))
    assert np.allclose(logits, at_zero)


def test_electrical_diff_self_pair_equals_head_at_zero():
    m = micro_elec()
    batch = m.encode(list(zip(ARCS, PROPS)))
    y, _ = m.forward_diff(batch, batch)
    at_zero, _ = nn.fcl2(m.params, {}, "diff", np.zeros((1, 4)))
    assert np.allclose(y, at_zero)


def test_pin_embedding_is_shared_across_cells():
    m = micro_func()
    using_b = [r for r in ROWS if any(p == "B" for p, _ in r[2])]
    without_b = [r for r in ROWS if all(p != "B" for p, _ in r[2])]
    before_b, _ = m.forward_out(m.encode(using_b))
    before_o, _ = m.forward_out(m.encode(without_b))
    m.params["pin_emb"][m.pin_ix["B"]] += 0.5
    after_b, _ = m.forward_out(m.encode(using_b))
    after_o, _ = m.forward_out(m.encode(without_b))
    assert len({r[0] for r in using_b}) >= 2
    assert np.all(before_b != after_b)
    assert np.array_equal(before_o, after_o)


def test_no_parameter_aliases_another():
    for m in (micro_func(), micro_elec()):
        names = sorted(m.params)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                assert not np.shares_memory(m.params[a], m.params[b]), (a, b)


def test_electrical_related_pin_enters_only_through_its_token():
    m = micro_elec()
    a, b = ("C1", "Y", "A"), ("C1", "Y", "B")
    ya, yb = m.forward_electrical(a, "rise_delay"), m.forward_electrical(b, "rise_delay")
    assert not np.allclose(ya, yb)
    m.params["pin_emb"][m.pin_ix["B"]] = m.params["pin_emb"][m.pin_ix["A"]]
    assert np.array_equal(m.forward_electrical(a, "rise_delay"), m.forward_electrical(b, "rise_delay"))


def test_electrical_output_width_and_determinism():
    m = nn.ElectricalModel(CELLS, PINS, n_outputs=256, d=4, hidden=5)
    y1 = m.forward_electrical(ARCS[0], "rise_power")
    y2 = m.forward_electrical(ARCS[0], "rise_power")
    assert y1.shape == (256,)
    assert y1.tobytes() == y2.tobytes()
    assert m.arc_vectors(ARCS, "rise_delay").shape == (4, 4)


def test_unknown_tokens_raise():
    m = micro_func()
    with pytest.raises(nn.UnknownToken):
        m.forward_functional("NOPE", "Y", {"A": 1})
    with pytest.raises(nn.UnknownToken):
        m.forward_functional("C0", "Y", {"Q": 1})
    with pytest.raises(nn.UnknownToken):
        micro_elec().forward_electrical(("C0", "Y", "A"), "leakage")


def test_loss_values():
    t = np.array([[0.3, -1.0], [2.0, 0.5]])
    assert nn.mse(t, t)[0] == 0.0
    loss, _ = nn.cross_entropy(np.zeros((4, 3)), np.array([0, 1, 2, 0]))
    assert loss == pytest.approx(math.log(3))
    loss, _ = nn.bce_with_logits(np.zeros(3), np.array([0.0, 1.0, 1.0]))
    assert loss == pytest.approx(math.log(2))
    # stable at extreme logits
    loss, g = nn.bce_with_logits(np.array([800.0, -800.0]), np.array([1.0, 0.0]))
    assert loss == pytest.approx(0.0) and np.all(np.isfinite(g))


def test_non_finite_loss_aborts():
    nn.check_finite(1.0, "ok")
    with pytest.raises(nn.NonFiniteLoss, match="epoch 3"):
        nn.check_finite(float("nan"), "epoch 3 batch 1")


def test_small_step_descent_on_fixed_batch():
    m = micro_func()
    f = _func_out_loss(m)
    opt = nn.Adam(m.params, lr=1e-3)
    losses = []
    for _ in range(100):
        loss, grads = f()
        losses.append(loss)
        opt.step(m.params, grads)
    assert np.all(np.diff(losses) < 0)


def test_restarts_keep_the_lowest_loss_run(toy_lib):
    ds = _five_cell_data(toy_lib)
    s = evalkit.TrainSettings(**{**FIVE.__dict__, "epochs": 20, "restarts": 3})
    best = evalkit.train_functional(ds, s)
    losses = []
    for r in range(3):
        m = evalkit._train_functional_once(ds, s, evalkit.restart_seed(s.seed, r), 0).model
        losses.append(evalkit.functional_loss(m, ds))
    assert best.history[-1]["final_loss"] == min(losses)
    assert evalkit.functional_loss(best.model, ds) == min(losses)


def test_weight_decay_shrinks_untouched_tensors():
    params = {"w": np.ones(3)}
    opt = nn.Adam(params, lr=0.1, decay={"w": 0.5})
    opt.step(params, {})
    assert np.allclose(params["w"], 0.95)


def _five_cell_data(toy_lib):
    keep = ["AND2x1_ASAP7_75t_R", "BUFx2_ASAP7_75t_R", "INVx1_ASAP7_75t_R",
            "OR2x1_ASAP7_75t_R", "XOR2x1_ASAP7_75t_R"]
    lib = liberty.Library("five", {k: toy_lib.cells[k] for k in keep})
    return datagen.generate(lib, None, seed=0)


FIVE = evalkit.TrainSettings(d=16, hidden=32, epochs=500, lr=3e-2, batch=4, seed=0,
                             weight_decay=0.03, cosine=True, restarts=4)


def test_five_cell_library_is_fit_exactly(toy_lib):
    ds = _five_cell_data(toy_lib)
    m = evalkit.train_functional(ds, FIVE).model
    assert evalkit.functional_accuracy(m, ds) == 1.0
    # the two worked examples: AND2(A=1, B=0) -> 0 and AND2 - XOR2 -> -1
    assert m.forward_functional("AND2x1_ASAP7_75t_R", "Y", {"A": 1, "B": 0}) < 0
    a = m.encode([("AND2x1_ASAP7_75t_R", "Y", (("A", 1), ("B", 0)))])
    b = m.encode([("XOR2x1_ASAP7_75t_R", "Y", (("A", 1), ("B", 0)))])
    logits, _ = m.forward_diff(a, b)
    assert nn.DIFF_CLASSES[int(logits.argmax())] == -1


def test_training_is_deterministic(toy_lib):
    ds = _five_cell_data(toy_lib)
    s = evalkit.TrainSettings(**{**FIVE.__dict__, "epochs": 5, "restarts": 2})
    a = evalkit.train_functional(ds, s).model.params
    b = evalkit.train_functional(ds, s).model.params
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)


@pytest.mark.parametrize("make", [micro_func, micro_elec])
def test_checkpoint_roundtrip(make, tmp_path):
    m = make(4)
    path = tmp_path / "m.ckpt"
    nn.save_checkpoint(m, path, extra={"note": "x"})
    back, manifest = nn.load_checkpoint(path)
    assert manifest["extra"] == {"note": "x"}
    assert back.config() == m.config()
    assert back.cells == m.cells and back.pins == m.pins
    for k, v in m.params.items():
        assert np.array_equal(back.params[k], v.astype(np.float32))
    nn.save_checkpoint(back, tmp_path / "again.ckpt")
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    m = micro_func()
    path = tmp_path / "m.ckpt"
    nn.save_checkpoint(m, path)
    path.write_bytes(b"nope" + path.read_bytes()[4:])
    with pytest.raises(nn.NNError):
        nn.load_checkpoint(path)
