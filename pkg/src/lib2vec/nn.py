"""Attention-based cell embedding models with hand-written reverse-mode gradients.

Both models keep their learnable tensors in a flat ``params`` dict. Every forward
helper returns ``(output, backward)`` where ``backward(grad_output)`` accumulates
parameter gradients into a dict and returns nothing; chaining these closures is
the whole autodiff machinery.

Functional model::

    tokens = [cell] + [pin_i + value_i for each input pin] + [output pin]
    emb    = Attention(query=output pin, tokens)
    logit  = FuncOutFCL(emb)                 # P(output = 1)
    diff   = DiffFCL(emb_a - emb_b)          # 3-way logits over {-1, 0, 1}

Electrical model::

    p_cell = PropertyFCL([cell ; property])
    arc    = Attention(query=p_cell, tokens=[p_cell, input pin, output pin])
    pred   = ElecOutFCL(arc)                 # one value per grid condition
    diff   = DiffFCL(arc_a - arc_b)
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .liberty import PROPERTIES

CHECKPOINT_MAGIC = b"L2VCKPT\x00"
CHECKPOINT_VERSION = 1
DIFF_CLASSES = (-1, 0, 1)


class NNError(Exception):
    pass


class UnknownToken(NNError, KeyError):
    pass


class NonFiniteLoss(NNError, FloatingPointError):
    pass


# --------------------------------------------------------------------------
# building blocks


def _acc(grads: dict, name: str, g: np.ndarray) -> None:
    if name in grads:
        grads[name] += g
    else:
        grads[name] = g.copy()


def gather(params: dict, grads: dict, name: str, idx: np.ndarray):
    table = params[name]
    out = table[idx]

    def backward(g):
        full = np.zeros_like(table)
        np.add.at(full, idx, g)
        _acc(grads, name, full)

    return out, backward


def linear(params: dict, grads: dict, prefix: str, x: np.ndarray):
    w, b = params[prefix + ".W"], params[prefix + ".b"]
    y = x @ w + b

    def backward(g):
        lead = x.reshape(-1, x.shape[-1])
        gl = g.reshape(-1, g.shape[-1])
        _acc(grads, prefix + ".W", lead.T @ gl)
        _acc(grads, prefix + ".b", gl.sum(axis=0))
        return g @ w.T

    return y, backward


def fcl2(params: dict, grads: dict, prefix: str, x: np.ndarray):
    """Two-layer fully connected block: tanh hidden layer, linear output."""
    h_pre, back1 = linear(params, grads, prefix + ".l1", x)
    h = np.tanh(h_pre)
    y, back2 = linear(params, grads, prefix + ".l2", h)

    def backward(g):
        gh = back2(g)
        return back1(gh * (1.0 - h * h))

    return y, backward


def attention(params: dict, grads: dict, prefix: str, query: np.ndarray, tokens: np.ndarray,
              mask: Optional[np.ndarray] = None):
    """Single-head scaled dot-product attention of one query over a token set.

    query (B, d), tokens (B, T, d), mask (B, T) True for real tokens.
    Returns (out (B, d), weights (B, T), backward).
    """
    d = query.shape[-1]
    scale = 1.0 / math.sqrt(d)
    wq, wk, wv = params[prefix + ".Wq"], params[prefix + ".Wk"], params[prefix + ".Wv"]
    q = query @ wq
    k = tokens @ wk
    v = tokens @ wv
    scores = np.einsum("bd,btd->bt", q, k) * scale
    if mask is not None:
        scores = np.where(mask, scores, -np.inf)
    scores = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    a = e / e.sum(axis=1, keepdims=True)
    out = np.einsum("bt,btd->bd", a, v)

    def backward(g):
        dv = a[:, :, None] * g[:, None, :]
        da = np.einsum("btd,bd->bt", v, g)
        ds = a * (da - (a * da).sum(axis=1, keepdims=True)) * scale
        dq = np.einsum("bt,btd->bd", ds, k)
        dk = ds[:, :, None] * q[:, None, :]
        flat_t = tokens.reshape(-1, d)
        _acc(grads, prefix + ".Wq", query.T @ dq)
        _acc(grads, prefix + ".Wk", flat_t.T @ dk.reshape(-1, d))
        _acc(grads, prefix + ".Wv", flat_t.T @ dv.reshape(-1, d))
        return dq @ wq.T, dk @ wk.T + dv @ wv.T

    return out, a, backward


# --------------------------------------------------------------------------
# losses: each returns (mean loss, d loss / d input)


def bce_with_logits(z: np.ndarray, y: np.ndarray):
    loss = np.logaddexp(0.0, z) - y * z
    p = 0.5 * (1.0 + np.tanh(0.5 * z))
    return float(loss.mean()), (p - y) / z.size


def cross_entropy(logits: np.ndarray, cls: np.ndarray):
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    n = logits.shape[0]
    loss = lse - logits[np.arange(n), cls]
    p = np.exp(logits - lse[:, None])
    p[np.arange(n), cls] -= 1.0
    return float(loss.mean()), p / n


def mse(pred: np.ndarray, target: np.ndarray):
    r = pred - target
    return float((r * r).mean()), 2.0 * r / r.size


# --------------------------------------------------------------------------
# initialization


def _uniform(rng, shape, bound, dtype):
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _init_fcl(params, rng, prefix, n_in, hidden, n_out, dtype):
    params[prefix + ".l1.W"] = _uniform(rng, (n_in, hidden), 1.0 / math.sqrt(n_in), dtype)
    params[prefix + ".l1.b"] = np.zeros(hidden, dtype)
    params[prefix + ".l2.W"] = _uniform(rng, (hidden, n_out), 1.0 / math.sqrt(hidden), dtype)
    params[prefix + ".l2.b"] = np.zeros(n_out, dtype)


# Small query/key weights start attention near uniform; at full scale the
# scores saturate early and the cell token can be shut out for good.
QK_INIT_SCALE = 0.1


def _init_attention(params, rng, prefix, d, dtype):
    for w in ("Wq", "Wk", "Wv"):
        scale = 1.0 if w == "Wv" else QK_INIT_SCALE
        params[f"{prefix}.{w}"] = _uniform(rng, (d, d), scale / math.sqrt(d), dtype)


def _index(vocab: Sequence[str]) -> dict:
    return {name: i for i, name in enumerate(vocab)}


def _lookup(table: dict, key, what: str) -> int:
    try:
        return table[key]
    except KeyError:
        raise UnknownToken(f"unknown {what} {key!r}") from None


# --------------------------------------------------------------------------
# functional model


@dataclass
class FuncBatch:
    cell: np.ndarray     # (B,)
    pins: np.ndarray     # (B, T) input pin ids, padded with 0
    values: np.ndarray   # (B, T) 0/1, padded with 0
    mask: np.ndarray     # (B, T)
    out_pin: np.ndarray  # (B,)


class FunctionalModel:
    kind = "functional"

    def __init__(self, cells: Sequence[str], pins: Sequence[str], d: int = 32, hidden: int = 64,
                 seed: int = 0, dtype=np.float64):
        self.cells = list(cells)
        self.pins = list(pins)
        self.d, self.hidden = d, hidden
        self.cell_ix, self.pin_ix = _index(self.cells), _index(self.pins)
        rng = np.random.default_rng(seed)
        b = 1.0 / math.sqrt(d)
        p = {
            "cell_emb": _uniform(rng, (len(self.cells), d), b, dtype),
            "pin_emb": _uniform(rng, (len(self.pins), d), b, dtype),
            "value_emb": _uniform(rng, (2, d), b, dtype),
        }
        _init_attention(p, rng, "att", d, dtype)
        _init_fcl(p, rng, "func_out", d, hidden, 1, dtype)
        _init_fcl(p, rng, "diff", d, hidden, len(DIFF_CLASSES), dtype)
        self.params = p

    def config(self) -> dict:
        return {"kind": self.kind, "d": self.d, "hidden": self.hidden}

    def encode(self, items: Sequence[tuple]) -> FuncBatch:
        """items: (cell, output pin, ((pin, value), ...))."""
        width = max((len(a) for _, _, a in items), default=0)
        n = len(items)
        cell = np.zeros(n, dtype=np.int64)
        pins = np.zeros((n, width), dtype=np.int64)
        values = np.zeros((n, width), dtype=np.int64)
        mask = np.zeros((n, width), dtype=bool)
        out = np.zeros(n, dtype=np.int64)
        for i, (c, o, assign) in enumerate(items):
            cell[i] = _lookup(self.cell_ix, c, "cell")
            out[i] = _lookup(self.pin_ix, o, "pin")
            for j, (pin, val) in enumerate(assign):
                pins[i, j] = _lookup(self.pin_ix, pin, "pin")
                values[i, j] = int(val)
                mask[i, j] = True
        return FuncBatch(cell, pins, values, mask, out)

    def embed(self, batch: FuncBatch, grads: dict):
        """Output-pin functional embedding (B, d) and its backward closure."""
        p = self.params
        c_emb, back_c = gather(p, grads, "cell_emb", batch.cell)
        i_emb, back_i = gather(p, grads, "pin_emb", batch.pins)
        v_emb, back_v = gather(p, grads, "value_emb", batch.values)
        o_emb, back_o = gather(p, grads, "pin_emb", batch.out_pin)
        m = batch.mask[:, :, None]
        pin_tok = (i_emb + v_emb) * m
        tokens = np.concatenate([c_emb[:, None, :], pin_tok, o_emb[:, None, :]], axis=1)
        ones = np.ones((len(batch.cell), 1), dtype=bool)
        mask = np.concatenate([ones, batch.mask, ones], axis=1)
        out, weights, back_att = attention(p, grads, "att", o_emb, tokens, mask)

        def backward(g):
            dq, dtok = back_att(g)
            back_c(dtok[:, 0])
            dpin = dtok[:, 1:-1] * m
            back_i(dpin)
            back_v(dpin)
            back_o(dtok[:, -1] + dq)

        return out, weights, backward

    def forward_out(self, batch: FuncBatch, grads: Optional[dict] = None):
        grads = {} if grads is None else grads
        emb, _, back_e = self.embed(batch, grads)
        y, back_f = fcl2(self.params, grads, "func_out", emb)

        def backward(g):
            back_e(back_f(g[:, None]))

        return y[:, 0], backward

    def forward_diff(self, a: FuncBatch, b: FuncBatch, grads: Optional[dict] = None):
        grads = {} if grads is None else grads
        ea, _, back_a = self.embed(a, grads)
        eb, _, back_b = self.embed(b, grads)
        y, back_f = fcl2(self.params, grads, "diff", ea - eb)

        def backward(g):
            gd = back_f(g)
            back_a(gd)
            back_b(-gd)

        return y, backward

    def forward_functional(self, cell: str, output_pin: str, assignment) -> float:
        items = [(cell, output_pin, tuple(dict(assignment).items()))]
        logit, _ = self.forward_out(self.encode(items))
        return float(logit[0])

    def cell_vectors(self) -> dict:
        return {c: self.params["cell_emb"][i].copy() for i, c in enumerate(self.cells)}


# --------------------------------------------------------------------------
# electrical model


@dataclass
class ElecBatch:
    cell: np.ndarray
    in_pin: np.ndarray
    out_pin: np.ndarray
    prop: np.ndarray


class ElectricalModel:
    kind = "electrical"

    def __init__(self, cells: Sequence[str], pins: Sequence[str], n_outputs: int, d: int = 32,
                 hidden: int = 64, seed: int = 0, dtype=np.float64):
        self.cells = list(cells)
        self.pins = list(pins)
        self.d, self.hidden, self.n_outputs = d, hidden, n_outputs
        self.cell_ix, self.pin_ix = _index(self.cells), _index(self.pins)
        self.prop_ix = {p.value: i for i, p in enumerate(PROPERTIES)}
        rng = np.random.default_rng(seed)
        b = 1.0 / math.sqrt(d)
        p = {
            "cell_emb": _uniform(rng, (len(self.cells), d), b, dtype),
            "pin_emb": _uniform(rng, (len(self.pins), d), b, dtype),
            "prop_emb": _uniform(rng, (len(PROPERTIES), d), b, dtype),
        }
        _init_fcl(p, rng, "prop_fcl", 2 * d, hidden, d, dtype)
        _init_attention(p, rng, "att", d, dtype)
        _init_fcl(p, rng, "elec_out", d, hidden, n_outputs, dtype)
        _init_fcl(p, rng, "diff", d, hidden, n_outputs, dtype)
        self.params = p

    def config(self) -> dict:
        return {"kind": self.kind, "d": self.d, "hidden": self.hidden, "n_outputs": self.n_outputs}

    def encode(self, items: Sequence[tuple]) -> ElecBatch:
        """items: ((cell, output pin, related pin), property)."""
        n = len(items)
        cols = np.zeros((4, n), dtype=np.int64)
        for i, ((c, o, r), prop) in enumerate(items):
            cols[0, i] = _lookup(self.cell_ix, c, "cell")
            cols[1, i] = _lookup(self.pin_ix, r, "pin")
            cols[2, i] = _lookup(self.pin_ix, o, "pin")
            cols[3, i] = _lookup(self.prop_ix, prop, "property")
        return ElecBatch(*cols)

    def property_cell(self, batch: ElecBatch, grads: dict):
        p = self.params
        c_emb, back_c = gather(p, grads, "cell_emb", batch.cell)
        p_emb, back_p = gather(p, grads, "prop_emb", batch.prop)
        pc, back_f = fcl2(p, grads, "prop_fcl", np.concatenate([c_emb, p_emb], axis=1))
        d = self.d

        def backward(g):
            gx = back_f(g)
            back_c(gx[:, :d])
            back_p(gx[:, d:])

        return pc, backward

    def embed(self, batch: ElecBatch, grads: dict):
        """Property-specific arc embedding (B, d) and its backward closure."""
        p = self.params
        pc, back_pc = self.property_cell(batch, grads)
        i_emb, back_i = gather(p, grads, "pin_emb", batch.in_pin)
        o_emb, back_o = gather(p, grads, "pin_emb", batch.out_pin)
        tokens = np.stack([pc, i_emb, o_emb], axis=1)
        out, weights, back_att = attention(p, grads, "att", pc, tokens)

        def backward(g):
            dq, dtok = back_att(g)
            back_pc(dq + dtok[:, 0])
            back_i(dtok[:, 1])
            back_o(dtok[:, 2])

        return out, weights, backward

    def forward_out(self, batch: ElecBatch, grads: Optional[dict] = None):
        grads = {} if grads is None else grads
        emb, _, back_e = self.embed(batch, grads)
        y, back_f = fcl2(self.params, grads, "elec_out", emb)

        def backward(g):
            back_e(back_f(g))

        return y, backward

    def forward_diff(self, a: ElecBatch, b: ElecBatch, grads: Optional[dict] = None):
        grads = {} if grads is None else grads
        ea, _, back_a = self.embed(a, grads)
        eb, _, back_b = self.embed(b, grads)
        y, back_f = fcl2(self.params, grads, "diff", ea - eb)

        def backward(g):
            gd = back_f(g)
            back_a(gd)
            back_b(-gd)

        return y, backward

    def forward_electrical(self, arc: tuple, prop: str) -> np.ndarray:
        y, _ = self.forward_out(self.encode([(tuple(arc), prop)]))
        return y[0]

    def arc_vectors(self, arcs: Sequence[tuple], prop: str) -> np.ndarray:
        emb, _, _ = self.embed(self.encode([(tuple(a), prop) for a in arcs]), {})
        return emb

    def cell_vectors(self) -> dict:
        return {c: self.params["cell_emb"][i].copy() for i, c in enumerate(self.cells)}


# --------------------------------------------------------------------------
# optimizer


class Adam:
    """Adam with optional decoupled weight decay on selected tensors (name -> rate)."""

    def __init__(self, params: dict, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 decay: Optional[Mapping[str, float]] = None):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.decay = dict(decay or {})
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        for k, rate in self.decay.items():
            params[k] -= self.lr * rate * params[k]


def check_finite(loss: float, context: str) -> None:
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"non-finite loss {loss!r} at {context}")


# --------------------------------------------------------------------------
# gradient checking


def finite_difference_check(params: dict, loss_and_grads: Callable[[], tuple], h: float = 1e-4,
                            floor: float = 1e-5) -> dict:
    """Compare analytic gradients with central differences for every parameter entry.

    Returns name -> max relative error, where the error of one entry is
    ``|a - n| / max(|a|, |n|, floor)``.
    """
    _, grads = loss_and_grads()
    report = {}
    for name, tensor in params.items():
        analytic = grads.get(name, np.zeros_like(tensor))
        flat = tensor.reshape(-1)
        numeric = np.zeros(flat.size)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up, _ = loss_and_grads()
            flat[i] = old - h
            down, _ = loss_and_grads()
            flat[i] = old
            numeric[i] = (up - down) / (2 * h)
        a = analytic.reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), floor)
        report[name] = float(np.max(np.abs(a - numeric) / denom)) if flat.size else 0.0
    return report


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model, path, extra: Optional[dict] = None) -> None:
    """Binary tensors (``path``) plus a JSON manifest (``path`` + ``.json``).

    Layout: magic, u32 version, u32 count, then per tensor
    u16 name length, name, u8 ndim, u32 dims..., float32 little-endian data.
    """
    from ._io import atomic_write_bytes, atomic_write_text

    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(model.params))]
    for name in sorted(model.params):
        t = model.params[name]
        nb = name.encode()
        chunks.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", t.ndim))
        chunks.append(struct.pack(f"<{t.ndim}I", *t.shape))
        chunks.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    atomic_write_bytes(path, b"".join(chunks))
    manifest = {
        "format": "lib2vec.checkpoint",
        "version": CHECKPOINT_VERSION,
        "model": model.config(),
        "cells": {c: i for i, c in enumerate(model.cells)},
        "pins": {p: i for i, p in enumerate(model.pins)},
        "properties": {p.value: i for i, p in enumerate(PROPERTIES)},
    }
    if extra:
        manifest["extra"] = extra
    atomic_write_text(str(path) + ".json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_tensors(path) -> dict:
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise NNError(f"{path}: not a lib2vec checkpoint")
    pos = len(CHECKPOINT_MAGIC)
    version, count = struct.unpack_from("<II", data, pos)
    if version != CHECKPOINT_VERSION:
        raise NNError(f"{path}: unsupported checkpoint version {version}")
    pos += 8
    out = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + n].decode()
        pos += n
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        out[name] = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape).astype(np.float64)
        pos += 4 * size
    return out


def load_checkpoint(path):
    manifest = json.loads(Path(str(path) + ".json").read_text())
    cfg = manifest["model"]
    cells = sorted(manifest["cells"], key=manifest["cells"].get)
    pins = sorted(manifest["pins"], key=manifest["pins"].get)
    if cfg["kind"] == "functional":
        model = FunctionalModel(cells, pins, d=cfg["d"], hidden=cfg["hidden"])
    elif cfg["kind"] == "electrical":
        model = ElectricalModel(cells, pins, cfg["n_outputs"], d=cfg["d"], hidden=cfg["hidden"])
    else:
        raise NNError(f"unknown model kind {cfg['kind']!r}")
    tensors = read_tensors(path)
    if set(tensors) != set(model.params):
        raise NNError(f"{path}: tensor set does not match a {cfg['kind']} model")
    for k, v in tensors.items():
        if v.shape != model.params[k].shape:
            raise NNError(f"{path}: tensor {k} has shape {v.shape}, expected {model.params[k].shape}")
        model.params[k] = v
    return model, manifest
