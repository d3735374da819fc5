"""Training orchestration, embedding extraction, scoring and vector export."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.stats import spearmanr

from . import nn, testgen
from ._io import atomic_write_text, canonical_json, sha256_bytes
from .datagen import Datasets

log = logging.getLogger(__name__)

REPORT_SCHEMA = "lib2vec.report/1"


@dataclass
class TrainSettings:
    d: int = 32
    hidden: int = 64
    epochs: int = 200
    lr: float = 1e-3
    batch: int = 256
    seed: int = 0
    weight_decay: float = 0.0     # decoupled L2 on every non-bias tensor
    cosine: bool = False          # anneal lr to zero over the run
    diff_weight: float = 1.0      # weight of the difference loss
    restarts: int = 1             # functional runs from fresh inits; lowest training loss kept


def _decay(params: Mapping, rate: float) -> dict:
    return {k: rate for k in params if not k.endswith(".b")} if rate else {}


def _lr_at(s: TrainSettings, step: int, total: int) -> float:
    if not s.cosine or total <= 1:
        return s.lr
    return 0.5 * s.lr * (1.0 + math.cos(math.pi * step / total))


@dataclass
class TrainResult:
    model: object
    history: list = field(default_factory=list)  # one dict per epoch


def _take(batch, idx):
    return type(batch)(*(getattr(batch, f)[idx] for f in batch.__dataclass_fields__))


def _chunks(n: int, steps: int) -> list:
    bounds = np.linspace(0, n, steps + 1).round().astype(int)
    return list(zip(bounds[:-1], bounds[1:]))


# --------------------------------------------------------------------------
# functional training


def functional_vocab(ds: Datasets) -> tuple:
    cells, pins = set(), set()
    for e in ds.func_out:
        cells.add(e.cell)
        pins.add(e.output_pin)
        pins.update(p for p, _ in e.assignment)
    for e in ds.func_diff:
        cells.update((e.cell_a, e.cell_b))
        pins.update((e.output_a, e.output_b))
        pins.update(p for p, _ in e.assignment)
    return sorted(cells), sorted(pins)


def restart_seed(seed: int, r: int) -> int:
    return seed if r == 0 else int(np.random.SeedSequence([seed, r]).generate_state(1)[0])


def train_functional(ds: Datasets, s: TrainSettings, log_every: int = 0) -> TrainResult:
    """Train ``s.restarts`` models and keep the one with the lowest full-data loss.

    Attention can lock onto the value-1 pin tokens early and starve the cell
    token of gradient; such runs end with a visibly higher training loss.
    """
    best = None
    for r in range(max(1, s.restarts)):
        res = _train_functional_once(ds, s, restart_seed(s.seed, r), log_every)
        loss = functional_loss(res.model, ds, s.diff_weight)
        res.history.append({"restart": r, "final_loss": loss})
        if best is None or loss < best[0]:
            best = (loss, res)
    return best[1]


def functional_loss(model: nn.FunctionalModel, ds: Datasets, diff_weight: float = 1.0) -> float:
    """BCE over all output examples plus weighted CE over all difference examples."""
    z, _ = model.forward_out(model.encode([(e.cell, e.output_pin, e.assignment) for e in ds.func_out]))
    loss, _ = nn.bce_with_logits(z, np.array([e.target for e in ds.func_out], dtype=float))
    if ds.func_diff:
        a = model.encode([(e.cell_a, e.output_a, e.assignment) for e in ds.func_diff])
        b = model.encode([(e.cell_b, e.output_b, e.assignment) for e in ds.func_diff])
        logits, _ = model.forward_diff(a, b)
        ce, _ = nn.cross_entropy(logits, np.array([nn.DIFF_CLASSES.index(e.target) for e in ds.func_diff]))
        loss += diff_weight * ce
    return float(loss)


def _train_functional_once(ds: Datasets, s: TrainSettings, seed: int, log_every: int) -> TrainResult:
    cells, pins = functional_vocab(ds)
    model = nn.FunctionalModel(cells, pins, d=s.d, hidden=s.hidden, seed=seed)
    out_all = model.encode([(e.cell, e.output_pin, e.assignment) for e in ds.func_out])
    y_all = np.array([e.target for e in ds.func_out], dtype=float)
    have_diff = bool(ds.func_diff)
    if have_diff:
        da_all = model.encode([(e.cell_a, e.output_a, e.assignment) for e in ds.func_diff])
        db_all = model.encode([(e.cell_b, e.output_b, e.assignment) for e in ds.func_diff])
        cls_all = np.array([nn.DIFF_CLASSES.index(e.target) for e in ds.func_diff])
    opt = nn.Adam(model.params, lr=s.lr, decay=_decay(model.params, s.weight_decay))
    rng = np.random.default_rng([seed, 7])
    n = len(y_all)
    steps = max(1, math.ceil(n / s.batch))
    history = []
    for epoch in range(s.epochs):
        perm = rng.permutation(n)
        dperm = rng.permutation(len(ds.func_diff)) if have_diff else None
        dchunks = _chunks(len(ds.func_diff), steps) if have_diff else []
        tot_out = tot_diff = 0.0
        for step, (lo, hi) in enumerate(_chunks(n, steps)):
            grads: dict = {}
            idx = perm[lo:hi]
            z, back = model.forward_out(_take(out_all, idx), grads)
            l_out, dz = nn.bce_with_logits(z, y_all[idx])
            back(dz)
            l_diff = 0.0
            if have_diff:
                dlo, dhi = dchunks[step]
                if dhi > dlo:
                    didx = dperm[dlo:dhi]
                    logits, dback = model.forward_diff(_take(da_all, didx), _take(db_all, didx), grads)
                    l_diff, dl = nn.cross_entropy(logits, cls_all[didx])
                    l_diff *= s.diff_weight
                    dback(dl * s.diff_weight)
            nn.check_finite(l_out + l_diff, f"functional epoch {epoch} step {step}")
            opt.lr = _lr_at(s, epoch * steps + step, s.epochs * steps)
            opt.step(model.params, grads)
            tot_out += l_out
            tot_diff += l_diff
        rec = {"epoch": epoch, "loss_out": tot_out / steps, "loss_diff": tot_diff / steps}
        history.append(rec)
        if log_every and (epoch % log_every == 0 or epoch == s.epochs - 1):
            rec["accuracy"] = functional_accuracy(model, ds)
            log.info("functional epoch %d: %s", epoch, rec)
    return TrainResult(model, history)


def functional_accuracy(model: nn.FunctionalModel, ds: Datasets) -> float:
    if not ds.func_out:
        return float("nan")
    z, _ = model.forward_out(model.encode([(e.cell, e.output_pin, e.assignment) for e in ds.func_out]))
    y = np.array([e.target for e in ds.func_out])
    return float(np.mean((z > 0).astype(int) == y))


def functional_diff_accuracy(model: nn.FunctionalModel, ds: Datasets) -> float:
    if not ds.func_diff:
        return float("nan")
    a = model.encode([(e.cell_a, e.output_a, e.assignment) for e in ds.func_diff])
    b = model.encode([(e.cell_b, e.output_b, e.assignment) for e in ds.func_diff])
    logits, _ = model.forward_diff(a, b)
    pred = np.array(nn.DIFF_CLASSES)[logits.argmax(axis=1)]
    return float(np.mean(pred == np.array([e.target for e in ds.func_diff])))


# --------------------------------------------------------------------------
# electrical training


def electrical_vocab(ds: Datasets) -> tuple:
    cells, pins = set(), set()
    for e in ds.elec_out:
        cells.add(e.arc[0])
        pins.update(e.arc[1:])
    for e in ds.elec_diff:
        for arc in (e.arc_a, e.arc_b):
            cells.add(arc[0])
            pins.update(arc[1:])
    return sorted(cells), sorted(pins)


def train_electrical(ds: Datasets, s: TrainSettings, log_every: int = 0) -> Optional[TrainResult]:
    if not ds.elec_out:
        log.warning("electrical dataset is empty; electrical model skipped")
        return None
    cells, pins = electrical_vocab(ds)
    width = len(ds.elec_out[0].target)
    model = nn.ElectricalModel(cells, pins, width, d=s.d, hidden=s.hidden, seed=s.seed)
    out_all = model.encode([(e.arc, e.property) for e in ds.elec_out])
    t_all = np.stack([e.target for e in ds.elec_out])
    have_diff = bool(ds.elec_diff)
    if have_diff:
        da_all = model.encode([(e.arc_a, e.property) for e in ds.elec_diff])
        db_all = model.encode([(e.arc_b, e.property) for e in ds.elec_diff])
        td_all = np.stack([e.target for e in ds.elec_diff])
    opt = nn.Adam(model.params, lr=s.lr, decay=_decay(model.params, s.weight_decay))
    rng = np.random.default_rng([s.seed, 8])
    n = len(t_all)
    steps = max(1, math.ceil(n / s.batch))
    history = []
    for epoch in range(s.epochs):
        perm = rng.permutation(n)
        dperm = rng.permutation(len(td_all)) if have_diff else None
        dchunks = _chunks(len(td_all), steps) if have_diff else []
        tot_out = tot_diff = 0.0
        for step, (lo, hi) in enumerate(_chunks(n, steps)):
            grads: dict = {}
            idx = perm[lo:hi]
            y, back = model.forward_out(_take(out_all, idx), grads)
            l_out, dy = nn.mse(y, t_all[idx])
            back(dy)
            l_diff = 0.0
            if have_diff:
                dlo, dhi = dchunks[step]
                if dhi > dlo:
                    didx = dperm[dlo:dhi]
                    yd, dback = model.forward_diff(_take(da_all, didx), _take(db_all, didx), grads)
                    l_diff, dd = nn.mse(yd, td_all[didx])
                    l_diff *= s.diff_weight
                    dback(dd * s.diff_weight)
            nn.check_finite(l_out + l_diff, f"electrical epoch {epoch} step {step}")
            opt.lr = _lr_at(s, epoch * steps + step, s.epochs * steps)
            opt.step(model.params, grads)
            tot_out += l_out
            tot_diff += l_diff
        rec = {"epoch": epoch, "loss_out": tot_out / steps, "loss_diff": tot_diff / steps}
        history.append(rec)
        if log_every and (epoch % log_every == 0 or epoch == s.epochs - 1):
            log.info("electrical epoch %d: %s", epoch, rec)
    return TrainResult(model, history)


# --------------------------------------------------------------------------
# vectors


def type_centroids(cell_vectors: Mapping[str, np.ndarray], cell_types: Mapping[str, str]) -> dict:
    """Cell-type vector = mean of its member cells' vectors."""
    groups: dict = {}
    for cell in sorted(cell_vectors):
        groups.setdefault(cell_types.get(cell, cell), []).append(cell_vectors[cell])
    return {t: np.mean(vs, axis=0) for t, vs in sorted(groups.items())}


def arc_vector(model: nn.ElectricalModel, arc: tuple, prop: str) -> np.ndarray:
    """Property-specific arc embedding (the input of Elec-Out-FCL)."""
    return model.arc_vectors([arc], prop)[0]


def all_arc_vectors(model: nn.ElectricalModel, arcs_by_prop: Mapping[str, Sequence[tuple]]) -> dict:
    """(cell, out, related, property) -> vector."""
    out = {}
    for prop, arcs in arcs_by_prop.items():
        arcs = sorted(set(tuple(a) for a in arcs))
        if not arcs:
            continue
        vecs = model.arc_vectors(arcs, prop)
        for a, v in zip(arcs, vecs):
            out[(*a, prop)] = v
    return out


def analogy(type_vectors: Mapping[str, np.ndarray], x: str, xb: str, y: str) -> list:
    """Cell types ranked by closeness to vec(xb) - vec(x) + vec(y)."""
    return testgen.analogy_ranking(type_vectors, x, xb, y)


# --------------------------------------------------------------------------
# report


@dataclass
class EmbeddingReport:
    d: int
    cell_vectors: dict          # functional, per cell
    type_vectors: dict          # functional, per cell type
    arc_vectors: dict           # (cell, out, related, property) -> vector
    cell_types: dict
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "d": self.d,
            "metadata": self.metadata,
            "cell_types": dict(sorted(self.cell_types.items())),
            "functional": {k: _floats(v) for k, v in sorted(self.cell_vectors.items())},
            "types": {k: _floats(v) for k, v in sorted(self.type_vectors.items())},
            "arcs": [{"arc": list(k[:3]), "property": k[3], "vector": _floats(v)}
                     for k, v in sorted(self.arc_vectors.items())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingReport":
        return cls(
            d["d"],
            {k: np.array(v) for k, v in d["functional"].items()},
            {k: np.array(v) for k, v in d["types"].items()},
            {(*r["arc"], r["property"]): np.array(r["vector"]) for r in d["arcs"]},
            d["cell_types"],
            d.get("metadata", {}),
        )


def _floats(v) -> list:
    return [float(x) for x in np.asarray(v).ravel()]


def dataset_hash(ds: Datasets) -> str:
    """Content hash over every example, independent of storage format."""
    h = []
    for e in ds.func_out:
        h.append(("fo", e.cell, e.output_pin, e.assignment, e.target))
    for e in ds.func_diff:
        h.append(("fd", e.cell_a, e.cell_b, e.output_a, e.output_b, e.assignment, e.target))
    text = canonical_json(h).encode()
    parts = [sha256_bytes(text)]
    for e in ds.elec_out:
        parts.append(sha256_bytes(canonical_json(["eo", list(e.arc), e.property]).encode()
                                  + np.asarray(e.target, "<f8").tobytes()))
    for e in ds.elec_diff:
        parts.append(sha256_bytes(canonical_json(["ed", list(e.arc_a), list(e.arc_b), e.property]).encode()
                                  + np.asarray(e.target, "<f8").tobytes()))
    return sha256_bytes("".join(parts).encode())


def build_report(func: Optional[nn.FunctionalModel], elec: Optional[nn.ElectricalModel],
                 ds: Datasets, metadata: dict) -> EmbeddingReport:
    cell_types = dict(ds.meta.get("cell_types", {}))
    cell_vecs = func.cell_vectors() if func is not None else {}
    arc_vecs = {}
    d = func.d if func is not None else (elec.d if elec is not None else 0)
    if elec is not None:
        by_prop: dict = {}
        for e in ds.elec_out:
            by_prop.setdefault(e.property, []).append(e.arc)
        arc_vecs = all_arc_vectors(elec, by_prop)
    return EmbeddingReport(d, cell_vecs, type_centroids(cell_vecs, cell_types), arc_vecs,
                           cell_types, metadata)


def train(config, ds: Datasets, log_every: int = 0) -> dict:
    """Train both models per ``config`` (a RunConfig); returns models, histories, report."""
    common = dict(d=config.d, hidden=config.hidden, lr=config.lr, batch=config.batch, seed=config.seed,
                  weight_decay=config.weight_decay, cosine=config.cosine)
    fs = TrainSettings(epochs=config.epochs_functional, restarts=config.restarts, **common)
    es = TrainSettings(epochs=config.epochs_electrical, **common)
    func = train_functional(ds, fs, log_every) if ds.func_out else None
    elec = None
    if config.train_electrical:
        elec = train_electrical(ds, es, log_every)
    elif ds.elec_out:
        log.warning("electrical training disabled by config")
    meta = {
        "d": config.d,
        "seed": config.seed,
        "epochs": {"functional": config.epochs_functional, "electrical": config.epochs_electrical},
        "dataset_hash": dataset_hash(ds),
        # where the run is written is not an input to it
        "config_hash": sha256_bytes(canonical_json({k: v for k, v in config.to_dict().items()
                                                    if k != "out"}).encode()),
    }
    if func is not None:
        meta["functional_accuracy"] = functional_accuracy(func.model, ds)
    report = build_report(func.model if func else None, elec.model if elec else None, ds, meta)
    return {"functional": func, "electrical": elec, "report": report}


# --------------------------------------------------------------------------
# scoring helpers


def evaluate(suite: testgen.TestSuite, type_vectors: Mapping, arc_vectors: Mapping,
             ks: Sequence[int] = (1, 3, 10)) -> dict:
    """All regularity scores plus random baselines, as a flat-ish dict."""
    res: dict = {"counts": suite.counts()}
    if suite.inverting and type_vectors:
        m = len(type_vectors)
        res["inverting"] = {f"top{k}": testgen.score_inverting(suite.inverting, type_vectors, k) for k in ks}
        res["inverting_random"] = {f"top{k}": testgen.random_baseline_inverting(m, k) for k in ks}
    if suite.funsim and type_vectors:
        res["funsim"] = testgen.score_funsim(suite.funsim, type_vectors)
        res["funsim_random"] = {"easy": 0.5, "hard": 0.5, "all": 0.5}
    if suite.electrical and arc_vectors:
        res["electrical"] = {f"top{k}": testgen.score_electrical(suite.electrical, arc_vectors, k) for k in ks}
        res["electrical_random"] = {f"top{k}": testgen.random_baseline_electrical(suite.electrical, k)
                                    for k in ks}
    return res


def score_rows(scores: dict) -> list:
    """Flatten :func:`evaluate` output into (family, metric, model, random) rows."""
    rows = []
    for fam in ("inverting", "funsim"):
        if fam in scores:
            for metric, val in scores[fam].items():
                rows.append((fam, metric, val, scores[fam + "_random"][metric]))
    if "electrical" in scores:
        for k, per in scores["electrical"].items():
            for prop, val in per.items():
                rows.append(("electrical", f"{prop}_{k}", val,
                             scores["electrical_random"][k] if prop in ("macro", "micro") else float("nan")))
    return rows


# --------------------------------------------------------------------------
# export


def _csv_text(rows: Sequence[tuple], d: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "type"] + [f"v{i}" for i in range(d)])
    for name, ctype, vec in rows:
        w.writerow([name, ctype] + [repr(float(x)) for x in vec])
    return buf.getvalue()


def export_vectors(report: EmbeddingReport, out_dir) -> list:
    """Write one CSV per vector family; returns the written paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create export directory {out}: {e}") from e
    written = []

    def write(name, rows):
        path = out / name
        try:
            atomic_write_text(path, _csv_text(rows, report.d))
        except OSError as e:
            raise OSError(f"cannot write {path}: {e}") from e
        written.append(path)

    if report.cell_vectors:
        write("functional_cells.csv", [(c, report.cell_types.get(c, c), v)
                                       for c, v in sorted(report.cell_vectors.items())])
        write("functional_types.csv", [(t, t, v) for t, v in sorted(report.type_vectors.items())])
    by_prop: dict = {}
    for key, v in sorted(report.arc_vectors.items()):
        cell, outp, rel, prop = key
        by_prop.setdefault(prop, []).append((f"{cell}/{outp}/{rel}", report.cell_types.get(cell, cell), v))
    for prop, rows in sorted(by_prop.items()):
        write(f"arcs_{prop}.csv", rows)
    return written


def read_vectors_csv(path) -> dict:
    """name -> vector from an exported CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        next(r)
        return {row[0]: np.array([float(x) for x in row[2:]]) for row in r}


# --------------------------------------------------------------------------
# qualitative checks


def pca(x: np.ndarray, k: int = 2) -> np.ndarray:
    """Project rows of ``x`` onto the top-k principal components (deterministic sign)."""
    xc = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(xc, full_matrices=False)
    comps = vt[:k]
    signs = np.sign(comps[np.arange(len(comps)), np.abs(comps).argmax(axis=1)])
    signs[signs == 0] = 1.0
    return xc @ (comps * signs[:, None]).T


_DRIVE = re.compile(r"x(p?)(\d+)")


def drive_strength(cell_name: str) -> float:
    m = None
    for m in _DRIVE.finditer(cell_name):
        pass
    if m is None:
        raise ValueError(f"no drive strength in {cell_name!r}")
    return float("0." + m.group(2)) if m.group(1) else float(m.group(2))


def drive_strength_ordering(arc_vectors: Mapping, cell_types: Mapping[str, str], ctype: str = "INV",
                            prop: str = "rise_delay") -> float:
    """|Spearman rho| between drive strength and the first principal component of the arc vectors."""
    keys = sorted(k for k in arc_vectors if cell_types.get(k[0]) == ctype and k[3] == prop)
    if len(keys) < 3:
        raise ValueError(f"need at least three {ctype} arcs for {prop}")
    x = np.stack([arc_vectors[k] for k in keys])
    pc1 = pca(x, 1)[:, 0]
    rho = spearmanr([drive_strength(k[0]) for k in keys], pc1).statistic
    return float(abs(rho))
