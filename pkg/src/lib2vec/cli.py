"""Command-line entry point: ``lib2vec <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, boolfn, datagen, evalkit, liberty, netgen, nn, synth, testgen
from ._io import atomic_write_text, canonical_json, sha256_bytes
from .config import ConfigError, RunConfig

log = logging.getLogger("lib2vec")

BUILTIN = {"builtin:toy": synth.toy_library_text, "builtin:demo": synth.demo_library_text}


class DimensionMismatch(ValueError):
    pass


# --------------------------------------------------------------------------
# shared stage helpers


def library_sources(paths: Sequence[str]) -> list:
    """(label, text) for each library argument, builtin names included."""
    out = []
    for p in sorted(paths):
        if p in BUILTIN:
            out.append((p, BUILTIN[p](0)))
        else:
            out.append((p, Path(p).read_text(encoding="utf-8", errors="replace")))
    if not out:
        raise liberty.LibertyError("no Liberty files given")
    return out


def load_library(paths: Sequence[str], type_rules=liberty.DEFAULT_TYPE_RULES) -> liberty.Library:
    lib = None
    for _, text in library_sources(paths):
        one = liberty.parse_liberty(text, type_rules)
        lib = one if lib is None else lib.merged(one)
    for w in lib.warnings:
        log.warning("%s", w)
    return lib


def library_hash(paths: Sequence[str], type_rules) -> str:
    parts = [sha256_bytes(text.encode()) for _, text in library_sources(paths)]
    return sha256_bytes(canonical_json([parts, list(type_rules)]).encode())


def stage_testgen(lib, out_dir, seed: int, grid: Sequence[int], cap, d: Optional[int] = None):
    g = testgen.build_condition_grid(lib, *grid)
    suite = testgen.generate_all(lib, g, seed=seed, cap=cap)
    if d is not None:
        suite.meta["d"] = d
    testgen.write_suite(suite, out_dir)
    return suite


def stage_datagen(lib, out_dir, seed: int, grid: Sequence[int], pair_cap, partners: int, sidecar: bool):
    g = testgen.build_condition_grid(lib, *grid) if lib.complete_arcs() else None
    ds = datagen.generate(lib, g, seed=seed, pair_cap=pair_cap, partners=partners)
    datagen.write_datasets(ds, out_dir, sidecar=sidecar)
    return ds


def stage_train(cfg: RunConfig, ds_dir, out_dir) -> evalkit.EmbeddingReport:
    ds = datagen.read_datasets(ds_dir)
    res = evalkit.train(cfg, ds)
    out = Path(out_dir)
    ck = out / "checkpoints"
    cell_types = ds.meta.get("cell_types", {})
    for kind in ("functional", "electrical"):
        path = ck / f"{kind}.ckpt"
        r = res[kind]
        if r is None:
            for p in (path, Path(str(path) + ".json")):
                if p.exists():
                    p.unlink()
            continue
        extra = {"cell_types": {c: cell_types.get(c, c) for c in r.model.cells}}
        if kind == "electrical":
            arcs: dict = {}
            for e in ds.elec_out:
                arcs.setdefault(e.property, []).append(list(e.arc))
            extra["arcs"] = {p: sorted(a) for p, a in sorted(arcs.items())}
            extra["grid"] = ds.meta.get("grid")
        nn.save_checkpoint(r.model, path, extra)
        hist = "".join(json.dumps(h, sort_keys=True) + "\n" for h in r.history)
        atomic_write_text(out / f"history_{kind}.jsonl", hist)
    report = res["report"]
    atomic_write_text(out / "report.json", json.dumps(report.to_dict(), sort_keys=True) + "\n")
    return report


def _checkpoint_paths(path) -> dict:
    p = Path(path)
    if p.is_dir():
        if (p / "checkpoints").is_dir():
            p = p / "checkpoints"
        found = {k: p / f"{k}.ckpt" for k in ("functional", "electrical") if (p / f"{k}.ckpt").exists()}
        if not found:
            raise FileNotFoundError(f"no checkpoints in {path}")
        return found
    if not p.exists():
        raise FileNotFoundError(f"checkpoint {path} does not exist")
    _, manifest = nn.load_checkpoint(p)
    return {manifest["model"]["kind"]: p}


def load_models(path) -> dict:
    """kind -> (model, manifest) for a checkpoint file or directory."""
    return {k: nn.load_checkpoint(p) for k, p in _checkpoint_paths(path).items()}


def models_to_vectors(models: dict, arcs_by_prop: Optional[dict] = None) -> evalkit.EmbeddingReport:
    cell_types: dict = {}
    cell_vecs, arc_vecs, d = {}, {}, 0
    if "functional" in models:
        m, man = models["functional"]
        cell_types.update(man.get("extra", {}).get("cell_types", {}))
        cell_vecs = m.cell_vectors()
        d = m.d
    if "electrical" in models:
        m, man = models["electrical"]
        extra = man.get("extra", {})
        for c, t in extra.get("cell_types", {}).items():
            cell_types.setdefault(c, t)
        arcs = arcs_by_prop if arcs_by_prop is not None else extra.get("arcs", {})
        known = set(m.cells)
        arcs = {p: [tuple(a) for a in lst if a[0] in known] for p, lst in arcs.items()}
        arc_vecs = evalkit.all_arc_vectors(m, arcs)
        d = d or m.d
    types = evalkit.type_centroids(cell_vecs, cell_types)
    return evalkit.EmbeddingReport(d, cell_vecs, types, arc_vecs, cell_types)


def _suite_arcs(suite: testgen.TestSuite) -> dict:
    arcs: dict = {}
    for t in suite.electrical:
        arcs.setdefault(t.property, set()).add(tuple(t.query_arc))
        arcs[t.property].update(tuple(c) for c in t.candidates)
    return {p: sorted(a) for p, a in arcs.items()}


def check_dimensions(models: dict, suite: testgen.TestSuite) -> None:
    want_d = suite.meta.get("d")
    for kind, (m, _) in models.items():
        if want_d is not None and m.d != want_d:
            raise DimensionMismatch(f"{kind} checkpoint has d={m.d} but the tests were generated for d={want_d}")
    if "electrical" in models and suite.electrical:
        m, _ = models["electrical"]
        s, l = suite.meta["grid"]
        if m.n_outputs != s * l:
            raise DimensionMismatch(f"electrical checkpoint predicts {m.n_outputs} conditions but the tests "
                                    f"use a {s}x{l} grid")


def stage_eval(ckpt, tests_dir, out_dir, ks: Sequence[int]) -> dict:
    from . import plotting

    suite = testgen.read_suite(tests_dir)
    models = load_models(ckpt)
    check_dimensions(models, suite)
    rep = models_to_vectors(models, _suite_arcs(suite) if "electrical" in models else None)
    scores = evalkit.evaluate(suite, rep.type_vectors, rep.arc_vectors, ks)
    rows = evalkit.score_rows(scores)
    out = Path(out_dir)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["family", "metric", "accuracy", "random"])
    for fam, metric, val, rnd in rows:
        w.writerow([fam, metric, f"{val:.6f}", f"{rnd:.6f}"])
    atomic_write_text(out / "scores.csv", buf.getvalue())
    atomic_write_text(out / "scores.json", json.dumps(scores, indent=2, sort_keys=True) + "\n")
    if rows:
        plotting.score_bars(rows, out / "scores.png")
    return {"scores": scores, "csv": buf.getvalue()}


def stage_export(ckpt, out_dir) -> list:
    from . import plotting

    rep = models_to_vectors(load_models(ckpt))
    written = evalkit.export_vectors(rep, out_dir)
    out = Path(out_dir)
    if len(rep.cell_vectors) >= 2:
        written.append(plotting.vectors_scatter(rep.cell_vectors, rep.cell_types,
                                                out / "functional_cells.png", "functional cell vectors"))
    return written


# --------------------------------------------------------------------------
# subcommands


def cmd_parse(a) -> int:
    lib = load_library(a.lib, a.type_rule or liberty.DEFAULT_TYPE_RULES)
    problems = liberty.check_type_consistency(lib)
    summary = {
        "library": lib.name,
        "cells": len(lib.cells),
        "cell_types": len(lib.cell_types()),
        "arcs": sum(1 for _ in lib.arcs()),
        "complete_arcs": len(lib.complete_arcs()),
        "warnings": lib.warnings,
        "type_problems": problems,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    if a.json_out:
        atomic_write_text(a.json_out, json.dumps(lib.to_dict(), sort_keys=True) + "\n")
    return 0


def cmd_truthtable(a) -> int:
    if a.cell:
        lib = load_library(a.lib)
        if a.cell not in lib.cells:
            raise KeyError(f"no cell {a.cell!r} in library")
        tt = boolfn.cell_truth_table(lib.cells[a.cell], a.max_inputs)
    else:
        expr = boolfn.parse(a.expr)
        pins = a.pins.split(",") if a.pins else sorted(boolfn.variables(expr))
        tt = boolfn.truth_table(expr, pins, a.max_inputs)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(list(tt.input_pins) + ["out"])
    for row, bit in zip(boolfn.assignments(tt.input_pins), tt.bits):
        w.writerow([int(v) for v in row] + [bit])
    return 0


def cmd_testgen(a) -> int:
    lib = load_library(a.lib)
    suite = stage_testgen(lib, a.out, a.seed, a.grid, a.cap, a.d)
    print(json.dumps(suite.meta["counts"], sort_keys=True))
    return 0


def cmd_datagen(a) -> int:
    lib = load_library(a.lib)
    ds = stage_datagen(lib, a.out, a.seed, a.grid, a.pair_cap, a.partners, a.sidecar)
    print(json.dumps(ds.meta["counts"], sort_keys=True))
    return 0


def _write_run_files(cfg: RunConfig) -> None:
    atomic_write_text(cfg.out_dir / "config.json", cfg.dumps())
    atomic_write_text(cfg.out_dir / "VERSION", __version__ + "\n")


def cmd_train(a) -> int:
    cfg = RunConfig.load(a.config)
    if a.out:
        cfg.out = a.out
    ds_dir = Path(a.datasets) if a.datasets else cfg.out_dir / "datasets"
    if not (ds_dir / "meta.json").exists():
        raise FileNotFoundError(f"no datasets in {ds_dir}; run 'lib2vec datagen' first")
    _write_run_files(cfg)
    report = stage_train(cfg, ds_dir, cfg.out_dir)
    print(json.dumps(report.metadata, sort_keys=True))
    return 0


def cmd_eval(a) -> int:
    out = a.out or str(Path(a.checkpoint if Path(a.checkpoint).is_dir() else Path(a.checkpoint).parent) / "eval")
    res = stage_eval(a.checkpoint, a.tests, out, a.k)
    sys.stdout.write(res["csv"])
    return 0


def cmd_export(a) -> int:
    for p in stage_export(a.checkpoint, a.out):
        print(p)
    return 0


def cmd_analogy(a) -> int:
    rep = models_to_vectors({k: v for k, v in load_models(a.checkpoint).items() if k == "functional"})
    ranking = evalkit.analogy(rep.type_vectors, a.x, a.xb, a.y)
    for i, name in enumerate(ranking[:a.top], 1):
        print(f"{i},{name}")
    return 0


def cmd_netgen(a) -> int:
    lib = load_library(a.lib or ["builtin:demo"])
    cells = netgen.usable_cells(lib)
    out = Path(a.out)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["netlist", "seed", "cells", "inputs", "edges", "levels"])
    for i in range(a.count):
        seed = a.seed + i
        net = netgen.generate_netlist(cells, seed, name=f"net{seed:05d}")
        net.write(out / f"{net.name}.json")
        st = net.stats()
        w.writerow([net.name, seed, st["cells"], st["inputs"], st["edges"], st["levels"]])
    atomic_write_text(out / "stats.csv", buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return 0


def cmd_simulate(a) -> int:
    net = netgen.Netlist.read(a.netlist)
    if a.exact:
        labels = netgen.exact_labels(net)
    else:
        labels = netgen.simulate(net, netgen.random_vectors(len(net.inputs), a.vectors, a.seed))
    text = labels.dumps(net, with_bits=a.bits)
    if a.out:
        atomic_write_text(a.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_pipeline(a) -> int:
    cfg = RunConfig.load(a.config) if a.config else RunConfig()
    if a.lib:
        cfg.libs = list(a.lib)
    if a.out:
        cfg.out = a.out
    for key in ("d", "seed", "epochs_functional", "epochs_electrical"):
        v = getattr(a, key)
        if v is not None:
            setattr(cfg, key, v)
    if a.grid:
        cfg.grid = list(a.grid)
    cfg.validate()
    if not cfg.libs:
        raise ConfigError("no libraries: pass --lib or set 'libs' in the config")
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_run_files(cfg)
    cache_path = out / ".stages.json"
    cache = json.loads(cache_path.read_text()) if cache_path.exists() else {}
    c = cfg.to_dict()

    def key(*parts):
        return sha256_bytes(canonical_json(list(parts)).encode())

    lib_h = library_hash(cfg.libs, cfg.type_rules)
    keys = {}
    keys["testgen"] = key("testgen", lib_h, c["grid"], c["seed"], c["electrical_cap"], c["d"])
    keys["datagen"] = key("datagen", lib_h, c["grid"], c["seed"], c["pair_cap"], c["partners"], c["sidecar"])
    train_fields = ["d", "hidden", "seed", "epochs_functional", "epochs_electrical", "lr", "batch",
                    "weight_decay", "cosine", "restarts", "train_electrical"]
    keys["train"] = key("train", keys["datagen"], {k: c[k] for k in train_fields})
    keys["eval"] = key("eval", keys["train"], keys["testgen"], c["ks"])
    keys["export"] = key("export", keys["train"])
    dirs = {"testgen": out / "tests", "datagen": out / "datasets", "train": out / "checkpoints",
            "eval": out / "eval", "export": out / "vectors"}

    lib = None
    for stage in ("testgen", "datagen", "train", "eval", "export"):
        if cache.get(stage) == keys[stage] and dirs[stage].exists():
            log.info("stage %s: up to date", stage)
            print(f"{stage},cached")
            continue
        if stage in ("testgen", "datagen") and lib is None:
            lib = load_library(cfg.libs, cfg.type_rules)
        if stage == "testgen":
            stage_testgen(lib, dirs[stage], cfg.seed, cfg.grid, cfg.electrical_cap, cfg.d)
        elif stage == "datagen":
            stage_datagen(lib, dirs[stage], cfg.seed, cfg.grid, cfg.pair_cap, cfg.partners, cfg.sidecar)
        elif stage == "train":
            stage_train(cfg, dirs["datagen"], out)
        elif stage == "eval":
            stage_eval(dirs["train"], dirs["testgen"], dirs[stage], cfg.ks)
        else:
            stage_export(dirs["train"], dirs[stage])
        cache[stage] = keys[stage]
        atomic_write_text(cache_path, json.dumps(cache, indent=2, sort_keys=True) + "\n")
        print(f"{stage},done")
    return 0


# --------------------------------------------------------------------------
# argument parsing


def _ks(text: str) -> list:
    try:
        ks = [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("K values must be positive")
    return ks


def _cap(text: str):
    return None if text.lower() == "none" else int(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lib2vec", description="Vector representations of library cells.")
    p.add_argument("--version", action="version", version=f"lib2vec {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def lib_arg(sp, required=True):
        sp.add_argument("--lib", nargs="+", required=required,
                        help="Liberty files (or builtin:toy / builtin:demo)")

    def grid_arg(sp):
        sp.add_argument("--grid", nargs=2, type=int, default=[16, 16], metavar=("S", "L"),
                        help="condition grid size: slews x loads (default 16 16)")

    sp = sub.add_parser("parse", help="parse Liberty files and print a summary")
    lib_arg(sp)
    sp.add_argument("--json-out", help="write the parsed library as JSON")
    sp.add_argument("--type-rule", action="append", help="suffix regex for cell-type naming (repeatable)")
    sp.set_defaults(func=cmd_parse)

    sp = sub.add_parser("truthtable", help="print a truth table as CSV")
    lib_arg(sp, required=False)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--cell", help="cell name (needs --lib)")
    g.add_argument("--expr", help="boolean expression, e.g. '!(A*B)'")
    sp.add_argument("--pins", help="comma-separated input pins for --expr (default: its variables)")
    sp.add_argument("--max-inputs", type=int, default=boolfn.DEFAULT_MAX_INPUTS, help="input limit")
    sp.set_defaults(func=cmd_truthtable)

    sp = sub.add_parser("testgen", help="generate regularity tests")
    lib_arg(sp)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--seed", type=int, default=0, help="sampler seed")
    grid_arg(sp)
    sp.add_argument("--cap", type=_cap, default=testgen.DEFAULT_ELECTRICAL_CAP,
                    help="electrical tests per property ('none' for all)")
    sp.add_argument("--d", type=int, help="record the embedding size the tests are meant for")
    sp.set_defaults(func=cmd_testgen)

    sp = sub.add_parser("datagen", help="generate self-supervised training data")
    lib_arg(sp)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--seed", type=int, default=0, help="sampler seed")
    grid_arg(sp)
    sp.add_argument("--pair-cap", type=_cap, default=datagen.DEFAULT_PAIR_CAP,
                    help="max functional cell pairs ('none' for all)")
    sp.add_argument("--partners", type=int, default=datagen.DEFAULT_ELEC_PARTNERS,
                    help="electrical difference partners per arc")
    sp.add_argument("--sidecar", action="store_true", help="store electrical targets in a float32 file")
    sp.set_defaults(func=cmd_datagen)

    sp = sub.add_parser("train", help="train both models from a run config")
    sp.add_argument("--config", required=True, help="RunConfig JSON file")
    sp.add_argument("--datasets", help="dataset directory (default: <out>/datasets)")
    sp.add_argument("--out", help="override the config's output directory")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="score embeddings on regularity tests")
    sp.add_argument("--checkpoint", required=True, help="checkpoint file or directory")
    sp.add_argument("--tests", required=True, help="test directory from 'testgen'")
    sp.add_argument("--k", type=_ks, default=[1, 3, 10], help="top-K list, e.g. 1,3,10")
    sp.add_argument("--out", help="directory for scores.csv/json/png (default: next to the checkpoint)")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("export", help="export vectors as CSV plus a PCA scatter")
    sp.add_argument("--checkpoint", required=True, help="checkpoint file or directory")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_export)

    sp = sub.add_parser("analogy", help="rank types for vec(XB) - vec(X) + vec(Y)")
    sp.add_argument("--checkpoint", required=True, help="functional checkpoint file or directory")
    sp.add_argument("--x", required=True, help="type X")
    sp.add_argument("--xb", required=True, help="type X-bar")
    sp.add_argument("--y", required=True, help="type Y")
    sp.add_argument("--top", type=int, default=10, help="ranks to print")
    sp.set_defaults(func=cmd_analogy)

    sp = sub.add_parser("netgen", help="generate random combinational netlists")
    lib_arg(sp, required=False)
    sp.add_argument("--count", type=int, required=True, help="number of netlists")
    sp.add_argument("--seed", type=int, default=0, help="first seed; netlist i uses seed+i")
    sp.add_argument("--out", default="netlists", help="output directory")
    sp.set_defaults(func=cmd_netgen)

    sp = sub.add_parser("simulate", help="logic labels for a netlist")
    sp.add_argument("--netlist", required=True, help="netlist JSON from 'netgen'")
    sp.add_argument("--vectors", type=int, default=netgen.DEFAULT_VECTORS, help="random input vectors")
    sp.add_argument("--seed", type=int, default=0, help="vector seed")
    sp.add_argument("--exact", action="store_true", help="enumerate all inputs instead")
    sp.add_argument("--bits", action="store_true", help="include output bit strings")
    sp.add_argument("--out", help="JSON-lines output file (default: stdout)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("pipeline", help="run every stage, skipping unchanged ones")
    lib_arg(sp, required=False)
    sp.add_argument("--config", help="RunConfig JSON file")
    sp.add_argument("--out", help="run directory")
    sp.add_argument("--d", type=int, help="embedding size")
    sp.add_argument("--seed", type=int, help="global seed")
    sp.add_argument("--grid", nargs=2, type=int, metavar=("S", "L"), help="condition grid size")
    sp.add_argument("--epochs-functional", type=int, help="functional training epochs")
    sp.add_argument("--epochs-electrical", type=int, help="electrical training epochs")
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except Exception as e:  # noqa: BLE001 - every runtime failure becomes a JSON report
        report = {"error": type(e).__name__, "message": str(e), "command": args.command}
        print(json.dumps(report, sort_keys=True), file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
