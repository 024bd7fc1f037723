"""Command line entry point: synth | fc | spectral | train | score | tree | age | report."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import brain_tree
from .age_gcn import (METRIC_COLUMNS, TrainConfig, cohort_features, load_checkpoint, make_batch,
                      predict, save_checkpoint, train)
from .cohort_io import SynthSpec, destandardize_age, generate_synthetic, load_cohort, save_cohort, write_matrix
from .fc_builder import OdeParams, dynamic_fc, pearson_fc
from .khop_operator import convergence_profile
from .pipeline import subject_scores, subject_tree

logger = logging.getLogger("neurotree")

COMMANDS = ("synth", "fc", "spectral", "train", "score", "tree", "age", "report")
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) for x in row) + "\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="neurotree", description=__doc__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--seed", type=int)
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("--config", type=Path)
        s.add_argument("--in", dest="inp", type=Path)
        s.add_argument("--out", type=Path)
        s.add_argument("--dynamic-backend", choices=["pearson", "ode"])
        s.add_argument("--lambda", dest="lam", type=float)
        s.add_argument("--khops", type=int)
        s.add_argument("--alpha", type=float)
        s.add_argument("--levels", type=int)
        s.add_argument("--epochs", type=int)
        s.add_argument("--batch", type=int)
        s.add_argument("--lr", type=float)
        s.add_argument("--checkpoint", type=Path)
        s.add_argument("--subject")
        s.add_argument("--alpha-sweep", action="store_true")
    return p


def load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise CliError(f"malformed config {path}: {exc}") from exc


def _section(cfg: dict, name: str, cls) -> dict:
    allowed = {f.name for f in fields(cls)}
    sec = cfg.get(name, {})
    unknown = set(sec) - allowed
    if unknown:
        raise CliError(f"unknown keys in [{name}]: {sorted(unknown)}")
    return sec


def _override(obj, **flags):
    return replace(obj, **{k: v for k, v in flags.items() if v is not None})


def resolve(args, cfg: dict) -> dict:
    """Merge defaults, config sections and flags (flags win)."""
    run = cfg.get("run", {})
    train_cfg = _override(TrainConfig(**_section(cfg, "train", TrainConfig)),
                          seed=args.seed, lam=args.lam, K=args.khops, epochs=args.epochs,
                          batch_size=args.batch, learning_rate=args.lr)
    synth = _override(SynthSpec(**_section(cfg, "synth", SynthSpec)), seed=args.seed)
    ode = OdeParams(**_section(cfg, "ode", OdeParams))
    tree = cfg.get("tree", {})
    return {
        "train": train_cfg,
        "synth": synth,
        "ode": ode,
        "backend": args.dynamic_backend or run.get("dynamic_backend", "pearson"),
        "alpha": args.alpha if args.alpha is not None else tree.get("alpha", 0.5),
        "levels": args.levels if args.levels is not None else tree.get("levels", 3),
        "max_order": tree.get("max_order", 2),
        "quantile": tree.get("quantile", 0.5),
        "inp": args.inp or (Path(run["in"]) if "in" in run else None),
        "out": args.out or (Path(run["out"]) if "out" in run else None),
        "checkpoint": args.checkpoint,
    }


def _need(r, key):
    if r[key] is None:
        raise CliError(f"--{'in' if key == 'inp' else key} is required")
    return r[key]


def _features(r, cohort, jobs):
    t = r["train"]
    return cohort_features(cohort.subjects, t.lam, t.K, t.n_segments, r["backend"], r["ode"], jobs)


def _checkpoint(r):
    path = r["checkpoint"] or (_need(r, "inp") / "checkpoint.json")
    if not path.exists():
        raise CliError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def cmd_synth(args, r):
    out = _need(r, "out")
    save_cohort(generate_synthetic(r["synth"]), out)
    (out / "synth.json").write_text(json.dumps(asdict(r["synth"]), indent=1, sort_keys=True) + "\n")


def cmd_fc(args, r):
    cohort = load_cohort(_need(r, "inp"))
    out = _need(r, "out")
    t = r["train"]

    def one(s):
        d = out / s.subject_id
        d.mkdir(parents=True, exist_ok=True)
        write_matrix(d / "static.csv", pearson_fc(s.signal).data)
        ode = OdeParams(r["ode"].eta, r["ode"].rho, s.age)
        for m in dynamic_fc(s.signal, t.n_segments, r["backend"], ode):
            write_matrix(d / f"dynamic_{m.segment_index}.csv", m.data)

    with ThreadPoolExecutor(max_workers=max(args.jobs, 1)) as pool:
        list(pool.map(one, cohort.subjects))


def cmd_spectral(args, r):
    cohort = load_cohort(_need(r, "inp"))
    out = _need(r, "out")
    out.mkdir(parents=True, exist_ok=True)
    t = r["train"]
    subjects = cohort.subjects
    if args.subject:
        subjects = [s for s in subjects if s.subject_id == args.subject]
        if not subjects:
            raise CliError(f"unknown subject {args.subject}")
    k_max = max(t.K, 8)
    profiles = []
    for s in subjects:
        a_s = pearson_fc(s.signal).data
        ode = OdeParams(r["ode"].eta, r["ode"].rho, s.age)
        for m in dynamic_fc(s.signal, t.n_segments, r["backend"], ode):
            profiles.append(convergence_profile(a_s, m.data, None, t.lam, k_max))
    mean = np.mean(np.array(profiles, dtype=float), axis=0)
    rows = [(int(row[0]), row[1], row[2], row[3]) for row in mean]
    write_csv(out / "spectral.csv", ["k", "phi_norm", "ahat_norm", "bound"], rows)


def cmd_train(args, r):
    cohort = load_cohort(_need(r, "inp"))
    out = _need(r, "out")
    out.mkdir(parents=True, exist_ok=True)
    feats = _features(r, cohort, args.jobs)
    model, metrics, (tr, va) = train(feats, r["train"])
    model.config.update({"dynamic_backend": r["backend"], "ode": asdict(r["ode"])})
    save_checkpoint(model, out / "checkpoint.json")
    write_csv(out / "metrics.csv", METRIC_COLUMNS, (m.row() for m in metrics))
    write_csv(out / "split.csv", ["subject_id", "split"],
              sorted([(feats[i].subject_id, "train") for i in tr]
                     + [(feats[i].subject_id, "val") for i in va]))


def _model_and_features(args, r):
    model = _checkpoint(r)
    # the operator settings used in training travel with the checkpoint
    r["train"] = replace(r["train"], lam=model.config.get("lam", r["train"].lam), K=model.K,
                         n_segments=model.config.get("n_segments", r["train"].n_segments))
    if args.dynamic_backend is None:
        r["backend"] = model.config.get("dynamic_backend", r["backend"])
    cohort = load_cohort(_need(r, "inp"))
    return model, cohort, _features(r, cohort, args.jobs)


def cmd_score(args, r):
    model, cohort, feats = _model_and_features(args, r)
    out = _need(r, "out")
    out.mkdir(parents=True, exist_ok=True)
    for f, sc in zip(feats, subject_scores(model, feats, r["train"].step)):
        position = np.empty(len(sc.s), dtype=int)
        position[sc.rank] = np.arange(len(sc.s))
        rows = [(i, cohort.region_name(i), sc.s[i], position[i]) for i in range(len(sc.s))]
        write_csv(out / f"{f.subject_id}.scores.csv",
                  ["region_index", "region_name", "score", "rank"], rows)


def cmd_tree(args, r):
    model, cohort, feats = _model_and_features(args, r)
    out = _need(r, "out")
    out.mkdir(parents=True, exist_ok=True)
    cfg = brain_tree.PathWeightConfig(r["alpha"], r["max_order"])
    scores = subject_scores(model, feats, r["train"].step)

    def one(pair):
        f, sc = pair
        return subject_tree(f, sc, cfg, r["levels"], r["quantile"])

    with ThreadPoolExecutor(max_workers=max(args.jobs, 1)) as pool:
        trees = list(pool.map(one, zip(feats, scores)))
    for st in trees:
        dot, js = brain_tree.export_tree(st.hierarchy, cohort.region_labels, cohort.network_map)
        (out / f"{st.subject_id}.dot").write_text(dot)
        (out / f"{st.subject_id}.tree.json").write_text(js)
    if args.alpha_sweep:
        alphas = np.linspace(0.0, 1.0, 11)
        rows = brain_tree.alpha_sweep([(st.tree, st.scores, st.label) for st in trees],
                                      alphas, r["max_order"])
        write_csv(out / "alpha_sweep.csv", ["alpha", "label", "mean_weight"], rows)


def cmd_age(args, r):
    model, cohort, feats = _model_and_features(args, r)
    out = _need(r, "out")
    out.mkdir(parents=True, exist_ok=True)
    _, age_hat, _ = predict(model, make_batch(feats), r["train"].step)
    pred = destandardize_age(age_hat)
    rows = [(f.subject_id, s.age, p, p - s.age) for f, s, p in zip(feats, cohort.subjects, pred)]
    write_csv(out / "ages.csv", ["subject_id", "age", "predicted_age", "age_gap"], rows)


def cmd_report(args, r):
    root = _need(r, "inp")
    summary = {}
    for path in sorted(root.rglob("metrics*.csv")):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            continue
        last = {k: float(v) for k, v in rows[-1].items()}
        aucs = [float(row["val_auc"]) for row in rows]
        summary[str(path.relative_to(root))] = {
            "epochs": len(rows),
            "final": last,
            "best_val_auc": max(aucs),
            "max_phi_norm": max(float(row["phi_norm_max"]) for row in rows),
        }
    text = json.dumps(summary, indent=1, sort_keys=True) + "\n"
    out = r["out"]
    if out is None:
        sys.stdout.write(text)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(text)


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def _error_line(exc: BaseException) -> str:
    module = type(exc).__module__.split(".")[-1] if type(exc).__module__ != "builtins" else "cli"
    if isinstance(exc, CliError):
        module = "cli"
    return json.dumps({"error": type(exc).__name__, "module": module, "message": str(exc)})


def run(argv=None) -> int:
    level = os.environ.get("NEUROTREE_LOG", "error").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise CliError(f"a subcommand is required: {' | '.join(COMMANDS)}")
        r = resolve(args, load_config(args.config))
        HANDLERS[args.command](args, r)
    except (CliError, ValueError, OSError, RuntimeError, KeyError, TypeError) as exc:
        sys.stderr.write(_error_line(exc) + "\n")
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
