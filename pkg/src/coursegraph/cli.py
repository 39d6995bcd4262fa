"""Command-line interface: generate, project, train, eval, ablate, pipeline.

Exit codes: 0 success, 1 usage error, 2 data/schema/config error,
3 numeric fault. All outputs are written atomically and every run leaves
a manifest sufficient to reproduce it.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import __version__, artifacts, evaluate, synth, trainer
from .errors import (ConfigError, CourseGraphError, NumericFault, ParseError,
                     SchemaError)
from .hin import degree_filter, load_features, load_hin, load_labels
from .metapath import DEFAULT_METAPATHS, dump_adjacency, metapaths_from_labels, project_all
from .synth import SynthConfig
from .trainer import TrainAborted, TrainConfig, save_checkpoint

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(message)


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat `key = value` file; '#' starts a comment."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


_TRAIN_FLAGS = [
    ("--lam-q", "lam_q", float), ("--lam-j", "lam_j", float),
    ("--lam-s", "lam_s", float), ("--lam-y", "lam_y", float),
    ("--epochs", "epochs", int), ("--lr", "lr", float),
    ("--weight-decay", "weight_decay", float), ("--dropout", "dropout", float),
    ("--k", "k", int), ("--attn-dim", "attn_dim", int),
    ("--depth", "depth", int), ("--seed", "seed", int),
    ("--max-pos", "max_pos", int),
    ("--checkpoint-interval", "checkpoint_interval", int),
    ("--optimizer", "optimizer", str),
    ("--importance-mean", "importance_mean", str),
]


def add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    for flag, dest, ftype in _TRAIN_FLAGS:
        p.add_argument(flag, dest=dest, type=ftype, default=None)
    p.add_argument("--share-view-weights", action="store_true", default=None,
                   dest="share_view_weights")
    p.add_argument("--share-agreement-disc", action="store_true", default=None,
                   dest="share_agreement_disc")


def build_train_config(args, d: int) -> TrainConfig:
    """Defaults < config file < explicit flags; feature dim comes from data."""
    mapping: dict[str, object] = {}
    if args.config:
        mapping.update(parse_config_file(args.config))
    for _, dest, _ in _TRAIN_FLAGS:
        value = getattr(args, dest, None)
        if value is not None:
            mapping[dest] = value
    for dest in ("share_view_weights", "share_agreement_disc"):
        value = getattr(args, dest, None)
        if value is not None:
            mapping[dest] = value
    cfg = TrainConfig.from_mapping(mapping)
    if "d" in mapping and cfg.d != d:
        raise ConfigError(f"configured feature dim {cfg.d} does not match "
                          f"the data ({d})")
    cfg = replace(cfg, d=d)
    cfg.validate()
    return cfg


def sniff_feature_dim(path: Path) -> int:
    if not path.exists():
        raise SchemaError(f"features file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
    if len(header) < 2 or header[0] != "course_id":
        raise ParseError(f"{path}:1: bad features header")
    return len(header) - 1


def load_dataset(data_dir: str | Path, min_links: int = 0,
                 need_labels: bool = True):
    data_dir = Path(data_dir)
    for name in ("nodes.tsv", "edges.tsv", "features.tsv"):
        if not (data_dir / name).exists():
            raise SchemaError(f"missing data file: {data_dir / name}")
    g = load_hin(data_dir / "nodes.tsv", data_dir / "edges.tsv")
    if min_links > 0:
        g = degree_filter(g, min_links)
    d = sniff_feature_dim(data_dir / "features.tsv")
    X = load_features(data_dir / "features.tsv", g, d)
    labels = None
    if need_labels:
        labels_path = data_dir / "labels.tsv"
        if not labels_path.exists():
            raise SchemaError(f"missing data file: {labels_path}")
        labels = load_labels(labels_path, g)
    return g, X, labels, d


def base_manifest(args, extra: dict) -> dict:
    entries = {"version": __version__, "command": args.command}
    entries.update(extra)
    return entries


def cfg_manifest(cfg: TrainConfig) -> dict:
    return {f"cfg.{f.name}": getattr(cfg, f.name) for f in fields(cfg)}


# -- commands --------------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = SynthConfig(n_courses=args.courses, n_students=args.students,
                      n_teachers=args.teachers, n_subjects=args.subjects,
                      n_classes=args.classes, d=args.dim, p_in=args.p_in,
                      p_out=args.p_out, sigma_f=args.sigma_f, seed=args.seed,
                      noise_views=frozenset(args.noise_view or []))
    g, X, labels, = synth.generate(cfg)
    out = Path(args.out)
    synth.write_dataset(out, g, X, labels, cfg)
    artifacts.write_manifest(out / "manifest.tsv", base_manifest(args, {
        "seed": cfg.seed, "courses": cfg.n_courses, "classes": cfg.n_classes}))
    print(f"wrote dataset with {g.n_nodes} nodes, {len(g.edges)} edges to {out}")
    return EXIT_OK


def cmd_project(args) -> int:
    g, _, _, _ = load_dataset(args.data_dir, min_links=args.min_links,
                              need_labels=False)
    mps = metapaths_from_labels(args.metapaths)
    views = project_all(g, mps, weighted=args.weighted)
    for view in views:
        print(f"{view.metapath.label}\tcourses={view.A.shape[0]}"
              f"\tedges={view.n_edges}")
    if args.dump_adjacency:
        paths = dump_adjacency(views, args.dump_adjacency)
        for p in paths:
            print(f"wrote {p}")
    return EXIT_OK


def _write_run_outputs(out: Path, g, emb, report, params, args,
                       cfg: TrainConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    course_ids = g.course_external_ids()
    artifacts.write_training_log(out / "training_log.tsv", report)
    artifacts.atomic_write_text(out / "attention.tsv",
                                artifacts.attention_block(emb.view_labels, emb.alpha))
    artifacts.write_embeddings(out / "embeddings_unified.tsv", course_ids,
                               emb.unified)
    for label, H in zip(emb.view_labels, emb.per_view):
        artifacts.write_embeddings(out / f"embeddings_{label}.tsv", course_ids, H)
    save_checkpoint(out / "params.npz", params)
    entries = base_manifest(args, {"data_dir": args.data_dir,
                                   "metapaths": args.metapaths,
                                   "min_links": args.min_links,
                                   "wall_clock_s": f"{report.wall_clock:.3f}"})
    entries.update(cfg_manifest(cfg))
    artifacts.write_manifest(out / "manifest.tsv", entries)


def _train_for_cli(args, out: Path):
    g, X, _, d = load_dataset(args.data_dir, min_links=args.min_links,
                              need_labels=False)
    cfg = build_train_config(args, d=d)
    mps = metapaths_from_labels(args.metapaths)
    try:
        params, emb, report = trainer.train(g, X, mps, cfg)
    except TrainAborted as exc:
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "params_lastgood.npz", exc.params)
        artifacts.write_training_log(out / "training_log.tsv", exc.report)
        print(f"error: {exc} (last-good checkpoint written to "
              f"{out / 'params_lastgood.npz'})", file=sys.stderr)
        raise
    return g, cfg, params, emb, report


def cmd_train(args) -> int:
    out = Path(args.out)
    g, cfg, params, emb, report = _train_for_cli(args, out)
    _write_run_outputs(out, g, emb, report, params, args, cfg)
    if args.report_attention:
        print(artifacts.attention_block(emb.view_labels, emb.alpha), end="")
    print(f"trained {cfg.epochs} epochs; outputs in {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    g, _, labels, _ = load_dataset(args.data_dir, min_links=args.min_links)
    ids, H = artifacts.read_embeddings(Path(args.run) / "embeddings_unified.tsv")
    order = np.empty(len(ids), dtype=np.intp)
    for row, ext in enumerate(ids):
        order[g.course_local(g.node_by_external(ext).node_id)] = row
    acc, f1 = evaluate.evaluate_embeddings(H[order], labels, ratio=args.ratio,
                                           seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts.write_metrics(out / "metrics.tsv",
                            [evaluate.MetricsRow("unified", acc, f1)])
    artifacts.write_manifest(out / "manifest.tsv", base_manifest(args, {
        "data_dir": args.data_dir, "run": args.run, "seed": args.seed,
        "ratio": args.ratio}))
    print(f"accuracy={acc:.4f}\tmacro_f1={f1:.4f}")
    return EXIT_OK


def _parse_seeds(spec: str) -> list[int]:
    try:
        return [int(s) for s in spec.split(",") if s.strip() != ""]
    except ValueError:
        raise UsageError(f"bad --seeds value {spec!r}") from None


def _cmd_ablate(args, kind: str) -> int:
    g, X, labels, d = load_dataset(args.data_dir, min_links=args.min_links)
    cfg = build_train_config(args, d=d)
    seeds = _parse_seeds(args.seeds)
    mps = metapaths_from_labels(args.metapaths)
    if kind == "metapaths":
        rows = evaluate.ablate_metapaths(g, X, labels, cfg, seeds=seeds,
                                         mps=mps, jobs=args.jobs)
        header = "metapaths"
    else:
        rows = evaluate.ablate_losses(g, X, labels, cfg, seeds=seeds, mps=mps,
                                      include_base=args.include_base,
                                      jobs=args.jobs)
        header = "losses"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts.write_metrics(out / f"ablation_{kind}.tsv", rows)
    entries = base_manifest(args, {"data_dir": args.data_dir,
                                   "seeds": args.seeds, "jobs": args.jobs})
    entries.update(cfg_manifest(cfg))
    artifacts.write_manifest(out / "manifest.tsv", entries)
    if args.render_table:
        print(evaluate.render_metrics_table(rows, header))
    else:
        for r in rows:
            print(f"{r.setting}\t{r.accuracy:.4f}\t{r.macro_f1:.4f}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    out = Path(args.out)
    g, cfg, params, emb, report = _train_for_cli(args, out)
    _write_run_outputs(out, g, emb, report, params, args, cfg)
    _, _, labels, _ = load_dataset(args.data_dir, min_links=args.min_links)
    acc, f1 = evaluate.evaluate_embeddings(emb.unified, labels,
                                           ratio=args.ratio, seed=cfg.seed)
    artifacts.write_metrics(out / "metrics.tsv",
                            [evaluate.MetricsRow("unified", acc, f1)])
    if args.report_attention:
        print(artifacts.attention_block(emb.view_labels, emb.alpha), end="")
    print(f"accuracy={acc:.4f}\tmacro_f1={f1:.4f}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def make_parser() -> Parser:
    parser = Parser(prog="coursegraph",
                    description="Multi-view course embeddings from a typed "
                                "interaction network")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--courses", type=int, default=300)
    p.add_argument("--students", type=int, default=200)
    p.add_argument("--teachers", type=int, default=30)
    p.add_argument("--subjects", type=int, default=9)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--p-in", type=float, default=0.15)
    p.add_argument("--p-out", type=float, default=0.01)
    p.add_argument("--sigma-f", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-view", action="append",
                   help="make this view's links uniform (repeatable)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("project", help="project meta-path views")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--metapaths", default="MP1&MP2&MP3")
    p.add_argument("--weighted", action="store_true")
    p.add_argument("--min-links", type=int, default=0)
    p.add_argument("--dump-adjacency", metavar="DIR")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("train", help="train embeddings")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metapaths", default="MP1&MP2&MP3")
    p.add_argument("--min-links", type=int, default=3)
    p.add_argument("--report-attention", action="store_true")
    add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a run's unified embeddings")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--run", required=True, help="directory written by train")
    p.add_argument("--out", required=True)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-links", type=int, default=3)
    p.set_defaults(func=cmd_eval)

    for kind in ("metapaths", "losses"):
        p = sub.add_parser(f"ablate-{kind}",
                           help=f"train and evaluate {kind} combinations")
        p.add_argument("--data-dir", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--metapaths", default="MP1&MP2&MP3")
        p.add_argument("--seeds", default="0")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--min-links", type=int, default=3)
        p.add_argument("--render-table", action="store_true")
        if kind == "losses":
            p.add_argument("--include-base", action="store_true")
        add_train_flags(p)
        p.set_defaults(func=lambda a, kind=kind: _cmd_ablate(a, kind))

    p = sub.add_parser("pipeline", help="project, train and evaluate")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metapaths", default="MP1&MP2&MP3")
    p.add_argument("--min-links", type=int, default=3)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--report-attention", action="store_true")
    add_train_flags(p)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericFault as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CourseGraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
