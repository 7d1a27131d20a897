"""Command-line entry points.

Subcommands: train, embed, probe, cluster, linkpred, gradcheck, sbm,
report. Every command takes --config/--seed/--out/--override and writes
its outputs under the run directory; metrics files carry no timestamps
so identical runs are byte-identical (timestamps live in the manifest
only).
"""

import argparse
import json
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from . import hgio
from .checks import run_gradcheck_suite
from .config import Config, load_config, load_dataset
from .errors import ConfigError, HypergrlError
from .evalsuite import (EdgeSplit, MetricsReport, kmeans, linear_probe,
                        link_predict, make_report, nmi, split_edges, split_nodes)
from .graphstore import (build_dataset, write_edge_file, write_feature_file,
                         write_label_file)
from .trainer import train, embed, save_checkpoint, load_checkpoint

# fixed file names inside a run directory
CHECKPOINT_FILE = "checkpoint.hgc1"
HISTORY_FILE = "history.jsonl"
EMBEDDINGS_FILE = "embeddings.hgb1"
MANIFEST_FILE = "manifest.json"


def _ensure_out(cfg: Config):
    os.makedirs(cfg.out, exist_ok=True)
    return cfg.out


def _update_manifest(cfg: Config, command, outputs):
    """Timestamps are allowed here and only here."""
    path = os.path.join(cfg.out, MANIFEST_FILE)
    manifest = {"fingerprint": cfg.fingerprint(), "version": __version__,
                "outputs": {}, "timestamps": {}}
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    manifest["fingerprint"] = cfg.fingerprint()
    manifest["version"] = __version__
    manifest.setdefault("outputs", {})[command] = outputs
    manifest.setdefault("timestamps", {})[command] = time.strftime(
        "%Y-%m-%dT%H:%M:%S", time.gmtime())
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_metrics(path, report: MetricsReport):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(asdict(report), sort_keys=True) + "\n")


def _read_metrics(path) -> MetricsReport:
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    return MetricsReport(**d)


def _load_cfg(args) -> Config:
    return load_config(args.config, overrides=args.override or (),
                       seed=args.seed, out=args.out)


def _load_embeddings(cfg, args):
    path = getattr(args, "embeddings", None) or os.path.join(cfg.out, EMBEDDINGS_FILE)
    if not os.path.exists(path):
        raise ConfigError(f"embeddings file not found: {path} (run `embed` first?)")
    return hgio.read_matrix(path)


def cmd_train(args):
    cfg = _load_cfg(args)
    g = load_dataset(cfg)
    out = _ensure_out(cfg)
    ckpt, history = train(g, cfg.train)
    ckpt_path = os.path.join(out, CHECKPOINT_FILE)
    hist_path = os.path.join(out, HISTORY_FILE)
    save_checkpoint(ckpt_path, ckpt)
    hgio.write_history(hist_path, history.rows)
    _update_manifest(cfg, "train", {"checkpoint": ckpt_path, "history": hist_path})
    print(f"trained {len(history)} epochs; best loss {ckpt.loss:.6f} "
          f"at epoch {ckpt.epoch}; checkpoint -> {ckpt_path}")
    return 0


def cmd_embed(args):
    cfg = _load_cfg(args)
    g = load_dataset(cfg)
    out = _ensure_out(cfg)
    ckpt_path = args.checkpoint or os.path.join(out, CHECKPOINT_FILE)
    ckpt = load_checkpoint(ckpt_path)
    z = embed(g, ckpt)
    z_path = os.path.join(out, EMBEDDINGS_FILE)
    hgio.write_matrix(z_path, z)
    _update_manifest(cfg, "embed", {"embeddings": z_path})
    print(f"embeddings {z.shape[0]}x{z.shape[1]} -> {z_path}")
    return 0


def cmd_probe(args):
    cfg = _load_cfg(args)
    g = load_dataset(cfg)
    if g.labels is None:
        raise ConfigError("probe needs labels in the dataset")
    out = _ensure_out(cfg)
    z = _load_embeddings(cfg, args)
    seed = cfg.train.seed
    split = split_nodes(g.labels, cfg.eval.probe_fractions, seed=seed)
    split_path = os.path.join(out, "node_split.txt")
    hgio.write_sections(split_path,
                        {"train": split.train, "val": split.val, "test": split.test})
    acc = linear_probe(z, g.labels, split, l2=cfg.eval.probe_l2, seed=seed)
    report = make_report("probe", "accuracy", [acc], cfg.fingerprint())
    metrics_path = os.path.join(out, "probe_metrics.json")
    _write_metrics(metrics_path, report)
    _update_manifest(cfg, "probe", {"metrics": metrics_path, "split": split_path})
    print(f"probe accuracy {acc:.4f} -> {metrics_path}")
    return 0


def cmd_cluster(args):
    cfg = _load_cfg(args)
    g = load_dataset(cfg)
    if g.labels is None:
        raise ConfigError("cluster needs labels to score NMI against")
    out = _ensure_out(cfg)
    z = _load_embeddings(cfg, args)
    seed = cfg.train.seed
    k = cfg.eval.clusters or g.num_classes
    assignments = kmeans(z, k, restarts=cfg.eval.restarts, seed=seed)
    score = nmi(assignments, g.labels)
    report = make_report("cluster", "nmi", [score], cfg.fingerprint())
    metrics_path = os.path.join(out, "cluster_metrics.json")
    _write_metrics(metrics_path, report)
    _update_manifest(cfg, "cluster", {"metrics": metrics_path})
    print(f"k-means (k={k}) NMI {score:.4f} -> {metrics_path}")
    return 0


def linkpred_pipeline(g, cfg: Config, seed: int):
    """Edge split -> encoder trained on the train-only graph -> decoder AUC."""
    split = split_edges(g, cfg.eval.linkpred_fractions, seed=seed)
    train_g = build_dataset(split.train_pos, g.features, labels=g.labels,
                            num_nodes=g.num_nodes)
    held_out = {(int(u), int(v)) for u, v in np.concatenate([split.val_pos,
                                                             split.test_pos])}
    mp_edges = {(int(u), int(v)) for u, v in train_g.edges}
    assert not (held_out & mp_edges), "held-out edge leaked into message passing"
    tcfg_dict = asdict(cfg.train)
    tcfg_dict["seed"] = seed
    tcfg = type(cfg.train)(**tcfg_dict)
    ckpt, _history = train(train_g, tcfg)
    z = embed(train_g, ckpt)
    auc_value = link_predict(z, split, hidden=cfg.eval.decoder_hidden, seed=seed,
                             max_steps=cfg.eval.decoder_steps)
    return auc_value, split


def cmd_linkpred(args):
    cfg = _load_cfg(args)
    g = load_dataset(cfg)
    out = _ensure_out(cfg)
    seed = cfg.train.seed
    auc_value, split = linkpred_pipeline(g, cfg, seed)
    split_path = os.path.join(out, "edge_split.txt")
    hgio.write_sections(split_path, {"train": split.train_pos,
                                     "val": split.val_pos,
                                     "test": split.test_pos})
    hgio.write_sections(split_path + ".neg", {"train": split.train_neg,
                                              "val": split.val_neg,
                                              "test": split.test_neg})
    report = make_report("linkpred", "auc", [auc_value], cfg.fingerprint())
    metrics_path = os.path.join(out, "linkpred_metrics.json")
    _write_metrics(metrics_path, report)
    _update_manifest(cfg, "linkpred", {"metrics": metrics_path, "split": split_path})
    print(f"link prediction AUC {auc_value:.4f} -> {metrics_path}")
    return 0


def cmd_gradcheck(args):
    cfg = _load_cfg(args) if args.config else Config(out=args.out or "runs/gradcheck")
    if args.out:
        cfg.out = args.out
    out = _ensure_out(cfg)
    rows = run_gradcheck_suite(seed=args.seed if args.seed is not None else 0)
    all_pass = True
    results = []
    for name, tol, report in rows:
        status = "PASS" if report.passed else "FAIL"
        all_pass &= report.passed
        print(f"{status} {name:16s} max_rel_err={report.max_rel_err:.3e} tol={tol:g}")
        results.append({"name": name, "tol": tol,
                        "max_rel_err": report.max_rel_err, "passed": report.passed})
    path = os.path.join(out, "gradcheck.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"all_passed": all_pass, "checks": results},
                            sort_keys=True) + "\n")
    print(("all gradient checks passed" if all_pass else
           "GRADIENT CHECK FAILURES") + f" -> {path}")
    return 0 if all_pass else 1


def cmd_sbm(args):
    cfg = _load_cfg(args)
    if "sbm" not in cfg.dataset:
        raise ConfigError("sbm command needs a dataset.sbm section in the config")
    g = load_dataset(cfg)
    out = _ensure_out(cfg)
    edge_path = os.path.join(out, "edges.tsv")
    feat_path = os.path.join(out, "features.hgb1")
    label_path = os.path.join(out, "labels.tsv")
    write_edge_file(edge_path, g.edges)
    write_feature_file(feat_path, g.features)
    write_label_file(label_path, g.labels)
    _update_manifest(cfg, "sbm", {"edges": edge_path, "features": feat_path,
                                  "labels": label_path})
    print(f"SBM dataset: {g.num_nodes} nodes, {g.num_edges} edges -> {out}")
    return 0


def write_report(reports, path_prefix):
    """Aggregate MetricsReports (same fingerprint) into JSON + text."""
    if not reports:
        raise ConfigError("no reports to aggregate")
    prints = {r.fingerprint for r in reports}
    if len(prints) > 1:
        raise ConfigError(f"refusing to mix reports from different configs: {sorted(prints)}")
    grouped = {}
    for r in reports:
        grouped.setdefault((r.task, r.metric), []).extend(r.values)
    rows = []
    for (task, metric), values in sorted(grouped.items()):
        arr = np.asarray(values, dtype=np.float64)
        rows.append({"task": task, "metric": metric, "n": int(arr.size),
                     "mean": float(arr.mean()), "std": float(arr.std(ddof=0))})
    json_path = path_prefix + ".json"
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"fingerprint": reports[0].fingerprint, "rows": rows},
                            sort_keys=True) + "\n")
    text_path = path_prefix + ".txt"
    with open(text_path, "w", encoding="utf-8") as fh:
        fh.write(f"{'task':<12s} {'metric':<10s} {'n':>3s} {'mean':>10s} {'std':>10s}\n")
        for row in rows:
            fh.write(f"{row['task']:<12s} {row['metric']:<10s} {row['n']:>3d} "
                     f"{row['mean']:>10.4f} {row['std']:>10.4f}\n")
    return rows


def cmd_report(args):
    reports = [_read_metrics(p) for p in args.metrics]
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    prefix = os.path.join(out_dir, "report")
    rows = write_report(reports, prefix)
    for row in rows:
        print(f"{row['task']:<12s} {row['metric']:<10s} n={row['n']} "
              f"{row['mean']:.4f} +/- {row['std']:.4f}")
    print(f"report -> {prefix}.json, {prefix}.txt")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hypergrl",
        description="Self-supervised hyperspherical graph embeddings: "
                    "train, evaluate, and verify.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", required=False, default=None,
                       help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the training/eval seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="config override, dotted path (repeatable)")

    p = sub.add_parser("train", help="self-supervised training run")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="write inference embeddings from a checkpoint")
    common(p)
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("probe", help="linear-probe accuracy on frozen embeddings")
    common(p)
    p.add_argument("--embeddings", default=None)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("cluster", help="k-means + NMI on frozen embeddings")
    common(p)
    p.add_argument("--embeddings", default=None)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("linkpred", help="edge split, retrain, MLP-decoder AUC")
    common(p)
    p.set_defaults(func=cmd_linkpred)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sbm", help="generate a synthetic dataset on disk")
    common(p)
    p.set_defaults(func=cmd_sbm)

    p = sub.add_parser("report", help="aggregate metrics JSON files across seeds")
    p.add_argument("metrics", nargs="+", help="metrics JSON files")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HypergrlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
