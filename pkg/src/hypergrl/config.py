"""JSON experiment configs: parsing, validation, overrides, fingerprints.

A config has up to five top-level sections::

    {
      "dataset": {"edges": "...", "features": "...", "labels": "..."}
                 or {"sbm": {"block_sizes": [...], "p_in": .., "p_out": ..,
                             "feature_noise": .., "seed": ..}},
      "train":   {... TrainConfig fields ...},
      "eval":    {... EvalConfig fields ...},
      "out":     "runs/exp1",
      "seeds":   [0, 1, 2]
    }

Unknown keys are rejected with the list of valid ones. The fingerprint
hashes the resolved dataset/train/eval sections with training seeds
excluded, so sweeps over seeds share a fingerprint and their reports can
be aggregated.
"""

import json
import os
from dataclasses import dataclass, field, asdict, fields as dc_fields

from .errors import ConfigError, ParseError
from .graphstore import GraphDataset, generate_sbm, load_graph
from .trainer import TrainConfig, config_fingerprint

TOP_KEYS = ("dataset", "train", "eval", "out", "seeds")
DATASET_KEYS = ("edges", "features", "labels", "sbm")
SBM_KEYS = ("block_sizes", "p_in", "p_out", "feature_noise", "seed")


@dataclass
class EvalConfig:
    probe_fractions: tuple = (0.1, 0.1, 0.8)
    probe_l2: float | None = None
    clusters: int | None = None          # default: dataset num_classes
    restarts: int = 10
    linkpred_fractions: tuple = (0.85, 0.05, 0.10)
    decoder_hidden: int = 256
    decoder_steps: int = 300

    def __post_init__(self):
        for name in ("probe_fractions", "linkpred_fractions"):
            fr = tuple(getattr(self, name))
            setattr(self, name, fr)
            if len(fr) != 3 or min(fr) < 0 or sum(fr) > 1 + 1e-9:
                raise ConfigError(f"{name} must be three nonnegative values summing <= 1")


@dataclass
class Config:
    dataset: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    out: str = "runs/default"
    seeds: list = field(default_factory=lambda: [0])

    def fingerprint(self) -> str:
        body = {"dataset": self.dataset,
                "train": {k: v for k, v in asdict(self.train).items() if k != "seed"},
                "eval": asdict(self.eval)}
        return config_fingerprint(body, exclude=())


def _check_keys(mapping, allowed, where):
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {where} key(s) {unknown}; valid keys: {sorted(allowed)}")


def _build_section(cls, mapping, where):
    valid = {f.name for f in dc_fields(cls)}
    _check_keys(mapping, valid, where)
    try:
        return cls(**mapping)
    except TypeError as exc:
        raise ConfigError(f"bad {where} section: {exc}") from None


def parse_config(data: dict) -> Config:
    _check_keys(data, TOP_KEYS, "top-level")
    dataset = dict(data.get("dataset", {}))
    _check_keys(dataset, DATASET_KEYS, "dataset")
    if "sbm" in dataset:
        _check_keys(dataset["sbm"], SBM_KEYS, "dataset.sbm")
    for key in ("edges", "features", "labels"):
        path = dataset.get(key)
        if path is not None and not os.path.exists(path):
            raise ConfigError(f"dataset.{key} path does not exist: {path}")
    train = _build_section(TrainConfig, dict(data.get("train", {})), "train")
    ev = _build_section(EvalConfig, dict(data.get("eval", {})), "eval")
    seeds = list(data.get("seeds", [train.seed]))
    if not seeds:
        raise ConfigError("seeds list may not be empty")
    return Config(dataset=dataset, train=train, eval=ev,
                  out=str(data.get("out", "runs/default")), seeds=seeds)


def _parse_override_value(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw  # bare strings like gcn need no quoting


def apply_overrides(data: dict, overrides):
    """Dotted-path assignments, e.g. train.lr=0.01 or seeds=[0,1]."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-section")
        node[parts[-1]] = _parse_override_value(raw.strip())
    return data


def load_config(path=None, overrides=(), seed=None, out=None) -> Config:
    data = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(path, exc.lineno, f"bad JSON: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config root must be a JSON object")
    apply_overrides(data, overrides)
    cfg = parse_config(data)
    if seed is not None:
        cfg.train.seed = int(seed)
        cfg.seeds = [int(seed)]
    if out is not None:
        cfg.out = str(out)
    return cfg


def load_dataset(cfg: Config) -> GraphDataset:
    ds = cfg.dataset
    if "sbm" in ds:
        spec = dict(ds["sbm"])
        return generate_sbm(spec["block_sizes"], spec.get("p_in", 0.1),
                            spec.get("p_out", 0.01), spec.get("feature_noise", 0.1),
                            spec.get("seed", 0))
    if "edges" not in ds or "features" not in ds:
        raise ConfigError("dataset needs either an 'sbm' spec or 'edges' + 'features' paths")
    return load_graph(ds["edges"], ds["features"], ds.get("labels"))
