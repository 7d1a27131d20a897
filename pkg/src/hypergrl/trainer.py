"""Full-batch self-supervised training loop.

Each epoch: draw a fresh augmented view, encode, evaluate the combined
objective, backprop, Adam step, then let the entropy controller adjust
alpha for the NEXT epoch (the alpha recorded for an epoch is the one its
loss actually used). Early stopping keeps the parameters at the minimum
recorded training loss, ties broken toward the earliest epoch.
"""

import hashlib
import json
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import diffcore as dc
from . import hgio
from .egab import EgabState, epoch_update
from .encoder import init_params, params_from_values, encode
from .errors import ConfigError, TrainingDiverged
from .graphstore import GraphDataset, augment, identity_view
from .objective import ObjectiveSettings, total_loss


@dataclass
class TrainConfig:
    epochs: int = 1500
    lr: float = 1e-3
    weight_decay: float = 1e-5
    k: int = 1
    tau: float = 5.0
    p_e: float = 0.8
    p_x: float = 0.1
    d: int = 1024
    hidden_dim: int | None = None
    num_layers: int = 2
    backbone: str = "gcn"
    seed: int = 0
    patience: int = 200
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    detach_target: bool = False
    self_in_mean: bool = False
    mean_graph: str = "original"
    degree_source: str = "original"
    use_align: bool = True
    use_unif: bool = True
    egab_enabled: bool = True
    alpha0: float = 1.0
    alpha_min: float = 0.0
    alpha_max: float = 2.0
    beta: float = 5.0
    gamma: float = 0.1
    h_target: float | str = 1.5  # or "logd" for log(embedding dim)

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if not 0.0 <= self.p_e < 1.0:
            raise ConfigError(f"p_e={self.p_e} outside [0, 1)")
        if not 0.0 <= self.p_x < 1.0:
            raise ConfigError(f"p_x={self.p_x} outside [0, 1)")
        if self.d < 1:
            raise ConfigError(f"embedding dim must be >= 1, got {self.d}")
        if self.patience < 0:
            raise ConfigError(f"patience must be nonnegative, got {self.patience}")

    def resolved_h_target(self) -> float:
        if self.h_target == "logd":
            return math.log(self.d)
        return float(self.h_target)

    def objective_settings(self) -> ObjectiveSettings:
        return ObjectiveSettings(k=self.k, tau=self.tau,
                                 detach_target=self.detach_target,
                                 self_in_mean=self.self_in_mean,
                                 mean_graph=self.mean_graph,
                                 degree_source=self.degree_source,
                                 use_align=self.use_align,
                                 use_unif=self.use_unif)

    def fingerprint(self) -> str:
        return config_fingerprint(asdict(self))


def config_fingerprint(mapping, exclude=("seed",)):
    """Content hash of a config mapping, independent of key order and of
    the excluded fields (seed sweeps share one fingerprint)."""
    clean = {k: v for k, v in mapping.items() if k not in exclude}
    blob = json.dumps(clean, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class TrainHistory:
    rows: list = field(default_factory=list)
    wall_clock: list = field(default_factory=list)  # kept out of the file

    def append(self, row, seconds):
        self.rows.append(row)
        self.wall_clock.append(seconds)

    def __len__(self):
        return len(self.rows)

    def totals(self):
        return np.asarray([r["total"] for r in self.rows])

    def series(self, key):
        return np.asarray([r[key] for r in self.rows])


@dataclass
class Checkpoint:
    backbone: str
    param_values: list
    epoch: int
    loss: float
    fingerprint: str
    seed: int


def epoch_seed(seed: int, epoch: int) -> int:
    """Counter-mixed per-epoch augmentation seed."""
    return int(np.random.SeedSequence([int(seed), int(epoch)])
               .generate_state(1, dtype=np.uint64)[0])


def train(g: GraphDataset, cfg: TrainConfig):
    """Run the loop; returns (best Checkpoint, TrainHistory)."""
    if g.num_nodes == 0:
        raise ConfigError("cannot train on an empty graph")
    settings = cfg.objective_settings()
    state = EgabState(alpha=cfg.alpha0, alpha_min=cfg.alpha_min,
                      alpha_max=cfg.alpha_max, beta=cfg.beta, gamma=cfg.gamma,
                      h_target=cfg.resolved_h_target(), enabled=cfg.egab_enabled)
    params = init_params(g.num_features, cfg.d, num_layers=cfg.num_layers,
                         hidden_dim=cfg.hidden_dim, backbone=cfg.backbone,
                         seed=cfg.seed)
    leaves = params.trainable()
    opt = dc.adam_init(leaves)
    fingerprint = cfg.fingerprint()

    history = TrainHistory()
    best_loss = math.inf
    best_epoch = -1
    best_values = None
    since_best = 0

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        view = augment(g, cfg.p_e, cfg.p_x, epoch_seed(cfg.seed, epoch))
        dc.zero_grads(leaves)
        with dc.Tape() as tape:
            total_t, bd, _z = total_loss(view, params, settings, alpha=state.alpha)
        if not math.isfinite(bd.total):
            raise TrainingDiverged(epoch, bd)
        tape.backward(total_t)
        if bd.total < best_loss:  # strict: earliest epoch wins ties
            best_loss = bd.total
            best_epoch = epoch
            best_values = [v.copy() for v in params.value_list()]
            since_best = 0
        else:
            since_best += 1
        dc.adam_step(leaves, opt, lr=cfg.lr, beta1=cfg.adam_beta1,
                     beta2=cfg.adam_beta2, eps=cfg.adam_eps,
                     weight_decay=cfg.weight_decay)
        epoch_update(state, bd.C)
        history.append({"epoch": epoch, "total": bd.total, "align": bd.align,
                        "unif": bd.unif, "C": bd.C, "H_proxy": bd.H_proxy,
                        "alpha": bd.alpha_used},
                       time.perf_counter() - t0)
        if since_best > cfg.patience:
            break

    ckpt = Checkpoint(backbone=cfg.backbone, param_values=best_values,
                      epoch=best_epoch, loss=best_loss,
                      fingerprint=fingerprint, seed=cfg.seed)
    return ckpt, history


def early_stop_select(history: TrainHistory, checkpoints) -> Checkpoint:
    """Pick the checkpoint at the argmin of total loss (earliest tie)."""
    if len(history) == 0:
        raise ConfigError("empty history")
    totals = history.totals()
    best = int(np.argmin(totals))  # argmin returns the first minimum
    epoch = history.rows[best]["epoch"]
    for ckpt in checkpoints:
        if ckpt.epoch == epoch:
            return ckpt
    raise ConfigError(f"no checkpoint recorded for argmin epoch {epoch}")


def embed(g: GraphDataset, ckpt: Checkpoint) -> np.ndarray:
    """Deterministic inference embeddings (no augmentation, no tape)."""
    params = params_from_values(ckpt.backbone, ckpt.param_values)
    if params.in_dim != g.num_features:
        raise ConfigError(f"checkpoint expects {params.in_dim} features, "
                          f"graph has {g.num_features}")
    z = encode(identity_view(g), params)
    return z.value


def save_checkpoint(path, ckpt: Checkpoint):
    meta = {"backbone": ckpt.backbone, "epoch": ckpt.epoch,
            "loss": ckpt.loss, "seed": ckpt.seed}
    hgio.write_checkpoint(path, ckpt.fingerprint, meta, ckpt.param_values)


def load_checkpoint(path) -> Checkpoint:
    fingerprint, meta, tensors = hgio.read_checkpoint(path)
    return Checkpoint(backbone=meta["backbone"], param_values=tensors,
                      epoch=int(meta["epoch"]), loss=float(meta["loss"]),
                      fingerprint=fingerprint, seed=int(meta["seed"]))
