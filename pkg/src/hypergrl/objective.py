"""Training objective: k-order neighbor-mean alignment, mean-norm
uniformity, and the collapse/entropy diagnostics that drive the
adaptive balancing controller."""

import math
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from . import encoder as enc
from .errors import ConfigError
from .graphstore import Csr, GraphView

ENTROPY_EPS = 1e-6


@dataclass
class AlignTargets:
    """k rounds of neighbor averaging with renormalization."""
    mu: dc.Tensor
    k: int
    valid: np.ndarray  # rows with a well-defined target


@dataclass
class LossBreakdown:
    total: float
    align: float
    unif: float
    alpha_used: float
    C: float
    H_proxy: float


@dataclass(frozen=True)
class ObjectiveSettings:
    k: int = 1
    tau: float = 5.0
    detach_target: bool = False
    self_in_mean: bool = False
    mean_graph: str = "original"      # adjacency used for neighbor means
    degree_source: str = "original"   # adjacency used for |N_i| weights
    use_align: bool = True
    use_unif: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"neighbor-mean order k must be >= 1, got {self.k}")
        if self.tau < 0:
            raise ConfigError(f"tau must be nonnegative, got {self.tau}")
        for name in ("mean_graph", "degree_source"):
            if getattr(self, name) not in ("original", "view"):
                raise ConfigError(f"{name} must be 'original' or 'view'")


def mean_operator(adj: Csr, dtype=np.float32, include_self=False) -> dc.CsrMatrix:
    """Row-stochastic averaging matrix over (open or closed) neighborhoods.
    Rows of isolated nodes are left empty (zero rows)."""
    n = adj.num_nodes
    deg = np.diff(adj.indptr)
    if include_self:
        src = np.concatenate([np.repeat(np.arange(n, dtype=np.int64), deg),
                              np.arange(n, dtype=np.int64)])
        dst = np.concatenate([adj.indices, np.arange(n, dtype=np.int64)])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        weights = (1.0 / (deg + 1.0))[src]
        return dc.CsrMatrix(indptr, dst, weights.astype(dtype), (n, n))
    src = np.repeat(np.arange(n, dtype=np.int64), deg)
    weights = (1.0 / np.where(deg > 0, deg, 1))[src]
    return dc.CsrMatrix(adj.indptr, adj.indices, weights.astype(dtype), (n, n))


def neighbor_mean(z: dc.Tensor, adj: Csr, k: int, include_self=False) -> AlignTargets:
    """mu^0 = z; then k rounds of neighbor averaging, each followed by
    row normalization. Rows whose running mean degenerates to (near)
    zero — isolated nodes, or exactly antipodal neighborhoods — are
    flagged invalid."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    op = mean_operator(adj, dtype=z.value.dtype, include_self=include_self)
    valid = (np.diff(adj.indptr) > 0) | bool(include_self)
    mu = z
    for _ in range(k):
        raw = dc.spmm(op, mu)
        norms = np.sqrt(np.einsum("ij,ij->i", raw.value, raw.value))
        valid = valid & (norms >= dc.ROW_NORM_EPS)
        mu = dc.row_normalize(raw)
    return AlignTargets(mu=mu, k=k, valid=valid)


def degree_weights(deg, tau, valid, dtype=np.float32):
    """Per-node alignment weights sigmoid(|N_i|)^tau, zeroed where no
    target exists."""
    w = (1.0 / (1.0 + np.exp(-deg.astype(np.float64)))) ** tau
    return (w * valid).astype(dtype).reshape(-1, 1)


def alignment_loss(z: dc.Tensor, targets: AlignTargets, deg, tau) -> dc.Tensor:
    """(1/N) sum_i w_i (1 - <z_i, mu_i>) with w_i = sigmoid(|N_i|)^tau.
    Invalid rows contribute zero; the denominator stays N."""
    n, d = z.value.shape
    dtype = z.value.dtype
    w = degree_weights(np.asarray(deg), tau, targets.valid, dtype)
    ones_col = dc.tensor(np.ones((d, 1), dtype=dtype))
    cos = dc.matmul(dc.mul(z, targets.mu), ones_col)      # (N,1) row dots
    weighted = dc.sum_all(dc.mul(dc.tensor(w), cos))
    const = dc.tensor(np.asarray(w.sum(), dtype=dtype))
    return dc.scale(dc.add(const, dc.scale(weighted, -1.0)), 1.0 / n)


def uniformity_loss(z: dc.Tensor) -> dc.Tensor:
    """Squared L2 norm of the embedding mean (0 = perfectly balanced,
    1 = total collapse for unit rows)."""
    n, _ = z.value.shape
    dtype = z.value.dtype
    mean_row = dc.matmul(dc.tensor(np.full((1, n), 1.0 / n, dtype=dtype)), z)
    return dc.sum_all(dc.mul(mean_row, mean_row))


def collapse_metric(z_values: np.ndarray) -> float:
    """Same quantity as uniformity_loss, off the tape (float64)."""
    m = np.asarray(z_values, dtype=np.float64).mean(axis=0)
    return float(m @ m)


def entropy_proxy(c: float, eps: float = ENTROPY_EPS) -> float:
    if c < 0:
        raise ValueError(f"collapse metric must be nonnegative, got {c}")
    return -math.log(c + eps)


def total_loss(view: GraphView, params: enc.EncoderParams,
               settings: ObjectiveSettings, alpha: float):
    """Encode the view and assemble the combined objective.

    Returns (total tensor on tape, LossBreakdown, Z tensor). Diagnostics
    C and H_proxy come from the same Z as the losses.
    """
    if alpha < 0:
        raise ConfigError(f"alpha must be nonnegative, got {alpha}")
    g = view.base
    z = enc.encode(view, params)

    mean_adj = g.adjacency if settings.mean_graph == "original" else view.kept_edges
    deg_adj = g.adjacency if settings.degree_source == "original" else view.kept_edges
    deg = np.diff(deg_adj.indptr)

    z_for_targets = dc.tensor(z.value) if settings.detach_target else z
    targets = neighbor_mean(z_for_targets, mean_adj, settings.k,
                            include_self=settings.self_in_mean)

    align_t = alignment_loss(z, targets, deg, settings.tau)
    unif_t = uniformity_loss(z)

    if settings.use_align and settings.use_unif:
        total_t = dc.add(align_t, dc.scale(unif_t, alpha))
    elif settings.use_align:
        total_t = align_t
    elif settings.use_unif:
        total_t = dc.scale(unif_t, alpha)
    else:
        raise ConfigError("at least one loss term must be enabled")

    c = collapse_metric(z.value)
    breakdown = LossBreakdown(total=float(total_t.value), align=float(align_t.value),
                              unif=float(unif_t.value), alpha_used=float(alpha),
                              C=c, H_proxy=entropy_proxy(c))
    return total_t, breakdown, z
