"""GNN encoders mapping an augmented view to unit-norm embeddings.

Two backbones: ``gcn`` (symmetric D^{-1/2}(A+I)D^{-1/2} propagation) and
``sage_mean`` (mean over the closed neighborhood). Layers compute
activation(A_hat @ (H W) + b) with SiLU on all but the last layer, then
the output is projected to the hypersphere by row normalization.
"""

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .errors import ConfigError, ShapeError
from .graphstore import GraphView

BACKBONES = ("gcn", "sage_mean")


@dataclass
class EncoderParams:
    backbone: str
    weights: list
    biases: list

    @property
    def num_layers(self):
        return len(self.weights)

    @property
    def in_dim(self):
        return self.weights[0].value.shape[0]

    @property
    def out_dim(self):
        return self.weights[-1].value.shape[1]

    def trainable(self):
        return list(self.weights) + list(self.biases)

    def value_list(self):
        return [w.value for w in self.weights] + [b.value for b in self.biases]


def init_params(in_dim, out_dim, num_layers=2, hidden_dim=None, backbone="gcn",
                seed=0, dtype=np.float32) -> EncoderParams:
    """Glorot-uniform weights, zero biases; one draw per layer in order."""
    if backbone not in BACKBONES:
        raise ConfigError(f"unknown backbone {backbone!r}; expected one of {BACKBONES}")
    if num_layers < 1:
        raise ConfigError(f"need at least one layer, got {num_layers}")
    if min(in_dim, out_dim) <= 0 or (hidden_dim is not None and hidden_dim <= 0):
        raise ConfigError("layer dimensions must be positive")
    hidden = out_dim if hidden_dim is None else int(hidden_dim)
    dims = [int(in_dim)] + [hidden] * (num_layers - 1) + [int(out_dim)]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        weights.append(dc.tensor(w.astype(dtype), requires_grad=True))
        biases.append(dc.tensor(np.zeros((1, fan_out), dtype=dtype), requires_grad=True))
    return EncoderParams(backbone=backbone, weights=weights, biases=biases)


def params_from_values(backbone, values) -> EncoderParams:
    """Rebuild EncoderParams from a flat [W_1..W_L, b_1..b_L] list (the
    checkpoint tensor order)."""
    if len(values) % 2 != 0:
        raise ShapeError(f"expected an even tensor count, got {len(values)}")
    half = len(values) // 2
    weights = [dc.tensor(np.asarray(v), requires_grad=True) for v in values[:half]]
    biases = [dc.tensor(np.asarray(v).reshape(1, -1), requires_grad=True)
              for v in values[half:]]
    return EncoderParams(backbone=backbone, weights=weights, biases=biases)


def normalize_adjacency(view: GraphView, mode="gcn", dtype=np.float32) -> dc.CsrMatrix:
    """Self-loop-augmented propagation weights for the view's edge set."""
    if mode not in BACKBONES:
        raise ConfigError(f"unknown adjacency mode {mode!r}")
    csr = view.kept_edges
    n = csr.num_nodes
    src = np.repeat(np.arange(n, dtype=np.int64), np.diff(csr.indptr))
    dst = csr.indices
    # append the diagonal, then re-sort rows so columns stay increasing
    src = np.concatenate([src, np.arange(n, dtype=np.int64)])
    dst = np.concatenate([dst, np.arange(n, dtype=np.int64)])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    deg_hat = np.diff(csr.indptr) + 1  # |N_i ∪ {i}| in the view
    if mode == "gcn":
        inv_sqrt = 1.0 / np.sqrt(deg_hat)
        weights = inv_sqrt[src] * inv_sqrt[dst]
    else:
        weights = 1.0 / deg_hat[src].astype(np.float64)
    return dc.CsrMatrix(indptr, dst, weights.astype(dtype), (n, n))


def encode(view: GraphView, params: EncoderParams, eps=dc.ROW_NORM_EPS):
    """Forward pass to hypersphere embeddings; differentiable when a
    tape is active."""
    feats = view.masked_features
    if feats.shape[1] != params.in_dim:
        raise ShapeError(
            f"view has {feats.shape[1]} features but encoder expects {params.in_dim}")
    dtype = params.weights[0].value.dtype
    a_hat = normalize_adjacency(view, params.backbone, dtype=dtype)
    h = dc.tensor(np.ascontiguousarray(feats, dtype=dtype))
    last = params.num_layers - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = dc.add(dc.spmm(a_hat, dc.matmul(h, w)), b)
        if layer != last:
            h = dc.silu(h)
    return dc.row_normalize(h, eps=eps)
