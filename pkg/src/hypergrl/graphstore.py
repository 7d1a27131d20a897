"""Undirected attributed graphs: loading, validation, SBM generation,
and stochastic augmentation (edge dropping + feature-column masking)."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError, ShapeError, ConfigError
from . import hgio


@dataclass(frozen=True)
class Csr:
    """Structure-only CSR adjacency (symmetric, sorted, no self-loops)."""
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def num_nodes(self):
        return self.indptr.shape[0] - 1

    @property
    def num_directed_edges(self):
        return int(self.indices.shape[0])


def _edges_to_csr(edges, n):
    """Canonical u<v edge array -> symmetric CSR with sorted columns."""
    if edges.shape[0] == 0:
        return Csr(np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64))
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return Csr(indptr, dst.astype(np.int64))


def _canonicalize_edges(raw, n):
    """Drop self-loops, dedupe, return (E×2 array with u<v, loop count)."""
    raw = np.asarray(raw, dtype=np.int64).reshape(-1, 2)
    loops = int((raw[:, 0] == raw[:, 1]).sum())
    raw = raw[raw[:, 0] != raw[:, 1]]
    lo = np.minimum(raw[:, 0], raw[:, 1])
    hi = np.maximum(raw[:, 0], raw[:, 1])
    if raw.shape[0] == 0:
        return np.zeros((0, 2), dtype=np.int64), loops
    keys = lo * n + hi
    _, first = np.unique(keys, return_index=True)
    first.sort()
    return np.stack([lo[first], hi[first]], axis=1), loops


@dataclass(frozen=True)
class GraphDataset:
    """Immutable undirected graph with dense node features.

    ``edges`` holds each undirected edge once with u < v; ``adjacency``
    is the symmetric CSR expansion of the same edge set.
    """
    num_nodes: int
    edges: np.ndarray
    adjacency: Csr
    features: np.ndarray
    labels: np.ndarray | None = None
    num_classes: int | None = None
    self_loops_dropped: int = 0

    @property
    def num_edges(self):
        return int(self.edges.shape[0])

    @property
    def num_features(self):
        return int(self.features.shape[1])


def build_dataset(edges, features, labels=None, num_nodes=None):
    """Validate raw arrays into a GraphDataset (dedupes, drops loops)."""
    features = np.ascontiguousarray(features, dtype=np.float32)
    n = int(num_nodes) if num_nodes is not None else features.shape[0]
    if features.shape[0] != n:
        raise ShapeError(f"feature rows {features.shape[0]} != num_nodes {n}")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        bad = edges.max() if edges.max() >= n else edges.min()
        raise ValidationError(f"edge endpoint {bad} outside [0, {n})")
    edges, loops = _canonicalize_edges(edges, n)
    if loops:
        warnings.warn(f"dropped {loops} self-loop(s)", stacklevel=2)
    num_classes = None
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape[0] != n:
            raise ShapeError(f"label count {labels.shape[0]} != num_nodes {n}")
        if labels.min() < 0:
            raise ValidationError(f"negative label {labels.min()}")
        num_classes = int(labels.max()) + 1
    return GraphDataset(num_nodes=n, edges=edges, adjacency=_edges_to_csr(edges, n),
                        features=features, labels=labels, num_classes=num_classes,
                        self_loops_dropped=loops)


@dataclass(frozen=True)
class GraphView:
    """An augmented view: surviving edges plus column-masked features."""
    base: GraphDataset
    kept_edges: Csr
    kept_edge_list: np.ndarray
    masked_features: np.ndarray
    drop_seed: int
    p_e: float
    p_x: float


def degrees(g: GraphDataset) -> np.ndarray:
    """Neighbor counts |N_i| in the original (unaugmented) graph."""
    return np.diff(g.adjacency.indptr)


def augment(g: GraphDataset, p_e: float, p_x: float, seed: int) -> GraphView:
    """Drop each undirected edge with probability p_e (one coin per edge,
    applied to both directions) and zero whole feature columns with
    probability p_x. Edge coins are drawn before column coins."""
    if not (0.0 <= p_e < 1.0 and 0.0 <= p_x < 1.0):
        raise ConfigError(f"drop probabilities must lie in [0,1): p_e={p_e}, p_x={p_x}")
    rng = np.random.default_rng(seed)
    keep = rng.random(g.num_edges) < (1.0 - p_e)
    col_mask = rng.random(g.num_features) < p_x
    kept = g.edges[keep]
    feats = g.features.copy()
    feats[:, col_mask] = 0.0
    return GraphView(base=g, kept_edges=_edges_to_csr(kept, g.num_nodes),
                     kept_edge_list=kept, masked_features=feats,
                     drop_seed=int(seed), p_e=float(p_e), p_x=float(p_x))


def identity_view(g: GraphDataset) -> GraphView:
    """The no-op view used at inference time."""
    return augment(g, 0.0, 0.0, seed=0)


# ---------------------------------------------------------------------------
# synthetic graphs
# ---------------------------------------------------------------------------

def generate_sbm(block_sizes, p_in, p_out, feature_noise, seed) -> GraphDataset:
    """Stochastic block model with one-hot block features plus Gaussian
    noise of scale ``feature_noise``; labels are block ids. Edge coins
    are drawn over all i<j pairs in row-major order, then feature noise."""
    block_sizes = [int(s) for s in block_sizes]
    if len(block_sizes) < 2:
        raise ConfigError("need at least 2 blocks")
    if any(s <= 0 for s in block_sizes):
        raise ConfigError(f"zero-size block in {block_sizes}")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ConfigError(f"probabilities out of range: p_in={p_in}, p_out={p_out}")
    n = sum(block_sizes)
    labels = np.repeat(np.arange(len(block_sizes), dtype=np.int64), block_sizes)
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    p = np.where(labels[iu] == labels[ju], p_in, p_out)
    hit = rng.random(iu.shape[0]) < p
    edges = np.stack([iu[hit], ju[hit]], axis=1)
    feats = np.zeros((n, len(block_sizes)), dtype=np.float64)
    feats[np.arange(n), labels] = 1.0
    feats += feature_noise * rng.standard_normal((n, len(block_sizes)))
    return build_dataset(edges, feats.astype(np.float32), labels=labels, num_nodes=n)


# ---------------------------------------------------------------------------
# text/binary dataset files
# ---------------------------------------------------------------------------

def _parse_int(tok, path, line_no, what):
    try:
        v = int(tok)
    except ValueError:
        raise ParseError(path, line_no, f"expected integer {what}, got {tok!r}") from None
    if v < 0:
        raise ParseError(path, line_no, f"negative {what}: {v}")
    return v


def read_edge_file(path):
    edges = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            body = line.strip()
            if not body or body.startswith("#"):
                continue
            parts = body.split()
            if len(parts) != 2:
                raise ParseError(path, line_no, f"expected 'u<TAB>v', got {body!r}")
            edges.append((_parse_int(parts[0], path, line_no, "node id"),
                          _parse_int(parts[1], path, line_no, "node id")))
    return np.asarray(edges, dtype=np.int64).reshape(-1, 2)


def read_feature_file(path):
    """Features in either the text ("NFEAT N F" header) or binary HGB1
    form, distinguished by the magic bytes."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == hgio.MATRIX_MAGIC:
        return hgio.read_matrix(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        rows = []
        n = f = 0
        for line_no, line in enumerate(fh, start=1):
            body = line.strip()
            if not body or body.startswith("#"):
                continue
            if header is None:
                parts = body.split()
                if len(parts) != 3 or parts[0] != "NFEAT":
                    raise ParseError(path, line_no,
                                     f"expected header 'NFEAT N F', got {body!r}")
                n = _parse_int(parts[1], path, line_no, "row count")
                f = _parse_int(parts[2], path, line_no, "column count")
                header = (n, f)
                continue
            vals = body.split()
            if len(vals) != f:
                raise ParseError(path, line_no, f"expected {f} values, got {len(vals)}")
            try:
                rows.append(np.array(vals, dtype=np.float32))
            except ValueError:
                raise ParseError(path, line_no, "non-numeric feature value") from None
        if header is None:
            raise ParseError(path, 1, "missing 'NFEAT N F' header")
        if len(rows) != n:
            raise ParseError(path, line_no if rows else 1,
                             f"header promised {n} rows, found {len(rows)}")
    return np.vstack(rows) if rows else np.zeros((0, f), dtype=np.float32)


def read_label_file(path, num_nodes):
    labels = np.full(num_nodes, -1, dtype=np.int64)
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            body = line.strip()
            if not body or body.startswith("#"):
                continue
            parts = body.split()
            if len(parts) != 2:
                raise ParseError(path, line_no, f"expected 'node<TAB>label', got {body!r}")
            node = _parse_int(parts[0], path, line_no, "node id")
            if node >= num_nodes:
                raise ValidationError(f"{path}:{line_no}: node id {node} outside [0, {num_nodes})")
            labels[node] = _parse_int(parts[1], path, line_no, "label")
    missing = int((labels < 0).sum())
    if missing:
        raise ValidationError(f"{path}: {missing} node(s) have no label")
    return labels


def load_graph(edge_path, feature_path, label_path=None) -> GraphDataset:
    """Assemble a dataset from on-disk edge/feature(/label) files."""
    edges = read_edge_file(edge_path)
    features = read_feature_file(feature_path)
    n = features.shape[0]
    if edges.size and edges.max() >= n:
        raise ValidationError(
            f"{edge_path}: node id {edges.max()} but only {n} feature rows")
    labels = read_label_file(label_path, n) if label_path is not None else None
    return build_dataset(edges, features, labels=labels, num_nodes=n)


def read_citation_dataset(content_path, cites_path) -> GraphDataset:
    """Citation-network distribution format (Cora/Citeseer style): a
    `.content` file with one `<paper_id> <f_1 .. f_F> <class>` line per
    node and a `.cites` file with one `<cited> <citing>` pair per line.

    Node indices follow content-file order; class ids are assigned by
    sorted class name so the mapping is deterministic. Citations whose
    endpoints never appear in the content file are dropped.
    """
    ids = {}
    rows, names = [], []
    with open(content_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise ParseError(content_path, line_no,
                                 f"expected '<id> <features...> <class>', got {len(parts)} fields")
            if parts[0] in ids:
                raise ParseError(content_path, line_no, f"duplicate id {parts[0]!r}")
            ids[parts[0]] = len(rows)
            try:
                rows.append(np.array(parts[1:-1], dtype=np.float32))
            except ValueError:
                raise ParseError(content_path, line_no, "non-numeric feature value") from None
            names.append(parts[-1])
    if not rows:
        raise ParseError(content_path, 1, "empty content file")
    widths = {r.shape[0] for r in rows}
    if len(widths) != 1:
        raise ValidationError(f"{content_path}: inconsistent feature widths {sorted(widths)}")
    class_of = {name: i for i, name in enumerate(sorted(set(names)))}
    labels = np.array([class_of[nm] for nm in names], dtype=np.int64)

    edges, dangling = [], 0
    with open(cites_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ParseError(cites_path, line_no, f"expected '<cited> <citing>', got {line.strip()!r}")
            try:
                edges.append((ids[parts[0]], ids[parts[1]]))
            except KeyError:
                dangling += 1
    if dangling:
        warnings.warn(f"{cites_path}: dropped {dangling} citation(s) to unknown ids")
    return build_dataset(np.asarray(edges, dtype=np.int64).reshape(-1, 2),
                         np.vstack(rows), labels=labels)


def write_edge_file(path, edges):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# u\tv\n")
        for u, v in np.asarray(edges, dtype=np.int64).reshape(-1, 2):
            fh.write(f"{u}\t{v}\n")


def write_feature_file(path, features, binary=True):
    if binary:
        hgio.write_matrix(path, np.asarray(features, dtype=np.float32))
        return
    features = np.asarray(features)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"NFEAT {features.shape[0]} {features.shape[1]}\n")
        for row in features:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def write_label_file(path, labels):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# node\tlabel\n")
        for i, y in enumerate(np.asarray(labels, dtype=np.int64)):
            fh.write(f"{i}\t{y}\n")
