"""Downstream evaluation on frozen embeddings.

Linear probe (softmax regression on a validation-selected l2 grid),
k-means++/Lloyd clustering scored by NMI, and link prediction with a
two-layer MLP decoder scored by rank-based AUC. Everything is
deterministic given (inputs, seed).
"""

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from . import kernels
from .errors import ConfigError, ShapeError, ValidationError
from .graphstore import GraphDataset

L2_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2)


# ---------------------------------------------------------------------------
# node splits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NodeSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    fractions: tuple
    seed: int


def split_nodes(labels, fractions=(0.1, 0.1, 0.8), seed=0) -> NodeSplit:
    """Stratified random split; every class lands in train at least once."""
    labels = np.asarray(labels, dtype=np.int64)
    f_tr, f_va, f_te = fractions
    if min(fractions) < 0 or sum(fractions) > 1 + 1e-9:
        raise ConfigError(f"bad fractions {fractions}")
    rng = np.random.default_rng(seed)
    tr, va, te = [], [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.shape[0])]
        m = idx.shape[0]
        n_tr = max(1, int(round(f_tr * m)))
        n_va = int(round(f_va * m)) if f_va > 0 else 0
        if n_tr >= m + 1 or n_tr + n_va > m:
            raise ValidationError(
                f"class {cls} has only {m} member(s); cannot stratify {fractions}")
        n_te = min(m - n_tr - n_va, int(round(f_te * m)))
        tr.append(idx[:n_tr])
        va.append(idx[n_tr:n_tr + n_va])
        te.append(idx[n_tr + n_va:n_tr + n_va + n_te])
    return NodeSplit(train=np.sort(np.concatenate(tr)),
                     val=np.sort(np.concatenate(va)) if va else np.zeros(0, np.int64),
                     test=np.sort(np.concatenate(te)),
                     fractions=tuple(fractions), seed=int(seed))


# ---------------------------------------------------------------------------
# linear probe
# ---------------------------------------------------------------------------

def _fit_softmax(x, y, n_classes, l2, iters=500, momentum=0.9):
    """Full-batch gradient descent with momentum on l2-penalized
    multinomial logistic regression; zero init, so no RNG involved.
    The step size is capped by the curvature bound 0.5*max_i||x_i||^2 + l2
    (heavy-ball stability), so every grid point converges."""
    n, d = x.shape
    curvature = 0.5 * float(np.einsum("ij,ij->i", x, x).max()) + l2
    lr = min(0.5, 3.0 / curvature)
    w = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    vw = np.zeros_like(w)
    vb = np.zeros_like(b)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    for _ in range(iters):
        s = x @ w + b
        s -= s.max(axis=1, keepdims=True)
        p = np.exp(s)
        p /= p.sum(axis=1, keepdims=True)
        gs = (p - onehot) / n
        gw = x.T @ gs + l2 * w
        gb = gs.sum(axis=0)
        vw = momentum * vw - lr * gw
        vb = momentum * vb - lr * gb
        w += vw
        b += vb
    return w, b


def _accuracy(w, b, x, y):
    return float((np.argmax(x @ w + b, axis=1) == y).mean())


def linear_probe(z, labels, split: NodeSplit, l2=None, seed=0,
                 return_details=False):
    """Test accuracy of a logistic-regression probe on frozen embeddings.
    When ``l2`` is None it is picked from L2_GRID by validation accuracy
    (ties favor the smallest penalty)."""
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if split.train.size == 0 or split.test.size == 0:
        raise ValidationError("empty train or test partition")
    n_classes = int(labels.max()) + 1
    xtr, ytr = z[split.train], labels[split.train]
    if l2 is None:
        if split.val.size == 0:
            raise ValidationError("l2 grid selection needs a validation partition")
        best = (-1.0, None, None)
        for cand in L2_GRID:
            w, b = _fit_softmax(xtr, ytr, n_classes, cand)
            acc = _accuracy(w, b, z[split.val], labels[split.val])
            if acc > best[0]:
                best = (acc, cand, (w, b))
        l2 = best[1]
        w, b = best[2]
    else:
        w, b = _fit_softmax(xtr, ytr, n_classes, l2)
    test_acc = _accuracy(w, b, z[split.test], labels[split.test])
    if return_details:
        return {"test": test_acc,
                "train": _accuracy(w, b, xtr, ytr),
                "val": _accuracy(w, b, z[split.val], labels[split.val])
                if split.val.size else float("nan"),
                "l2": float(l2)}
    return test_acc


# ---------------------------------------------------------------------------
# k-means and NMI
# ---------------------------------------------------------------------------

def _lloyd(x, k, rng, max_iter=300, tol=1e-6):
    """One k-means++ init plus Lloyd iterations; returns
    (labels, centers, inertia, inertia trace)."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    centers[0] = x[int(rng.integers(n))]
    _, d2 = kernels.kmeans_assign(x, centers[:1])
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:  # all remaining points coincide with a center
            idx = int(rng.integers(n))
        centers[c] = x[idx]
        _, d2_new = kernels.kmeans_assign(x, centers[c:c + 1])
        d2 = np.minimum(d2, d2_new)

    labels, dmin = kernels.kmeans_assign(x, centers)
    trace = [float(dmin.sum())]
    for _ in range(max_iter):
        sums, counts = kernels.kmeans_accumulate(x, labels, k)
        new_centers = centers.copy()
        occupied = counts > 0
        new_centers[occupied] = sums[occupied] / counts[occupied, None]
        for c in np.flatnonzero(~occupied):  # re-seed dead clusters
            far = int(np.argmax(dmin))
            new_centers[c] = x[far]
            dmin[far] = 0.0
        movement = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        labels, dmin = kernels.kmeans_assign(x, centers)
        trace.append(float(dmin.sum()))
        if movement < tol:
            break
    return labels, centers, trace[-1], trace


def kmeans(z, num_clusters, restarts=10, seed=0, max_iter=300, tol=1e-6,
           return_details=False):
    """Best-of-``restarts`` k-means++ / Lloyd clustering."""
    x = np.ascontiguousarray(z, dtype=np.float64)
    n = x.shape[0]
    if not 2 <= num_clusters <= n:
        raise ValidationError(f"num_clusters must lie in [2, {n}], got {num_clusters}")
    root = np.random.SeedSequence(seed)
    best = None
    for r, child in enumerate(root.spawn(restarts)):
        rng = np.random.default_rng(child)
        labels, centers, inertia, trace = _lloyd(x, num_clusters, rng,
                                                 max_iter=max_iter, tol=tol)
        if best is None or inertia < best[0]:
            best = (inertia, labels, centers, trace)
    inertia, labels, centers, trace = best
    if return_details:
        return {"labels": labels, "centers": centers,
                "inertia": inertia, "trace": trace}
    return labels


def _mutual_info_terms(a, b):
    """(H(a), H(b), I(a;b)) with natural logs; 0·log 0 treated as 0."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"label lengths differ: {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[0]
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.float64)
    np.add.at(table, (ia, ib), 1.0)
    pij = table / n
    pa = pij.sum(axis=1)  # marginals of observed labels: strictly positive
    pb = pij.sum(axis=0)
    ha = float(-(pa * np.log(pa)).sum())
    hb = float(-(pb * np.log(pb)).sum())
    nz = pij > 0
    outer = pa[:, None] * pb[None, :]
    info = float((pij[nz] * (np.log(pij[nz]) - np.log(outer[nz]))).sum())
    return ha, hb, info


def nmi(a, b, normalization="arithmetic") -> float:
    """Normalized mutual information with natural logs. Two
    single-cluster labelings count as identical partitions (1.0); one
    degenerate side scores 0."""
    ha, hb, info = _mutual_info_terms(a, b)
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    if normalization == "arithmetic":
        return info / ((ha + hb) / 2.0)
    if normalization == "geometric":
        return info / float(np.sqrt(ha * hb))
    raise ConfigError(f"unknown normalization {normalization!r}")


# ---------------------------------------------------------------------------
# edge splits and link prediction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EdgeSplit:
    train_pos: np.ndarray
    val_pos: np.ndarray
    test_pos: np.ndarray
    train_neg: np.ndarray
    val_neg: np.ndarray
    test_neg: np.ndarray
    fractions: tuple
    seed: int


def split_edges(g: GraphDataset, fractions=(0.85, 0.05, 0.10), seed=0) -> EdgeSplit:
    """Partition undirected edges and pair each partition with an equal
    count of uniformly sampled non-edges. The message-passing graph for
    embedding must use train positives only."""
    e = g.num_edges
    if e < 20:
        raise ValidationError(f"need at least 20 edges to split, got {e}")
    f_tr, f_va, f_te = fractions
    if min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"edge split fractions must sum to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(e)
    n_va = int(round(f_va * e))
    n_te = int(round(f_te * e))
    n_tr = e - n_va - n_te
    if min(n_tr, n_va, n_te) < 1:
        raise ValidationError(f"graph with {e} edges too small for fractions {fractions}")
    edges = g.edges[perm]
    train_pos = edges[:n_tr]
    val_pos = edges[n_tr:n_tr + n_va]
    test_pos = edges[n_tr + n_va:]

    n = g.num_nodes
    existing = set((int(u) * n + int(v)) for u, v in g.edges)
    negs = []
    need = e
    while len(negs) < need:
        u = rng.integers(0, n, size=4 * (need - len(negs)) + 8)
        v = rng.integers(0, n, size=u.shape[0])
        lo = np.minimum(u, v)
        hi = np.maximum(u, v)
        for a, b in zip(lo, hi):
            if a == b:
                continue
            key = int(a) * n + int(b)
            if key in existing:
                continue
            existing.add(key)
            negs.append((int(a), int(b)))
            if len(negs) == need:
                break
    negs = np.asarray(negs, dtype=np.int64)
    return EdgeSplit(train_pos=train_pos, val_pos=val_pos, test_pos=test_pos,
                     train_neg=negs[:n_tr], val_neg=negs[n_tr:n_tr + n_va],
                     test_neg=negs[n_tr + n_va:],
                     fractions=tuple(fractions), seed=int(seed))


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with midrank tie handling."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1).astype(np.int64)
    if scores.shape[0] != labels.shape[0]:
        raise ShapeError(f"{scores.shape[0]} scores vs {labels.shape[0]} labels")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC needs both classes present")
    _, inv, counts = np.unique(scores, return_inverse=True, return_counts=True)
    cum = np.cumsum(counts)
    midranks = (cum - (counts - 1) / 2.0)[inv]  # 1-based average ranks
    r_pos = midranks[labels == 1].sum()
    return float((r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _pair_features(z, pairs):
    return np.concatenate([z[pairs[:, 0]], z[pairs[:, 1]]], axis=1)


def link_predict(z, split: EdgeSplit, hidden=256, seed=0, lr=1e-3,
                 max_steps=300, eval_every=10, patience=10,
                 return_details=False):
    """Train an MLP decoder ([z_u ‖ z_v] -> hidden SiLU -> logit) with
    Adam + BCE on train pairs; early-stop on validation AUC; report test
    AUC from the best-validation parameters."""
    for part in ("train", "val", "test"):
        if getattr(split, part + "_pos").shape[0] == 0:
            raise ValidationError(f"empty {part} partition")
    z = np.asarray(z, dtype=np.float32)
    xtr = np.concatenate([_pair_features(z, split.train_pos),
                          _pair_features(z, split.train_neg)])
    ytr = np.concatenate([np.ones(split.train_pos.shape[0], dtype=np.float32),
                          np.zeros(split.train_neg.shape[0], dtype=np.float32)])
    xva = np.concatenate([_pair_features(z, split.val_pos),
                          _pair_features(z, split.val_neg)])
    yva = np.concatenate([np.ones(split.val_pos.shape[0]),
                          np.zeros(split.val_neg.shape[0])])
    xte = np.concatenate([_pair_features(z, split.test_pos),
                          _pair_features(z, split.test_neg)])
    yte = np.concatenate([np.ones(split.test_pos.shape[0]),
                          np.zeros(split.test_neg.shape[0])])

    rng = np.random.default_rng(seed)
    d_in = xtr.shape[1]
    lim1 = np.sqrt(6.0 / (d_in + hidden))
    lim2 = np.sqrt(6.0 / (hidden + 1))
    w1 = dc.tensor(rng.uniform(-lim1, lim1, (d_in, hidden)).astype(np.float32),
                   requires_grad=True)
    b1 = dc.tensor(np.zeros((1, hidden), dtype=np.float32), requires_grad=True)
    w2 = dc.tensor(rng.uniform(-lim2, lim2, (hidden, 1)).astype(np.float32),
                   requires_grad=True)
    b2 = dc.tensor(np.zeros((1, 1), dtype=np.float32), requires_grad=True)
    leaves = [w1, b1, w2, b2]
    opt = dc.adam_init(leaves)

    x_t = dc.tensor(xtr)
    y_t = dc.tensor(ytr.reshape(-1, 1))
    m = xtr.shape[0]

    def forward_scores(x, values):
        v1, vb1, v2, vb2 = values
        h = x @ v1 + vb1
        s = 1.0 / (1.0 + np.exp(-h))
        return ((h * s) @ v2 + vb2).reshape(-1)

    best_val = -1.0
    best_values = [p.value.copy() for p in leaves]
    stale = 0
    for step in range(max_steps):
        dc.zero_grads(leaves)
        with dc.Tape() as tape:
            hidden_t = dc.silu(dc.add(dc.matmul(x_t, w1), b1))
            logits = dc.add(dc.matmul(hidden_t, w2), b2)
            # mean(softplus(s) - y*s) is BCE-with-logits
            loss = dc.scale(dc.sum_all(dc.add(dc.softplus(logits),
                                              dc.scale(dc.mul(y_t, logits), -1.0))),
                            1.0 / m)
        tape.backward(loss)
        dc.adam_step(leaves, opt, lr=lr)
        if (step + 1) % eval_every == 0:
            values = [p.value for p in leaves]
            val_auc = auc(forward_scores(xva, values), yva)
            if val_auc > best_val:
                best_val = val_auc
                best_values = [v.copy() for v in values]
                stale = 0
            else:
                stale += 1
                if stale >= patience:
                    break
    test_auc = auc(forward_scores(xte, best_values), yte)
    if return_details:
        return {"test_auc": test_auc, "val_auc": best_val}
    return test_auc


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    task: str
    metric: str
    mean: float
    std: float
    values: list = field(default_factory=list)
    fingerprint: str = ""


def make_report(task, metric, values, fingerprint="") -> MetricsReport:
    arr = np.asarray(values, dtype=np.float64)
    return MetricsReport(task=task, metric=metric, mean=float(arr.mean()),
                         std=float(arr.std(ddof=0)), values=[float(v) for v in arr],
                         fingerprint=fingerprint)
