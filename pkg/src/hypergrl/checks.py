"""Gradient-check suite: every differentiable primitive against central
differences, plus the fully composed objective on a small synthetic
graph. All checks run in float64."""

import numpy as np

from . import diffcore as dc
from .encoder import init_params
from .graphstore import augment, generate_sbm
from .objective import ObjectiveSettings, total_loss

PRIMITIVE_TOL = 1e-6
ROW_NORMALIZE_TOL = 1e-5
FULL_LOSS_TOL = 1e-4


def _weighted_sum(t, rng):
    """Reduce a tensor to a scalar through fixed random weights so the
    gradient check exercises every output coordinate distinctly."""
    w = dc.tensor(rng.normal(size=t.value.shape))
    return dc.sum_all(dc.mul(t, w))


def _rand(rng, *shape):
    return dc.tensor(rng.normal(size=shape), requires_grad=True)


def _random_csr(rng, n, p=0.4):
    dense = (rng.random((n, n)) < p).astype(np.float64)
    dense *= rng.normal(size=(n, n))
    indptr = np.zeros(n + 1, dtype=np.int64)
    indices, weights = [], []
    for i in range(n):
        cols = np.flatnonzero(dense[i])
        indptr[i + 1] = indptr[i] + cols.shape[0]
        indices.extend(cols)
        weights.extend(dense[i, cols])
    return dc.CsrMatrix(indptr, np.asarray(indices, dtype=np.int64),
                        np.asarray(weights, dtype=np.float64), (n, n))


def primitive_checks(seed=0):
    """Yield (name, tol, GradCheckReport) for every primitive."""
    rng = np.random.default_rng(seed)
    picker = np.random.default_rng(seed + 1)
    out = []

    a, b = _rand(rng, 5, 4), _rand(rng, 4, 3)
    wab = np.asarray(rng.normal(size=(5, 3)))
    out.append(("matmul", PRIMITIVE_TOL, dc.grad_check(
        lambda: dc.sum_all(dc.mul(dc.matmul(a, b), dc.tensor(wab))),
        [a, b], picker, tol=PRIMITIVE_TOL)))

    adj = _random_csr(rng, 7)
    x = _rand(rng, 7, 4)
    wx = np.asarray(rng.normal(size=(7, 4)))
    out.append(("spmm", PRIMITIVE_TOL, dc.grad_check(
        lambda: dc.sum_all(dc.mul(dc.spmm(adj, x), dc.tensor(wx))),
        [x], picker, tol=PRIMITIVE_TOL)))

    xn = rng.normal(size=(6, 5))
    norms = np.linalg.norm(xn, axis=1, keepdims=True)
    xn *= np.maximum(1.0, 0.5 / norms)  # keep rows well away from the guard
    xn_t = dc.tensor(xn, requires_grad=True)
    wn = np.asarray(rng.normal(size=(6, 5)))
    out.append(("row_normalize", ROW_NORMALIZE_TOL, dc.grad_check(
        lambda: dc.sum_all(dc.mul(dc.row_normalize(xn_t), dc.tensor(wn))),
        [xn_t], picker, tol=ROW_NORMALIZE_TOL)))

    for name, op in (("silu", dc.silu), ("sigmoid", dc.sigmoid),
                     ("softplus", dc.softplus)):
        t = _rand(rng, 4, 6)
        out.append((name, PRIMITIVE_TOL, dc.grad_check(
            lambda op=op, t=t: _weighted_sum(op(t), np.random.default_rng(3)),
            [t], picker, tol=PRIMITIVE_TOL)))

    # keep relu inputs away from the kink, where central differences lie
    xr = rng.normal(size=(4, 6))
    xr = np.sign(xr) * (np.abs(xr) + 0.2)
    xr_t = dc.tensor(xr, requires_grad=True)
    out.append(("relu", PRIMITIVE_TOL, dc.grad_check(
        lambda: _weighted_sum(dc.relu(xr_t), np.random.default_rng(4)),
        [xr_t], picker, tol=PRIMITIVE_TOL)))

    p, q = _rand(rng, 5, 3), _rand(rng, 5, 3)
    bias = _rand(rng, 1, 3)
    out.append(("add", PRIMITIVE_TOL, dc.grad_check(
        lambda: _weighted_sum(dc.add(dc.add(p, q), bias), np.random.default_rng(5)),
        [p, q, bias], picker, tol=PRIMITIVE_TOL)))
    out.append(("mul", PRIMITIVE_TOL, dc.grad_check(
        lambda: _weighted_sum(dc.mul(p, q), np.random.default_rng(6)),
        [p, q], picker, tol=PRIMITIVE_TOL)))
    out.append(("scale", PRIMITIVE_TOL, dc.grad_check(
        lambda: dc.sum_all(dc.scale(p, -1.7)), [p], picker, tol=PRIMITIVE_TOL)))
    out.append(("sum_all", PRIMITIVE_TOL, dc.grad_check(
        lambda: dc.sum_all(q), [q], picker, tol=PRIMITIVE_TOL)))
    return out


def small_sbm(seed=0):
    """The 20-node fixture used for the composed-loss check."""
    return generate_sbm([10, 10], p_in=0.5, p_out=0.1, feature_noise=0.3, seed=seed)


def full_loss_check(seed=0, alpha=0.7):
    """Gradient-check the encoder + combined objective end to end."""
    g = small_sbm(seed)
    view = augment(g, p_e=0.3, p_x=0.1, seed=seed + 1)
    params = init_params(g.num_features, 8, num_layers=2, backbone="gcn",
                         seed=seed, dtype=np.float64)
    settings = ObjectiveSettings(k=1, tau=5.0)
    leaves = params.trainable()
    picker = np.random.default_rng(seed + 2)

    def fn():
        total_t, _bd, _z = total_loss(view, params, settings, alpha=alpha)
        return total_t

    return dc.grad_check(fn, leaves, picker, tol=FULL_LOSS_TOL)


def run_gradcheck_suite(seed=0):
    """(name, tol, report) rows for the CLI and the acceptance gate."""
    rows = primitive_checks(seed)
    rows.append(("full_objective", FULL_LOSS_TOL, full_loss_check(seed)))
    return rows
