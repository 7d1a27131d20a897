"""Minimal tape-based reverse-mode autodiff over numpy arrays.

Covers exactly the primitives the training objective needs: dense and
sparse matrix products, row normalization, a few elementwise
nonlinearities, and scalar reduction. Ops executed while a :class:`Tape`
is active are recorded in execution order; ``Tape.backward`` replays the
record in reverse, so no separate topological sort is needed.

Training runs in float32; gradient checking rebuilds the same graphs in
float64 against central differences.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ShapeError

# Zero rows stay zero under the guard; anything with a real norm is unit.
ROW_NORM_EPS = 1e-12

# Opt-in finiteness assertions at op boundaries (debug builds).
CHECK_FINITE = os.environ.get("HGRL_DEBUG", "") not in ("", "0")

_ACTIVE_TAPES = []


class Tensor:
    """A numpy value plus an accumulated gradient and a backward closure."""

    __slots__ = ("value", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, value, requires_grad=False):
        self.value = np.asarray(value)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.value.shape}, dtype={self.value.dtype}{flag})"


class Tape:
    """Records op outputs in execution order for reverse replay.

    Use as a context manager around the forward pass::

        with Tape() as tape:
            loss = ...
        tape.backward(loss)

    Ops executed with no active tape still compute values (inference
    mode) but record nothing.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE_TAPES.pop()
        return False

    def backward(self, loss):
        if loss.value.ndim != 0:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")
        loss.grad = np.ones((), dtype=loss.value.dtype)
        for node in reversed(self.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)


def _record(out, parents, backward):
    """Attach the backward closure and push onto the active tape."""
    if CHECK_FINITE and not np.isfinite(out.value).all():
        raise FloatingPointError("non-finite op output")
    if _ACTIVE_TAPES and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        _ACTIVE_TAPES[-1].nodes.append(out)
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
    else:
        t.grad = t.grad + g


def tensor(value, requires_grad=False, dtype=None):
    arr = np.asarray(value, dtype=dtype)
    return Tensor(arr, requires_grad=requires_grad)


def zero_grads(params):
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# sparse operand
# ---------------------------------------------------------------------------

class CsrMatrix:
    """Weighted CSR matrix used as a constant operand of :func:`spmm`.

    The transpose (needed once per backward pass) is built lazily and
    cached.
    """

    def __init__(self, indptr, indices, weights, shape):
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.weights = np.asarray(weights)
        self.shape = tuple(shape)
        if self.indptr.shape[0] != self.shape[0] + 1:
            raise ShapeError(f"indptr length {self.indptr.shape[0]} for {self.shape[0]} rows")
        self._transpose = None

    @property
    def nnz(self):
        return int(self.indices.shape[0])

    def transpose(self):
        if self._transpose is None:
            t_indptr, t_indices, t_weights = kernels.csr_transpose(
                self.indptr, self.indices, self.weights,
                self.shape[0], self.shape[1])
            self._transpose = CsrMatrix(
                t_indptr, t_indices, t_weights, (self.shape[1], self.shape[0]))
            self._transpose._transpose = self
        return self._transpose

    def to_dense(self):
        out = np.zeros(self.shape, dtype=self.weights.dtype)
        rows = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))
        np.add.at(out, (rows, self.indices), self.weights)
        return out


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def matmul(a, b):
    out = Tensor(a.value @ b.value)

    def backward(g):
        _accum(a, g @ b.value.T)
        _accum(b, a.value.T @ g)

    return _record(out, (a, b), backward)


def spmm(A, x):
    """Sparse @ dense. ``A`` is a constant :class:`CsrMatrix`; gradients
    flow through the dense operand only."""
    if A.shape[1] != x.value.shape[0]:
        raise ShapeError(f"spmm: {A.shape} @ {x.value.shape}")
    out = Tensor(kernels.spmm(A.indptr, A.indices, A.weights, x.value, A.shape[0]))

    def backward(g):
        At = A.transpose()
        _accum(x, kernels.spmm(At.indptr, At.indices, At.weights, g, At.shape[0]))

    return _record(out, (x,), backward)


def row_normalize(x, eps=ROW_NORM_EPS):
    """Scale each row to unit L2 norm; rows with norm < eps are divided
    by eps instead and receive zero gradient (degenerate rows are a
    plateau, not a cliff)."""
    v = x.value
    norms = np.sqrt(np.einsum("ij,ij->i", v, v))
    safe = np.maximum(norms, eps)
    z = v / safe[:, None]
    out = Tensor(z)
    guarded = norms < eps

    def backward(g):
        inner = np.einsum("ij,ij->i", g, z)
        gx = (g - inner[:, None] * z) / safe[:, None]
        if guarded.any():
            gx[guarded] = 0.0
        _accum(x, gx)

    return _record(out, (x,), backward)


def _sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x):
    s = _sigmoid(x.value)
    out = Tensor(s)

    def backward(g):
        _accum(x, g * s * (1.0 - s))

    return _record(out, (x,), backward)


def silu(x):
    s = _sigmoid(x.value)
    out = Tensor(x.value * s)

    def backward(g):
        _accum(x, g * s * (1.0 + x.value * (1.0 - s)))

    return _record(out, (x,), backward)


def relu(x):
    out = Tensor(np.maximum(x.value, 0))

    def backward(g):
        _accum(x, g * (x.value > 0))

    return _record(out, (x,), backward)


def softplus(x):
    v = x.value
    out = Tensor(np.maximum(v, 0) + np.log1p(np.exp(-np.abs(v))))

    def backward(g):
        _accum(x, g * _sigmoid(v))

    return _record(out, (x,), backward)


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    out = Tensor(a.value + b.value)

    def backward(g):
        _accum(a, _unbroadcast(g, a.value.shape))
        _accum(b, _unbroadcast(g, b.value.shape))

    return _record(out, (a, b), backward)


def mul(a, b):
    out = Tensor(a.value * b.value)

    def backward(g):
        _accum(a, _unbroadcast(g * b.value, a.value.shape))
        _accum(b, _unbroadcast(g * a.value, b.value.shape))

    return _record(out, (a, b), backward)


def scale(a, c):
    c = float(c)
    out = Tensor(a.value * np.asarray(c, dtype=a.value.dtype))

    def backward(g):
        _accum(a, g * np.asarray(c, dtype=a.value.dtype))

    return _record(out, (a,), backward)


def sum_all(a):
    out = Tensor(a.value.sum())

    def backward(g):
        _accum(a, np.broadcast_to(g, a.value.shape))

    return _record(out, (a,), backward)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_err: float
    tol: float
    passed: bool
    n_coords: int


def grad_check(fn, leaves, rng, tol=1e-4, num_samples=200, h=1e-5):
    """Compare tape gradients against central differences.

    ``fn()`` must rebuild the forward pass from the current ``leaves``
    values (float64) and return a scalar loss tensor. Samples up to
    ``num_samples`` coordinates per leaf. Relative error uses the
    denominator ``max(|analytic|, |numeric|, 1e-8)``.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step size {h} outside [1e-7, 1e-3]")
    for leaf in leaves:
        if leaf.value.dtype != np.float64:
            raise ValueError("grad_check requires float64 leaves")
    zero_grads(leaves)
    with Tape() as tape:
        loss = fn()
    if not np.isfinite(loss.value):
        raise FloatingPointError("non-finite loss in grad_check")
    tape.backward(loss)
    analytic = [np.zeros_like(p.value) if p.grad is None else np.array(p.grad)
                for p in leaves]

    worst = 0.0
    n_coords = 0
    for leaf, ag in zip(leaves, analytic):
        size = leaf.value.size
        n_take = min(num_samples, size)
        idx = rng.choice(size, size=n_take, replace=False)
        flat = leaf.value.reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            f_hi = float(fn().value)
            flat[i] = orig - h
            f_lo = float(fn().value)
            flat[i] = orig
            num = (f_hi - f_lo) / (2.0 * h)
            ana = float(ag.reshape(-1)[i])
            rel = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            worst = max(worst, rel)
            n_coords += 1
    return GradCheckReport(max_rel_err=worst, tol=tol, passed=worst <= tol,
                           n_coords=n_coords)


# ---------------------------------------------------------------------------
# Adam with decoupled weight decay
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moment buffers, one pair per parameter."""
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0


def adam_init(params):
    state = AdamState()
    for p in params:
        state.m.append(np.zeros_like(p.value))
        state.v.append(np.zeros_like(p.value))
    return state


def adam_step(params, state, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
              weight_decay=0.0):
    """One update in place. Weight decay is decoupled and applied before
    the moment update (params shrink toward 0 independently of the
    gradient scaling)."""
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        if g is None:
            continue
        g = np.asarray(g, dtype=p.value.dtype)
        if weight_decay:
            p.value -= p.value.dtype.type(lr * weight_decay) * p.value
        m += (1.0 - beta1) * (g - m)
        v += (1.0 - beta2) * (g * g - v)
        m_hat = m / bc1
        v_hat = v / bc2
        p.value -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.value.dtype)
    return state


def frobenius_sq(x):
    """sum(x*x) as a tape op chain."""
    return sum_all(mul(x, x))


def mean_all(x):
    return scale(sum_all(x), 1.0 / x.value.size)
