"""Minimal reverse-mode differentiation over numpy arrays.

A :class:`Node` holds a ``float64`` array and, for non-leaves, the parents it
was computed from together with a closure mapping the output cotangent to one
cotangent per parent. :func:`backward` walks the graph once in reverse
topological order and accumulates gradients, so shared subexpressions are
summed rather than overwritten.

Besides elementwise and reduction primitives the engine has fused ops needed
by the alignment losses: :func:`masked_logsumexp`, :func:`cosine`,
:func:`ridge_project` and its all-pairs form :func:`ridge_project_pairs`. The
projections differentiate through the ridge solve by solving the adjoint
system with the same factorized Gram matrix.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NonFiniteError, ShapeError
from .linalg import (
    DEFAULT_COSINE_EPS,
    DEFAULT_RIDGE,
    cholesky_solve,
    pairwise_ridge_project,
    ridge_solve_batch,
)

LEAKY_SLOPE = 0.01


class Node:
    __slots__ = ("value", "grad", "_parents", "_backward", "name")

    def __init__(self, value, parents=(), backward=None, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def is_leaf(self):
        return not self._parents

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Node{label}(shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_node(other)))

    def __rsub__(self, other):
        return add(as_node(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_node(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    @property
    def T(self):
        return transpose(self)


def as_node(x):
    return x if isinstance(x, Node) else Node(x)


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise


def add(a, b):
    a, b = as_node(a), as_node(b)
    return Node(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def neg(a):
    return Node(-a.value, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = as_node(a), as_node(b)
    return Node(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def div(a, b):
    a, b = as_node(a), as_node(b)
    out = a.value / b.value
    return Node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.value, a.shape), _unbroadcast(-g * out / b.value, b.shape)),
    )


def power(a, exponent):
    p = float(exponent)
    return Node(a.value**p, (a,), lambda g: (g * p * a.value ** (p - 1),))


def exp(a):
    out = np.exp(a.value)
    return Node(out, (a,), lambda g: (g * out,))


def log(a):
    return Node(np.log(a.value), (a,), lambda g: (g / a.value,))


def tanh(a):
    out = np.tanh(a.value)
    return Node(out, (a,), lambda g: (g * (1.0 - out**2),))


def leaky_relu(a, slope=LEAKY_SLOPE):
    scale = np.where(a.value > 0, 1.0, slope)
    return Node(a.value * scale, (a,), lambda g: (g * scale,))


# ------------------------------------------------------------------ reductions


def sum_(a, axis=None, keepdims=False):
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Node(out, (a,), back)


def mean(a, axis=None, keepdims=False):
    count = a.value.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return sum_(a, axis, keepdims) * (1.0 / count)


def masked_logsumexp(a, axis=-1, mask=None):
    """``log sum exp`` over ``axis`` restricted to entries where ``mask`` is True."""
    x = a.value
    if mask is None:
        mask = np.ones(x.shape, dtype=bool)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    if not np.all(mask.any(axis=axis)):
        raise DomainError("every reduction slice needs at least one unmasked entry")
    masked = np.where(mask, x, -np.inf)
    top = masked.max(axis=axis, keepdims=True)
    weights = np.where(mask, np.exp(masked - top), 0.0)
    total = weights.sum(axis=axis, keepdims=True)
    out = np.squeeze(top + np.log(total), axis=axis)
    soft = weights / total
    return Node(out, (a,), lambda g: (np.expand_dims(g, axis) * soft,))


# ------------------------------------------------------------- shape / linear


def matmul(a, b):
    a, b = as_node(a), as_node(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")

    def back(g):
        ga = g @ np.swapaxes(b.value, -1, -2)
        gb = np.swapaxes(a.value, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Node(a.value @ b.value, (a, b), back)


def transpose(a, axes=None):
    inverse = None if axes is None else np.argsort(axes)
    return Node(np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inverse),))


def reshape(a, shape):
    return Node(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def expand_dims(a, axis):
    return reshape(a, np.expand_dims(a.value, axis).shape)


def take(a, index):
    def back(g):
        out = np.zeros_like(a.value)
        np.add.at(out, index, g)
        return (out,)

    return Node(a.value[index], (a,), back)


def concat(nodes, axis=-1):
    nodes = [as_node(n) for n in nodes]
    sizes = [n.shape[axis] for n in nodes]
    cuts = np.cumsum(sizes)[:-1]
    return Node(
        np.concatenate([n.value for n in nodes], axis=axis),
        nodes,
        lambda g: tuple(np.split(g, cuts, axis=axis)),
    )


def stack(nodes, axis=0):
    nodes = [as_node(n) for n in nodes]

    def back(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(nodes)))

    return Node(np.stack([n.value for n in nodes], axis=axis), nodes, back)


# ------------------------------------------------------------------ fused ops


def cosine(u, v, eps=DEFAULT_COSINE_EPS):
    """Cosine similarity along the last axis, broadcasting the others.

    Norms are floored at ``eps`` and the result is clamped to [-1, 1]; the
    clamp only absorbs rounding and is passed straight through in backward.
    """
    u, v = as_node(u), as_node(v)
    uv, vv = u.value, v.value
    if uv.shape[-1] != vv.shape[-1]:
        raise ShapeError(f"cosine over mismatched dims {uv.shape[-1]} vs {vv.shape[-1]}")
    raw_nu = np.linalg.norm(uv, axis=-1, keepdims=True)
    raw_nv = np.linalg.norm(vv, axis=-1, keepdims=True)
    nu = np.maximum(raw_nu, eps)
    nv = np.maximum(raw_nv, eps)
    dot = np.sum(uv * vv, axis=-1, keepdims=True)
    cos = dot / (nu * nv)
    out = np.clip(cos[..., 0], -1.0, 1.0)

    def back(g):
        g = g[..., None]
        # the norm floor is constant below eps, so its radial term vanishes there
        du = g * (vv / (nu * nv) - np.where(raw_nu > eps, cos * uv / nu**2, 0.0))
        dv = g * (uv / (nu * nv) - np.where(raw_nv > eps, cos * vv / nv**2, 0.0))
        return _unbroadcast(du, u.shape), _unbroadcast(dv, v.shape)

    return Node(out, (u, v), back)


def ridge_project(A, z, lam=DEFAULT_RIDGE):
    """Differentiable ``A (A^T A + lam I)^{-1} A^T z`` with broadcasting.

    ``A`` has shape ``(..., d, k)`` and ``z`` shape ``(..., d)``. With
    ``G = A^T A + lam I``, ``w = G^{-1} A^T z`` and output cotangent ``g``,
    the adjoint ``v = G^{-1} A^T g`` gives::

        dz = A v
        dA = g w^T + z v^T - A (v w^T + w v^T)
    """
    A, z = as_node(A), as_node(z)
    Av, zv = A.value, z.value
    if Av.ndim < 2 or Av.shape[-2] != zv.shape[-1]:
        raise ShapeError(f"cannot project vectors of shape {zv.shape} onto columns of {Av.shape}")
    if lam <= 0:
        raise DomainError(f"ridge constant must be positive, got {lam}")
    w, chol = ridge_solve_batch(Av, zv, lam)
    out = np.einsum("...dk,...k->...d", Av, w)

    def back(g):
        v = cholesky_solve(chol, np.einsum("...dk,...d->...k", Av, g))
        dz = np.einsum("...dk,...k->...d", Av, v)
        dA = (
            g[..., :, None] * w[..., None, :]
            + zv[..., :, None] * v[..., None, :]
            - np.einsum("...dk,...kj->...dj", Av, v[..., :, None] * w[..., None, :] + w[..., :, None] * v[..., None, :])
        )
        return _unbroadcast(dA, A.shape), _unbroadcast(dz, z.shape)

    return Node(out, (A, z), back)


def ridge_project_pairs(Z, A, lam=DEFAULT_RIDGE):
    """Differentiable all-pairs projection: ``out[n, p]`` projects ``Z[n]``
    onto the columns of ``A[p]``. Same adjoint as :func:`ridge_project`,
    with the sums over the broadcast axis done as matrix products."""
    Z, A = as_node(Z), as_node(A)
    Zv, Av = Z.value, A.value
    if Zv.ndim != 2 or Av.ndim != 3 or Av.shape[1] != Zv.shape[1]:
        raise ShapeError(f"need Z (N, d) and A (P, d, k), got {Zv.shape} and {Av.shape}")
    if lam <= 0:
        raise DomainError(f"ridge constant must be positive, got {lam}")
    out, w, ginv = pairwise_ridge_project(Zv, Av, lam)
    P, d, k = Av.shape

    def back(g):
        gp = g.transpose(1, 0, 2)                       # (P, N, d)
        v = (gp @ Av) @ np.swapaxes(ginv, -1, -2)       # (P, N, k)
        dZ = v.transpose(1, 0, 2).reshape(-1, P * k) @ Av.transpose(0, 2, 1).reshape(P * k, d)
        vw = np.swapaxes(v, -1, -2) @ w                 # (P, k, k)
        dA = np.swapaxes(gp, -1, -2) @ w + Zv.T @ v - Av @ (vw + np.swapaxes(vw, -1, -2))
        return dZ, dA

    return Node(out, (Z, A), back)


# -------------------------------------------------------------------- backward


def _topological_order(root):
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack_.append((parent, False))
    return order


def backward(root):
    """Reverse-mode sweep from a scalar ``root``.

    Sets ``.grad`` on every node in the graph and returns the leaves'
    gradients as a dict keyed by leaf node.
    """
    if root.value.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
    order = _topological_order(root)
    grads = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            g = np.zeros_like(node.value)
        node.grad = g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = np.asarray(pg, dtype=np.float64)
    return {node: node.grad for node in order if node.is_leaf}


# ------------------------------------------------------------------------- MLP


@dataclass
class MlpParams:
    """Weights ``(in, out)``, biases ``(out,)`` and one activation per layer."""

    weights: list
    biases: list
    activations: list
    slope: float = LEAKY_SLOPE

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ShapeError("weights, biases and activations must have equal length")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(f"layer {i} input {w.shape[0]} != previous output {self.weights[i - 1].shape[1]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NonFiniteError(f"layer {i} has non-finite parameters")
        for act in self.activations:
            if act not in ("identity", "leaky_relu"):
                raise DomainError(f"unknown activation {act!r}")

    @property
    def in_dim(self):
        return self.weights[0].shape[0]

    @property
    def out_dim(self):
        return self.weights[-1].shape[1]

    def arrays(self):
        """Flat parameter list ``[W0, b0, W1, b1, ...]`` (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_arrays(self, arrays):
        return MlpParams(list(arrays[0::2]), list(arrays[1::2]), list(self.activations), self.slope)


def init_mlp(widths, rng, hidden_activation="leaky_relu", output_activation="identity", slope=LEAKY_SLOPE):
    """Glorot-uniform weights, zero biases."""
    widths = [int(w) for w in widths]
    if len(widths) < 2 or min(widths) < 1:
        raise ShapeError(f"need at least two positive widths, got {widths}")
    weights, biases, acts = [], [], []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
        acts.append(output_activation if i == len(widths) - 2 else hidden_activation)
    return MlpParams(weights, biases, acts, slope)


def forward_mlp(params, x, leaves=None):
    """Batched forward pass recording the graph.

    ``leaves`` optionally supplies the parameter nodes (``[W0, b0, ...]``) so
    the caller can read their gradients after :func:`backward`.
    """
    x = as_node(x)
    if x.shape[-1] != params.in_dim:
        raise ShapeError(f"input has {x.shape[-1]} features, first layer expects {params.in_dim}")
    if leaves is None:
        leaves = [Node(a) for a in params.arrays()]
    h = x
    for i, act in enumerate(params.activations):
        h = h @ leaves[2 * i] + leaves[2 * i + 1]
        if act == "leaky_relu":
            h = leaky_relu(h, params.slope)
    return h


def mlp_apply(params, x):
    """Graph-free forward pass for inference."""
    h = np.asarray(x, dtype=np.float64)
    for w, b, act in zip(params.weights, params.biases, params.activations):
        h = h @ w + b
        if act == "leaky_relu":
            h = np.where(h > 0, h, params.slope * h)
    return h


# ------------------------------------------------------------------------ Adam


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(state, params, grads):
    """One bias-corrected Adam update. Returns new parameter arrays and
    advances ``state`` in place."""
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    updated = []
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape or state.m[i].shape != p.shape:
            raise ShapeError(f"parameter {i}: shape {p.shape} vs gradient {g.shape}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        updated.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return updated


# ---------------------------------------------------------- finite differences


@dataclass
class GradCheckReport:
    max_rel_err: float
    max_abs_err: float
    worst: tuple
    checked: int
    passed: bool


def finite_diff_check(loss_fn, params, h=1e-5, tol=1e-4):
    """Compare :func:`backward` against central differences, coordinate-wise.

    ``loss_fn`` maps a list of leaf nodes (one per array in ``params``) to a
    scalar node. Relative error per coordinate is
    ``|a - b| / max(|a|, |b|, 1e-8)``.
    """
    if h <= 0:
        raise DomainError(f"step must be positive, got {h}")
    params = [np.array(p, dtype=np.float64) for p in params]
    leaves = [Node(p) for p in params]
    root = loss_fn(leaves)
    if not np.isfinite(root.value):
        raise NonFiniteError("loss is not finite at the base point")
    backward(root)
    analytic = [np.zeros_like(p) if leaf.grad is None else leaf.grad for p, leaf in zip(params, leaves)]

    def evaluate(arrays):
        val = float(loss_fn([Node(a) for a in arrays]).value)
        if not np.isfinite(val):
            raise NonFiniteError("loss became non-finite while probing")
        return val

    max_rel, max_abs, worst, count = 0.0, 0.0, (), 0
    for i, p in enumerate(params):
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = evaluate(params)
            p[idx] = orig - h
            down = evaluate(params)
            p[idx] = orig
            numeric = (up - down) / (2 * h)
            a = analytic[i][idx]
            err = abs(a - numeric)
            rel = err / max(abs(a), abs(numeric), 1e-8)
            count += 1
            max_abs = max(max_abs, err)
            if rel > max_rel:
                max_rel, worst = rel, (i, idx)
    return GradCheckReport(max_rel, max_abs, worst, count, max_rel < tol)
