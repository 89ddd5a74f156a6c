"""Dense float64 tensors with reverse-mode differentiation.

Implements exactly what the benchmarked models need: valid (no padding)
1-D/2-D cross-correlation, non-overlapping max pooling, dense layers, ReLU,
a numerically stabilized softmax cross-entropy, plain SGD, and a central
finite-difference gradient checker. Everything runs on 64-bit reals and
forward passes are bit-deterministic.

A computation is a define-by-run tape: each op returns a ``Tensor`` whose
creation order is a topological order of the graph, and ``backward`` walks
that order exactly once in reverse, accumulating gradients into parents.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, ValidationError


class Tensor:
    """A dense value buffer with an optional gradient buffer of equal shape."""

    __slots__ = ("values", "grad", "_parents", "_backward")

    def __init__(self, values, _parents=(), _backward=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    def __repr__(self):
        return f"Tensor(shape={self.values.shape})"

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse-mode sweep from this tensor (gradients accumulate)."""
        order = _toposort(self)
        self.grad = np.ones_like(self.values)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _toposort(root: Tensor) -> list[Tensor]:
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _accum(t: Tensor, g: np.ndarray):
    t.grad = g if t.grad is None else t.grad + g


# ---------------------------------------------------------------------------
# Shape-normalizing helpers: the public conv/dense surfaces accept unbatched
# inputs (per-sample shapes); internally everything runs batched.
# ---------------------------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    out_values = x.values.reshape(shape)
    out = Tensor(out_values, _parents=(x,))
    in_shape = x.values.shape

    def backward(g):
        _accum(x, g.reshape(in_shape))

    out._backward = backward
    return out


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.values for t in tensors], axis=axis),
                 _parents=tuple(tensors))
    sizes = [t.values.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(t, g[tuple(sl)])

    out._backward = backward
    return out


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.values > 0
    out = Tensor(np.where(mask, x.values, 0.0), _parents=(x,))

    def backward(g):
        _accum(x, g * mask)

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# Convolutions (valid, i.e. no padding)
# ---------------------------------------------------------------------------


def _conv1d_batched(x: Tensor, w: Tensor, b: Tensor | None) -> Tensor:
    xb, wb = x.values, w.values
    B, C, L = xb.shape
    Co, Ci, K = wb.shape
    if Ci != C:
        raise ShapeError(f"kernel expects {Ci} input channels, input has {C}")
    if K > L:
        raise ShapeError(f"kernel size {K} exceeds input length {L}")
    Lp = L - K + 1
    cols = np.lib.stride_tricks.sliding_window_view(xb, K, axis=2)  # [B,C,Lp,K]
    cols2 = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(B * Lp, C * K)
    w2 = wb.reshape(Co, Ci * K)
    y = (cols2 @ w2.T).reshape(B, Lp, Co).transpose(0, 2, 1)
    if b is not None:
        y = y + b.values[None, :, None]
    parents = (x, w) if b is None else (x, w, b)
    out = Tensor(np.ascontiguousarray(y), _parents=parents)

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(B * Lp, Co)
        _accum(w, (g2.T @ cols2).reshape(Co, Ci, K))
        if b is not None:
            _accum(b, g.sum(axis=(0, 2)))
        gcols = (g2 @ w2).reshape(B, Lp, Ci, K)
        gx = np.zeros_like(xb)
        for k in range(K):
            gx[:, :, k:k + Lp] += gcols[:, :, :, k].transpose(0, 2, 1)
        _accum(x, gx)

    out._backward = backward
    return out


def conv1d(x, kernels, bias=None) -> Tensor:
    """Valid cross-correlation over the last axis.

    Input may be [L], [C_in, L] or [B, C_in, L]; kernels [K] or
    [C_out, C_in, K]; output is squeezed back to match the input form.
    """
    x, w = as_tensor(x), as_tensor(kernels)
    if w.values.ndim == 1:
        w = reshape(w, (1, 1, -1))
    elif w.values.ndim != 3:
        raise ShapeError("kernels must be [K] or [C_out, C_in, K]")
    b = as_tensor(bias) if bias is not None else None

    ndim = x.values.ndim
    if ndim == 1:
        x3 = reshape(x, (1, 1, -1))
    elif ndim == 2:
        x3 = reshape(x, (1,) + x.values.shape)
    elif ndim == 3:
        x3 = x
    else:
        raise ShapeError("input must be [L], [C_in, L] or [B, C_in, L]")

    y = _conv1d_batched(x3, w, b)
    _, Co, Lp = y.values.shape
    if ndim == 1:
        return reshape(y, (Lp,)) if Co == 1 else reshape(y, (Co, Lp))
    if ndim == 2:
        return reshape(y, (Co, Lp))
    return y


def _conv2d_batched(x: Tensor, w: Tensor, b: Tensor | None) -> Tensor:
    xb, wb = x.values, w.values
    B, C, H, W = xb.shape
    Co, Ci, KH, KW = wb.shape
    if Ci != C:
        raise ShapeError(f"kernel expects {Ci} input channels, input has {C}")
    if KH > H or KW > W:
        raise ShapeError(f"kernel {KH}x{KW} exceeds input {H}x{W}")
    Hp, Wp = H - KH + 1, W - KW + 1
    cols = np.lib.stride_tricks.sliding_window_view(xb, (KH, KW), axis=(2, 3))
    cols2 = np.ascontiguousarray(cols.transpose(0, 2, 3, 1, 4, 5)).reshape(
        B * Hp * Wp, C * KH * KW
    )
    w2 = wb.reshape(Co, Ci * KH * KW)
    y = (cols2 @ w2.T).reshape(B, Hp, Wp, Co).transpose(0, 3, 1, 2)
    if b is not None:
        y = y + b.values[None, :, None, None]
    parents = (x, w) if b is None else (x, w, b)
    out = Tensor(np.ascontiguousarray(y), _parents=parents)

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(B * Hp * Wp, Co)
        _accum(w, (g2.T @ cols2).reshape(Co, Ci, KH, KW))
        if b is not None:
            _accum(b, g.sum(axis=(0, 2, 3)))
        gcols = (g2 @ w2).reshape(B, Hp, Wp, Ci, KH, KW)
        gx = np.zeros_like(xb)
        for i in range(KH):
            for j in range(KW):
                gx[:, :, i:i + Hp, j:j + Wp] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        _accum(x, gx)

    out._backward = backward
    return out


def conv2d(x, kernels, bias=None) -> Tensor:
    """Valid 2-D cross-correlation; input [H,W], [C_in,H,W] or [B,C_in,H,W]."""
    x, w = as_tensor(x), as_tensor(kernels)
    if w.values.ndim == 2:
        w = reshape(w, (1, 1) + w.values.shape)
    elif w.values.ndim != 4:
        raise ShapeError("kernels must be [KH, KW] or [C_out, C_in, KH, KW]")
    b = as_tensor(bias) if bias is not None else None

    ndim = x.values.ndim
    if ndim == 2:
        x4 = reshape(x, (1, 1) + x.values.shape)
    elif ndim == 3:
        x4 = reshape(x, (1,) + x.values.shape)
    elif ndim == 4:
        x4 = x
    else:
        raise ShapeError("input must be [H,W], [C_in,H,W] or [B,C_in,H,W]")

    y = _conv2d_batched(x4, w, b)
    _, Co, Hp, Wp = y.values.shape
    if ndim == 2:
        return reshape(y, (Hp, Wp)) if Co == 1 else reshape(y, (Co, Hp, Wp))
    if ndim == 3:
        return reshape(y, (Co, Hp, Wp))
    return y


# ---------------------------------------------------------------------------
# Pooling
# ---------------------------------------------------------------------------


def _maxpool1d_batched(x: Tensor, pool: int) -> Tensor:
    if pool < 1:
        raise ValidationError("pool_size must be >= 1")
    xb = x.values
    B, C, L = xb.shape
    nb = L // pool
    if nb == 0:
        raise ShapeError(f"pool size {pool} exceeds length {L}")
    Lt = nb * pool
    blocks = xb[:, :, :Lt].reshape(B, C, nb, pool)
    idx = blocks.argmax(axis=3)  # first index wins ties
    out = Tensor(np.take_along_axis(blocks, idx[..., None], axis=3)[..., 0],
                 _parents=(x,))

    def backward(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, idx[..., None], g[..., None], axis=3)
        gx = np.zeros_like(xb)
        gx[:, :, :Lt] = gb.reshape(B, C, Lt)
        _accum(x, gx)

    out._backward = backward
    return out


def _maxpool2d_batched(x: Tensor, pool: tuple[int, int]) -> Tensor:
    ph, pw = pool
    if ph < 1 or pw < 1:
        raise ValidationError("pool_size must be >= 1")
    xb = x.values
    B, C, H, W = xb.shape
    nh, nw = H // ph, W // pw
    if nh == 0 or nw == 0:
        raise ShapeError(f"pool {ph}x{pw} exceeds input {H}x{W}")
    blocks = (
        xb[:, :, :nh * ph, :nw * pw]
        .reshape(B, C, nh, ph, nw, pw)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(B, C, nh, nw, ph * pw)
    )
    idx = blocks.argmax(axis=4)  # row-major first index wins ties
    out = Tensor(np.take_along_axis(blocks, idx[..., None], axis=4)[..., 0],
                 _parents=(x,))

    def backward(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, idx[..., None], g[..., None], axis=4)
        gb = gb.reshape(B, C, nh, nw, ph, pw).transpose(0, 1, 2, 4, 3, 5)
        gx = np.zeros_like(xb)
        gx[:, :, :nh * ph, :nw * pw] = gb.reshape(B, C, nh * ph, nw * pw)
        _accum(x, gx)

    out._backward = backward
    return out


def maxpool(x, pool_size, dims: int = 1) -> Tensor:
    """Non-overlapping max pooling (remainder truncated; first index on ties).

    dims=1 pools the last axis of [L], [C,L] or [B,C,L]; dims=2 pools the
    last two axes of [H,W], [C,H,W] or [B,C,H,W]. pool_size may be an int
    or, for dims=2, an (h, w) pair.
    """
    x = as_tensor(x)
    if dims == 1:
        ndim = x.values.ndim
        if ndim == 1:
            x3 = reshape(x, (1, 1, -1))
        elif ndim == 2:
            x3 = reshape(x, (1,) + x.values.shape)
        elif ndim == 3:
            x3 = x
        else:
            raise ShapeError("1-D pooling expects [L], [C,L] or [B,C,L]")
        y = _maxpool1d_batched(x3, int(pool_size))
        _, C, Lp = y.values.shape
        if ndim == 1:
            return reshape(y, (Lp,))
        if ndim == 2:
            return reshape(y, (C, Lp))
        return y
    if dims == 2:
        pool = (int(pool_size), int(pool_size)) if np.isscalar(pool_size) else tuple(pool_size)
        ndim = x.values.ndim
        if ndim == 2:
            x4 = reshape(x, (1, 1) + x.values.shape)
        elif ndim == 3:
            x4 = reshape(x, (1,) + x.values.shape)
        elif ndim == 4:
            x4 = x
        else:
            raise ShapeError("2-D pooling expects [H,W], [C,H,W] or [B,C,H,W]")
        y = _maxpool2d_batched(x4, pool)
        _, C, Hp, Wp = y.values.shape
        if ndim == 2:
            return reshape(y, (Hp, Wp))
        if ndim == 3:
            return reshape(y, (C, Hp, Wp))
        return y
    raise ValidationError("dims must be 1 or 2")


def global_maxpool(x: Tensor) -> Tensor:
    """Max over all trailing spatial axes of [B, C, *spatial] -> [B, C]."""
    x = as_tensor(x)
    xb = x.values
    B, C = xb.shape[:2]
    flat = xb.reshape(B, C, -1)
    idx = flat.argmax(axis=2)
    out = Tensor(np.take_along_axis(flat, idx[..., None], axis=2)[..., 0],
                 _parents=(x,))

    def backward(g):
        gf = np.zeros_like(flat)
        np.put_along_axis(gf, idx[..., None], g[..., None], axis=2)
        _accum(x, gf.reshape(xb.shape))

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# Dense, loss, optimizer
# ---------------------------------------------------------------------------


def dense(x, weights, bias=None) -> Tensor:
    """Affine map y = x @ W.T + b with W of shape [out, in]."""
    x, w = as_tensor(x), as_tensor(weights)
    b = as_tensor(bias) if bias is not None else None
    ndim = x.values.ndim
    x2 = reshape(x, (1, -1)) if ndim == 1 else x
    if x2.values.ndim != 2:
        raise ShapeError("dense input must be [n] or [B, n]")
    if x2.values.shape[1] != w.values.shape[1]:
        raise ShapeError(
            f"dense expects input width {w.values.shape[1]}, got {x2.values.shape[1]}"
        )
    y = x2.values @ w.values.T
    if b is not None:
        y = y + b.values[None, :]
    parents = (x2, w) if b is None else (x2, w, b)
    out = Tensor(y, _parents=parents)
    xv, wv = x2.values, w.values

    def backward(g):
        _accum(w, g.T @ xv)
        if b is not None:
            _accum(b, g.sum(axis=0))
        _accum(x2, g @ wv)

    out._backward = backward
    return reshape(out, (-1,)) if ndim == 1 else out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-stabilized softmax of a [B, C] (or [C]) logit array."""
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    return p[0] if single else p


def softmax_cross_entropy(logits, labels, sample_weights=None) -> Tensor:
    """Mean negative log-softmax of the true class over the batch.

    Stabilized by max subtraction; the gradient is (softmax - onehot)/batch.
    With ``sample_weights`` the mean becomes weighted (weights normalized to
    sum 1), which the defaults leave untouched.
    """
    t = as_tensor(logits)
    z = t.values
    if z.ndim == 1:
        t = reshape(t, (1, -1))
        z = t.values
    if z.ndim != 2:
        raise ShapeError("logits must be [B, C] or [C]")
    B, C = z.shape
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if y.shape != (B,):
        raise ValidationError(f"expected {B} labels, got shape {y.shape}")
    if y.min() < 0 or y.max() >= C:
        raise ValidationError(f"labels must lie in [0, {C}), got range "
                              f"[{y.min()}, {y.max()}]")
    if sample_weights is None:
        wts = np.full(B, 1.0 / B)
    else:
        wts = np.asarray(sample_weights, dtype=np.float64)
        if wts.shape != (B,) or (wts < 0).any() or wts.sum() <= 0:
            raise ValidationError("sample_weights must be non-negative, length B, "
                                  "with positive sum")
        wts = wts / wts.sum()

    shifted = z - z.max(axis=1, keepdims=True)
    logsm = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -(logsm[np.arange(B), y] * wts).sum()
    out = Tensor(loss, _parents=(t,))

    def backward(g):
        p = np.exp(logsm)
        p[np.arange(B), y] -= 1.0
        _accum(t, g * p * wts[:, None])

    out._backward = backward
    return out


def sgd_step(params, grads, lr: float):
    """Plain SGD update p <- p - lr * g, elementwise.

    Accepts a single array (returns the updated array) or a sequence of
    arrays (returns a list of updated arrays).
    """
    if isinstance(params, (list, tuple)):
        grads = list(grads)
        if len(grads) != len(params):
            raise ValidationError("params and grads must have equal length")
        return [sgd_step(p, g, lr) for p, g in zip(params, grads)]
    return np.asarray(params, dtype=np.float64) - lr * np.asarray(grads, dtype=np.float64)


# ---------------------------------------------------------------------------
# Graphs: named parameters plus a forward rule
# ---------------------------------------------------------------------------


class Graph:
    """A feed-forward model: a registry of named parameter tensors and a
    forward rule that tapes operations over them."""

    def __init__(self, forward_fn, parameters: dict[str, Tensor], name: str = "graph"):
        self._forward = forward_fn
        self.parameters = dict(parameters)
        self.name = name

    def forward(self, x) -> Tensor:
        return self._forward(as_tensor(x))

    def zero_grad(self):
        for t in self.parameters.values():
            t.grad = None

    def state(self) -> dict[str, np.ndarray]:
        """Copy of all parameter values, keyed by name."""
        return {k: t.values.copy() for k, t in self.parameters.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        if set(state) != set(self.parameters):
            raise ValidationError("checkpoint parameter names do not match graph")
        for k, t in self.parameters.items():
            v = np.asarray(state[k], dtype=np.float64)
            if v.shape != t.values.shape:
                raise ShapeError(f"parameter {k}: shape {v.shape} != {t.values.shape}")
            t.values = v.copy()


def init_uniform(rng, shape, fan_in: int) -> np.ndarray:
    """Uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) initialization."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, shape)


def grad_check(graph: Graph, inputs, labels=None, epsilon: float = 1e-5,
               max_coords: int = 10_000, seed: int = 0) -> float:
    """Max relative error between reverse-mode and central finite differences.

    Checks every parameter coordinate, or a seeded random subset when the
    parameter count exceeds ``max_coords``. Relative error uses
    |a - n| / max(|a|, |n|, 1).
    """
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    x = np.asarray(inputs, dtype=np.float64)
    if labels is None:
        n_out = graph.forward(x).values.shape[-1]
        batch = x.shape[0] if x.ndim > 1 else 1
        labels = np.arange(batch) % n_out
    labels = np.asarray(labels)

    graph.zero_grad()
    loss = softmax_cross_entropy(graph.forward(x), labels)
    loss.backward()
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.values))
                for k, t in graph.parameters.items()}

    coords = [(k, i) for k, t in graph.parameters.items() for i in range(t.values.size)]
    if len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in sorted(picks)]

    def loss_at() -> float:
        return float(softmax_cross_entropy(graph.forward(x), labels).values)

    worst = 0.0
    for name, i in coords:
        buf = graph.parameters[name].values
        orig = buf.flat[i]
        buf.flat[i] = orig + epsilon
        f_plus = loss_at()
        buf.flat[i] = orig - epsilon
        f_minus = loss_at()
        buf.flat[i] = orig
        numeric = (f_plus - f_minus) / (2.0 * epsilon)
        a = analytic[name].flat[i]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1.0)
        worst = max(worst, err)
    return worst
