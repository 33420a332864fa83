"""Dense float64 tensors with a define-by-run reverse-mode gradient tape.

Operations record themselves onto the innermost active :class:`Tape` when at
least one input is tracked (a leaf with ``requires_grad`` or an output of an
earlier recorded op). Outside a tape everything runs as plain numpy, which is
what evaluation uses.

    >>> w = Tensor(np.ones((2, 2)), requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = sum_(matmul(w, w))
    >>> backward(tape, loss)
    >>> w.grad.tolist()
    [[4.0, 4.0], [4.0, 4.0]]
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, ContractError, DegenerateMaskError, DimensionError

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "current_tape",
    "add",
    "sub",
    "mul",
    "scale",
    "neg",
    "matmul",
    "transpose",
    "reshape",
    "relu",
    "abs_",
    "sum_",
    "mean",
    "softmax_rows",
    "layer_norm",
    "conv1d_same",
    "dropout",
    "concat",
    "stack",
    "take_rows",
    "cross_entropy",
    "l1_loss",
]

_TAPES: list["Tape"] = []


class Tensor:
    """A float64 array, optionally tracked by a gradient tape."""

    __slots__ = ("data", "grad", "requires_grad", "node", "_tape", "name", "probe")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node: int | None = None
        self._tape: Tape | None = None
        self.name = name
        # A probe tensor holds K stacked variants of a parameter along a new
        # leading axis that lines up with the activation batch axis.
        # Forward-only; used to vectorize finite differences.
        self.probe = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class _Op:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Callable):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of differentiable operations.

    Used as a context manager; nesting is allowed and the innermost tape
    receives the records. Ops are appended in execution order, so the list is
    topologically sorted by construction.
    """

    def __init__(self):
        self.ops: list[_Op] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def __len__(self) -> int:
        return len(self.ops)

    def tracks(self, t: Tensor) -> bool:
        return t.requires_grad or t._tape is self

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Callable) -> None:
        out.node = len(self.ops)
        out._tape = self
        self.ops.append(_Op(out, inputs, backward))


def current_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, inputs: tuple[Tensor, ...], backward: Callable) -> Tensor:
    out = Tensor(data)
    tape = current_tape()
    if tape is not None and any(tape.tracks(t) for t in inputs):
        if any(t.probe for t in inputs):
            raise ContractError("probe tensors are forward-only and cannot be taped")
        tape.record(out, inputs, backward)
    return out


def _aligned(t: Tensor, ndim: int) -> np.ndarray:
    """Data of ``t``, with a probe axis made to broadcast against an ``ndim`` operand."""
    d = t.data
    if not t.probe or d.ndim >= ndim:
        return d
    return d.reshape(d.shape[:1] + (1,) * (ndim - d.ndim) + d.shape[1:])


_RELU_WATCH: list[list[np.ndarray]] = []


@contextmanager
def relu_patterns():
    """Collect the on/off pattern of every ReLU evaluated inside the block.

    Finite differences are only meaningful when no unit changes state
    across the stencil, which these patterns let callers verify.
    """
    log: list[np.ndarray] = []
    _RELU_WATCH.append(log)
    try:
        yield log
    finally:
        _RELU_WATCH.remove(log)


def backward(tape: Tape, root: Tensor, leaves: Sequence[Tensor] = ()) -> None:
    """Replay ``tape`` from a scalar ``root`` and write ``.grad`` on leaves.

    Every leaf reached receives its total derivative. Leaves listed in
    ``leaves`` that are unreachable from ``root`` get a zero gradient.
    """
    if root.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    if root._tape is not tape:
        raise ContractError("root was not produced on this tape")

    node_grads: dict[int, np.ndarray] = {root.node: np.ones_like(root.data)}
    leaf_grads: dict[int, np.ndarray] = {}
    leaf_refs: dict[int, Tensor] = {}

    for op in reversed(tape.ops[: root.node + 1]):
        g = node_grads.pop(op.out.node, None)
        if g is None:
            continue
        for inp, gi in zip(op.inputs, op.backward(g)):
            if gi is None:
                continue
            if inp.requires_grad:
                key = id(inp)
                if key in leaf_grads:
                    leaf_grads[key] = leaf_grads[key] + gi
                else:
                    leaf_grads[key] = gi
                    leaf_refs[key] = inp
            elif inp._tape is tape:
                prev = node_grads.get(inp.node)
                node_grads[inp.node] = gi if prev is None else prev + gi

    for leaf in leaves:
        leaf.grad = np.zeros_like(leaf.data)
    for key, leaf in leaf_refs.items():
        leaf.grad = np.asarray(leaf_grads[key], dtype=np.float64).reshape(leaf.shape).copy()


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise ------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.shape, b.shape
    if a.probe or b.probe:
        n = max(a.ndim, b.ndim)
        return _result(_aligned(a, n) + _aligned(b, n), (a, b), None)
    return _result(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.shape, b.shape
    return _result(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    return _result(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    return _result(a.data * c, (a,), lambda g: (g * c,))


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def relu(a: Tensor) -> Tensor:
    keep = a.data > 0
    if _RELU_WATCH:
        _RELU_WATCH[-1].append(keep)
    return _result(np.where(keep, a.data, 0.0), (a,), lambda g: (g * keep,))


def abs_(a: Tensor) -> Tensor:
    sign = np.sign(a.data)
    return _result(np.abs(a.data), (a,), lambda g: (g * sign,))


# -- linear algebra and shape -----------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes, batch axes broadcast."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, _aligned(b, a.ndim)

    def grad(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        if bd.ndim == 2:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    if b.probe and ad.ndim == 2:
        # [K, F] activations: each row meets its own probe weight.
        return _result((ad[:, None, :] @ bd)[:, 0, :], (a, b), grad)
    return _result(ad @ bd, (a, b), grad)


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    """Permute axes; the default swaps the last two."""
    if axes is None:
        axes = list(range(a.ndim))
        axes[-2], axes[-1] = axes[-1], axes[-2]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return _result(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.split(g, cuts, axis=axis)),
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    n = len(tensors)
    return _result(
        np.stack([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)),
    )


def take_rows(a: Tensor, index: np.ndarray) -> Tensor:
    """Pick ``a[n, index[n]]`` for every leading index ``n``; ``a`` is [N, T, D]."""
    index = np.asarray(index, dtype=np.int64)
    rows = np.arange(a.shape[0])
    src = a.shape

    def grad(g):
        out = np.zeros(src)
        out[rows, index] = g
        return (out,)

    return _result(a.data[rows, index], (a,), grad)


def sum_(a: Tensor) -> Tensor:
    src = a.shape
    return _result(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, src),))


def mean(a: Tensor) -> Tensor:
    return scale(sum_(a), 1.0 / a.size)


# -- fused neural-network kernels -------------------------------------------


def softmax_rows(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis.

    ``mask`` (broadcastable to ``x``, True = keep) excludes entries by adding
    -inf before exponentiation, so masked weights are exactly zero.
    """
    logits = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.all():
            keep = np.broadcast_to(mask, logits.shape)
            if not keep.any(axis=-1).all():
                raise DegenerateMaskError("softmax row has no unmasked entry")
            logits = np.where(keep, logits, -np.inf)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def grad(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result(y, (x,), grad)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis with population variance, then apply gain/bias."""
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    centered = xd - mu
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    gd = _aligned(gain, xd.ndim)

    def grad(g):
        gx_hat = g * gd
        gx = inv * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        flat = g.reshape(-1, g.shape[-1])
        return gx, (flat * xhat.reshape(flat.shape)).sum(axis=0), flat.sum(axis=0)

    return _result(xhat * gd + _aligned(bias, xd.ndim), (x, gain, bias), grad)


def conv1d_same(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Temporal convolution with zero same-padding.

    ``x`` is [T, d_in] or [N, T, d_in], ``kernel`` is [k, d_in, d_out] with k
    odd; output keeps length T.
    """
    k, d_in, _ = kernel.shape[-3:]
    if k % 2 == 0:
        raise ConfigError(f"conv kernel size must be odd, got {k}")
    if x.shape[-1] != d_in:
        raise DimensionError(f"conv input dim {x.shape[-1]} != kernel input dim {d_in}")
    pad = (k - 1) // 2
    xd = x.data
    T = xd.shape[-2]
    widths = [(0, 0)] * (xd.ndim - 2) + [(pad, pad), (0, 0)]
    xp = np.pad(xd, widths)
    kd = kernel.data
    if kernel.probe:
        lead = kd.shape[:1] + (1,) * (xd.ndim - 3)
        taps = [kd[:, j].reshape(lead + kd.shape[2:]) for j in range(k)]
    else:
        taps = [kd[j] for j in range(k)]
    out = _aligned(bias, xd.ndim) + sum(xp[..., j : j + T, :] @ taps[j] for j in range(k))

    def grad(g):
        gxp = np.zeros_like(xp)
        gk = np.empty_like(kd)
        g2 = g.reshape(-1, g.shape[-1])
        for j in range(k):
            gxp[..., j : j + T, :] += g @ kd[j].T
            gk[j] = xp[..., j : j + T, :].reshape(-1, d_in).T @ g2
        return gxp[..., pad : pad + T, :], gk, g2.sum(axis=0)

    return _result(out, (x, kernel, bias), grad)


def dropout(
    x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None
) -> Tensor:
    """Inverted dropout; identity (the same object) in evaluation or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ContractError("training-mode dropout needs a seeded generator")
    keep = (rng.random(x.shape, dtype=np.float32) >= rate) * (1.0 / (1.0 - rate))
    return _result(x.data * keep, (x,), lambda g: (g * keep,))


# -- losses -------------------------------------------------------------------


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under softmax(``logits``).

    Accepts a single [C] logit vector with an int label, or [N, C] with N labels.
    """
    single = logits.ndim == 1
    z = logits.data[None, :] if single else logits.data
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n, c = z.shape
    if c < 2:
        raise ContractError(f"cross entropy needs at least 2 classes, got {c}")
    if y.shape != (n,) or (y < 0).any() or (y >= c).any():
        raise ContractError(f"labels {y.tolist()} out of range for {c} classes")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - log_norm
    rows = np.arange(n)
    loss = -logp[rows, y].mean()

    def grad(g):
        p = np.exp(logp)
        p[rows, y] -= 1.0
        gz = p * (g / n)
        return (gz[0] if single else gz,)

    return _result(np.asarray(loss), (logits,), grad)


def l1_loss(score: Tensor, target) -> Tensor:
    """Mean absolute error; subgradient 0 at the kink."""
    t = np.asarray(target, dtype=np.float64).reshape(score.shape)
    diff = score.data - t
    n = diff.size
    sign = np.sign(diff)
    return _result(np.asarray(np.abs(diff).mean()), (score,), lambda g: (g * sign / n,))
