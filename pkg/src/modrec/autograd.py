"""Dense float64 tensors with tape-based reverse-mode differentiation.

Only the operations the transformer classifier needs are provided. Each op
computes its forward value with numpy and, when gradient tracking is on,
records a closure mapping the output gradient to the input gradients.
``backward`` walks the recorded graph in reverse topological order, sums
contributions from every path, and then releases the tape.
"""

from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError, DataError, DimensionError

_node_ids = itertools.count()
_grad_enabled = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """N-dimensional float64 array with an optional gradient buffer.

    Leaf tensors created with ``requires_grad=True`` accumulate into ``grad``
    across backward passes until :meth:`zero_grad` is called. The data array
    is never mutated by ops; only optimizers write to it in place.
    """

    __slots__ = ("data", "grad", "requires_grad", "node_id", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node_id = next(_node_ids)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._consumed = False

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
        return float(self.data.item())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar
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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None):
        return tensor_sum(self, axis)

    def mean(self, axis=None):
        return tensor_mean(self, axis)

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, inverting numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every leaf reachable from the scalar ``loss``.

    The tape is consumed: a second call on the same loss raises
    :class:`ContractError`.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise ContractError("backward() already ran on this loss; run a new forward pass")
    if not loss.requires_grad:
        raise ContractError("loss was not produced with gradient tracking on")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.node_id in seen:
            continue
        seen.add(node.node_id)
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and parent.node_id not in seen:
                stack.append((parent, False))

    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(node.node_id, None)
        if node._backward is None:
            # leaf
            if g is not None:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.node_id in grads:
                grads[parent.node_id] = grads[parent.node_id] + pg
            else:
                grads[parent.node_id] = pg

    for node in order:
        if node._backward is not None:
            node._backward = None
            node._parents = ()
    loss._consumed = True


# ----------------------------------------------------------------------------
# elementwise and structural ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def fn(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _make(ad * bd, (a, b), fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy's batching rules.

    The common case of a batched activation times a 2-D weight folds the
    batch into rows for the weight gradient.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}") from exc
    ad, bd = a.data, b.data

    def fn(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape)
        if b.requires_grad:
            if bd.ndim == 2:
                k, p = bd.shape
                gb = ad.reshape(-1, k).T @ g.reshape(-1, p)
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape)
        return ga, gb

    return _make(out, (a, b), fn)


def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def getitem(x: Tensor, index) -> Tensor:
    src_shape = x.shape

    def fn(g):
        full = np.zeros(src_shape)
        np.add.at(full, index, g)
        return (full,)

    return _make(x.data[index], (x,), fn)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return _make(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))


def broadcast_to(x: Tensor, shape) -> Tensor:
    src = x.shape
    return _make(np.broadcast_to(x.data, shape).copy(), (x,), lambda g: (_unbroadcast(g, src),))


def tensor_sum(x: Tensor, axis=None) -> Tensor:
    src = x.shape

    def fn(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return _make(np.asarray(x.data.sum(axis=axis)), (x,), fn)


def tensor_mean(x: Tensor, axis=None) -> Tensor:
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tensor_sum(x, axis), 1.0 / count)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: kept units are scaled by ``1/(1-p)``; identity in eval mode."""
    if not 0.0 <= p < 1.0:
        raise ConfigurationError(f"dropout probability must lie in [0, 1), got {p}", field="dropout")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in training mode needs an rng")
    scale = (rng.random(x.shape) >= p) / (1.0 - p)
    return _make(x.data * scale, (x,), lambda g: (g * scale,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax axis {axis} invalid for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def fn(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (x,), fn)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-8) -> Tensor:
    """Normalize over the last axis with population variance, then apply gain/bias."""
    if eps <= 0:
        raise ConfigurationError(f"layer_norm eps must be positive, got {eps}", field="eps")
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(
            f"layer_norm gain/bias shapes {gain.shape}/{bias.shape} do not match last dim {d}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    gd = gain.data

    def fn(g):
        gx = gg = gb = None
        lead = tuple(range(g.ndim - 1))
        if gain.requires_grad:
            gg = (g * xhat).sum(axis=lead)
        if bias.requires_grad:
            gb = g.sum(axis=lead)
        if x.requires_grad:
            gh = g * gd
            gx = inv_std * (
                gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
            )
        return gx, gg, gb

    return _make(xhat * gd + bias.data, (x, gain, bias), fn)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects (batch, classes) logits, got {logits.shape}")
    b, c = logits.shape
    if labels.shape != (b,):
        raise DimensionError(f"labels shape {labels.shape} does not match batch size {b}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise DataError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    labels = labels.astype(np.intp)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(b)
    loss = (lse - z[rows, labels]).mean()

    def fn(g):
        probs = np.exp(z - lse[:, None])
        probs[rows, labels] -= 1.0
        return (probs * (g / b),)

    return _make(np.asarray(loss), (logits,), fn)


# ----------------------------------------------------------------------------
# convolutions


def _check_odd_kernel(k: int) -> None:
    if k < 1 or k % 2 == 0:
        raise ConfigurationError(f"kernel size must be odd for same padding, got {k}", field="k")


def _windows(xp: np.ndarray, k: int, length: int) -> np.ndarray:
    # (..., C, L + k - 1) -> (..., C, L, k)
    return np.lib.stride_tricks.sliding_window_view(xp, k, axis=-1)[..., :length, :]


def conv1d_same(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Cross-correlation with zero same-padding.

    ``x`` is ``(..., Cin, L)``, ``weight`` is ``(Cout, Cin, k)`` with odd k,
    ``bias`` is ``(Cout,)``. Output is ``(..., Cout, L)``.
    """
    cout, cin, k = weight.shape
    _check_odd_kernel(k)
    if x.ndim < 2 or x.shape[-2] != cin:
        raise DimensionError(f"conv1d input {x.shape} does not match weight {weight.shape}")
    if bias.shape != (cout,):
        raise DimensionError(f"conv1d bias {bias.shape} does not match {cout} output channels")
    length = x.shape[-1]
    pad = (k - 1) // 2
    lead = x.shape[:-2]
    width = [(0, 0)] * (x.ndim - 1) + [(pad, pad)]
    cols = _windows(np.pad(x.data, width), k, length)
    # (M, L, Cin*k) @ (Cin*k, Cout)
    cols2 = np.moveaxis(cols, -3, -2).reshape(-1, length, cin * k)
    w2 = weight.data.reshape(cout, cin * k)
    out = np.matmul(cols2, w2.T) + bias.data
    out = np.swapaxes(out, -1, -2).reshape(lead + (cout, length))
    def fn(g):
        gx = gw = gb = None
        g2 = np.swapaxes(g.reshape(-1, cout, length), -1, -2)  # (M, L, Cout)
        if weight.requires_grad:
            gw = (g2.reshape(-1, cout).T @ cols2.reshape(-1, cin * k)).reshape(cout, cin, k)
        if bias.requires_grad:
            gb = g2.sum(axis=(0, 1))
        if x.requires_grad:
            gcols = (g2 @ w2).reshape(-1, length, cin, k)
            gxp = np.zeros(gcols.shape[:1] + (cin, length + 2 * pad))
            for j in range(k):
                gxp[:, :, j:j + length] += np.swapaxes(gcols[..., j], -1, -2)
            gx = gxp[:, :, pad:pad + length].reshape(x.shape)
        return gx, gw, gb

    return _make(out, (x, weight, bias), fn)


def complex_conv1d_same(
    x: Tensor, weight_re: Tensor, weight_im: Tensor, bias_re: Tensor, bias_im: Tensor
) -> Tensor:
    """Complex cross-correlation of one complex channel, same padding.

    ``x`` is ``(..., 2, L)`` holding the real (index 0) and imaginary
    (index 1) parts of the signal. Weights are ``(Cout, 1, k)`` and biases
    ``(Cout,)``. Output is ``(..., 2, Cout, L)`` with the real part at index 0
    and the imaginary part at index 1 of the second-to-last-but-one axis.

    The backward pass uses the complex adjoint: with ``G = dL/dRe + j dL/dIm``
    of the output, the weight gradient is ``G`` correlated with ``conj(z)`` and
    the input gradient is ``conj(W)`` convolved back onto ``G``.
    """
    cout, cin, k = weight_re.shape
    _check_odd_kernel(k)
    if cin != 1 or weight_im.shape != weight_re.shape:
        raise DimensionError(
            f"complex conv weights must both be (Cout, 1, k), got {weight_re.shape} and {weight_im.shape}"
        )
    if x.ndim < 2 or x.shape[-2] != 2:
        raise DimensionError(f"complex conv input must be (..., 2, L), got {x.shape}")
    if bias_re.shape != (cout,) or bias_im.shape != (cout,):
        raise DimensionError("complex conv biases must be (Cout,)")
    length = x.shape[-1]
    pad = (k - 1) // 2
    lead = x.shape[:-2]
    z = (x.data[..., 0, :] + 1j * x.data[..., 1, :]).reshape(-1, length)
    zp = np.pad(z, ((0, 0), (pad, pad)))
    cols = _windows(zp, k, length)  # (M, L, k)
    w = (weight_re.data + 1j * weight_im.data)[:, 0, :]  # (Cout, k)
    b = bias_re.data + 1j * bias_im.data
    y = np.einsum("mlk,ok->mol", cols, w) + b[:, None]
    out = np.stack([y.real, y.imag], axis=1).reshape(lead + (2, cout, length))

    def fn(g):
        g = g.reshape(-1, 2, cout, length)
        big_g = g[:, 0] + 1j * g[:, 1]  # (M, Cout, L)
        gx = gwr = gwi = gbr = gbi = None
        if weight_re.requires_grad or weight_im.requires_grad:
            gw = np.einsum("mol,mlk->ok", big_g, np.conj(cols))[:, None, :]
            gwr, gwi = gw.real.copy(), gw.imag.copy()
        if bias_re.requires_grad or bias_im.requires_grad:
            gb = big_g.sum(axis=(0, 2))
            gbr, gbi = gb.real.copy(), gb.imag.copy()
        if x.requires_grad:
            gcols = np.einsum("mol,ok->mlk", big_g, np.conj(w))
            gzp = np.zeros((gcols.shape[0], length + 2 * pad), dtype=complex)
            for j in range(k):
                gzp[:, j:j + length] += gcols[..., j]
            gz = gzp[:, pad:pad + length]
            gx = np.stack([gz.real, gz.imag], axis=1).reshape(x.shape)
        return gx, gwr, gwi, gbr, gbi

    return _make(out, (x, weight_re, weight_im, bias_re, bias_im), fn)
