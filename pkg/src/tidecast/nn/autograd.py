"""Tape-based reverse-mode autodiff over float64 numpy arrays.

Small on purpose: only the operations the encoder and denoiser need. Values
are immutable once wrapped; backward() walks the DAG in reverse topological
order and accumulates into .grad. Gradients flow only through nodes reachable
from a Tensor with requires_grad, so constants cost nothing.
"""

from __future__ import annotations

import numpy as np

from tidecast.nn import kernels


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # -- graph construction ------------------------------------------------

    @staticmethod
    def _node(data: np.ndarray, parents: tuple["Tensor", ...], backward) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    def backward(self) -> None:
        """Accumulate gradients of this (scalar or array seeded with ones)."""
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)
                # free intermediate grads/graph as we go
                node._backward = None
                node._parents = ()

    def _accumulate(self, grad: np.ndarray) -> None:
        self.grad = grad if self.grad is None else self.grad + grad

    # -- elementwise -------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out_data = self.data + other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        return Tensor._node(out_data, (self, other), backward)

    __radd__ = __add__

    def __mul__(self, other):
        other = as_tensor(other)
        out_data = self.data * other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        return Tensor._node(out_data, (self, other), backward)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __truediv__(self, other):
        other = as_tensor(other)
        return self * other ** (-1.0)

    def __pow__(self, exponent: float):
        exponent = float(exponent)
        out_data = self.data**exponent

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * exponent * self.data ** (exponent - 1.0))

        return Tensor._node(out_data, (self,), backward)

    def sqrt(self):
        return self**0.5

    # -- shape -------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        in_shape = self.data.shape
        out_data = self.data.reshape(shape)

        def backward(g):
            if self.requires_grad:
                self._accumulate(g.reshape(in_shape))

        return Tensor._node(out_data, (self,), backward)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = tuple(int(i) for i in np.argsort(axes))
        out_data = np.ascontiguousarray(self.data.transpose(axes))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g.transpose(inverse))

        return Tensor._node(out_data, (self,), backward)

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        in_shape = self.data.shape
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if not self.requires_grad:
                return
            if axis is None:
                self._accumulate(np.broadcast_to(g, in_shape).copy())
                return
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            if not keepdims:
                g = np.expand_dims(g, tuple(a % len(in_shape) for a in axes))
            self._accumulate(np.broadcast_to(g, in_shape).copy())

        return Tensor._node(out_data, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = int(np.prod([self.data.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- matmul --------------------------------------------------------------

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        out_data = a @ b

        def backward(g):
            if self.requires_grad:
                if b.ndim == 2 and a.ndim > 2:
                    ga = g @ b.T
                elif b.ndim == a.ndim:
                    ga = g @ np.swapaxes(b, -1, -2)
                else:
                    raise NotImplementedError(f"matmul backward for {a.shape} @ {b.shape}")
                self._accumulate(_unbroadcast(ga, a.shape))
            if other.requires_grad:
                if a.ndim == 2 and b.ndim == 2:
                    gb = a.T @ g
                elif b.ndim == 2:
                    k = a.shape[-1]
                    gb = a.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
                elif b.ndim == a.ndim:
                    gb = np.swapaxes(a, -1, -2) @ g
                else:
                    raise NotImplementedError(f"matmul backward for {a.shape} @ {b.shape}")
                other._accumulate(_unbroadcast(gb, b.shape))

        return Tensor._node(out_data, (self, other), backward)

    # -- nonlinearities --------------------------------------------------------

    def silu(self):
        sig = 1.0 / (1.0 + np.exp(-self.data))
        out_data = self.data * sig

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * (sig * (1.0 + self.data * (1.0 - sig))))

        return Tensor._node(out_data, (self,), backward)

    def softmax(self):
        """Softmax over the last axis."""
        shifted = self.data - self.data.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=-1, keepdims=True)

        def backward(g):
            if self.requires_grad:
                inner = (g * y).sum(axis=-1, keepdims=True)
                self._accumulate((g - inner) * y)

        return Tensor._node(y, (self,), backward)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def take(t: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows of a 1-D tensor; backward scatter-adds (duplicates allowed)."""
    indices = np.asarray(indices, dtype=np.int64)
    out_data = t.data[indices]

    def backward(g):
        if t.requires_grad:
            grad = np.zeros_like(t.data)
            np.add.at(grad, indices, g)
            t._accumulate(grad)

    return Tensor._node(out_data, (t,), backward)


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t._accumulate(np.ascontiguousarray(g[tuple(index)]))

    return Tensor._node(out_data, tuple(tensors), backward)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, pad: int | None = None) -> Tensor:
    """Stride-1 2-D convolution with symmetric zero padding (default: same).

    x: (B, Cin, H, W); weight: (Cout, Cin, k, k); bias: (Cout,).
    """
    cout, cin, k, _ = weight.data.shape
    b, cx, h, w = x.data.shape
    if cx != cin:
        raise ValueError(f"conv2d channel mismatch: input {cx}, weight expects {cin}")
    if pad is None:
        pad = k // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = kernels.im2col(xp, k)  # (B, Ho*Wo, Cin*k*k)
    ho, wo = h + 2 * pad - k + 1, w + 2 * pad - k + 1
    wmat = weight.data.reshape(cout, cin * k * k)
    out = cols @ wmat.T + bias.data
    out_data = np.ascontiguousarray(out.reshape(b, ho, wo, cout).transpose(0, 3, 1, 2))

    def backward(g):
        gm = g.transpose(0, 2, 3, 1).reshape(b, ho * wo, cout)
        if bias.requires_grad:
            bias._accumulate(gm.sum(axis=(0, 1)))
        if weight.requires_grad:
            gw = gm.reshape(-1, cout).T @ cols.reshape(-1, cin * k * k)
            weight._accumulate(gw.reshape(cout, cin, k, k))
        if x.requires_grad:
            gcols = gm @ wmat
            gxp = kernels.col2im(gcols, cin, h + 2 * pad, w + 2 * pad, k)
            if pad:
                gxp = gxp[:, :, pad:-pad, pad:-pad]
            x._accumulate(np.ascontiguousarray(gxp))

    return Tensor._node(out_data, (x, weight, bias), backward)


def adaptive_avg_pool(x: Tensor, out_size: int) -> Tensor:
    """Average-pool (B, C, H, W) onto an out_size x out_size grid.

    Segment boundaries follow floor(i * H / out), so uneven sizes are allowed.
    """
    b, c, h, w = x.data.shape
    rb = [(i * h) // out_size for i in range(out_size + 1)]
    cb = [(j * w) // out_size for j in range(out_size + 1)]
    out_data = np.empty((b, c, out_size, out_size))
    for i in range(out_size):
        for j in range(out_size):
            out_data[:, :, i, j] = x.data[:, :, rb[i] : rb[i + 1], cb[j] : cb[j + 1]].mean(
                axis=(2, 3)
            )

    def backward(g):
        if not x.requires_grad:
            return
        gx = np.zeros_like(x.data)
        for i in range(out_size):
            for j in range(out_size):
                area = (rb[i + 1] - rb[i]) * (cb[j + 1] - cb[j])
                gx[:, :, rb[i] : rb[i + 1], cb[j] : cb[j + 1]] = (
                    g[:, :, i : i + 1, j : j + 1] / area
                )
        x._accumulate(gx)

    return Tensor._node(out_data, (x,), backward)


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 average pooling; spatial dims must be even."""
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"avg_pool2 needs even spatial dims, got {h}x{w}")
    return x.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


_UP2 = np.ones((1, 1, 1, 2, 1, 2))


def upsample2(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling."""
    b, c, h, w = x.shape
    return (x.reshape(b, c, h, 1, w, 1) * Tensor(_UP2)).reshape(b, c, 2 * h, 2 * w)
