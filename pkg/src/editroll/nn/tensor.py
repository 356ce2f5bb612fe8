"""Minimal reverse-mode autodiff over numpy arrays.

Only the operations the U-Net needs, with hand-written backward rules:
same-padding convolution, batch norm, ReLU, 2x2 max pool, nearest
up-sampling, channel concat, dropout, cropping, and the uniform-target
KL loss head. All arithmetic runs in float64; gradients accumulate into
``Tensor.grad`` during :meth:`Tensor.backward`.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


class Tensor:
    """A node in the computation graph wrapping a float64 ndarray."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(
        self,
        data: np.ndarray,
        requires_grad: bool = False,
        parents: tuple[Tensor, ...] = (),
        backward_fn: Callable[[np.ndarray], None] | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward_fn = backward_fn

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64, copy=True)
        else:
            self.grad += grad

    def backward(self) -> None:
        """Reverse-topological sweep seeding d(self)/d(self) = 1."""
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)


def _node(data, parents, backward_fn) -> Tensor:
    if not any(p.requires_grad for p in parents):
        return Tensor(data)
    return Tensor(data, parents=parents, backward_fn=backward_fn)


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Same-padding stride-1 convolution. x: [N,C,H,W], w: [F,C,k,k], b: [F]."""
    k = w.shape[2]
    pad = k // 2
    n, c, h, wd = x.shape
    f = w.shape[0]

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    # [N,C,H,W,k,k] -> [N*H*W, C*k*k] so the contraction is one matmul
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * wd, c * k * k)
    wmat = w.data.reshape(f, c * k * k)
    out = (cols @ wmat.T).reshape(n, h, wd, f).transpose(0, 3, 1, 2) + b.data[None, :, None, None]

    def backward_fn(grad: np.ndarray) -> None:
        gmat = grad.transpose(0, 2, 3, 1).reshape(n * h * wd, f)
        if w.requires_grad:
            w._accumulate((gmat.T @ cols).reshape(f, c, k, k))
        if b.requires_grad:
            b._accumulate(grad.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gp = np.pad(grad, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
            gwin = np.lib.stride_tricks.sliding_window_view(gp, (k, k), axis=(2, 3))
            gcols = gwin.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * wd, f * k * k)
            wflip = w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c, f * k * k)
            dx = (gcols @ wflip.T).reshape(n, h, wd, c).transpose(0, 3, 1, 2)
            x._accumulate(dx)

    return _node(out, (x, w, b), backward_fn)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = x.data * mask

    def backward_fn(grad: np.ndarray) -> None:
        x._accumulate(grad * mask)

    return _node(out, (x,), backward_fn)


def max_pool2(x: Tensor) -> Tensor:
    """2x2 max pooling, stride 2. H and W must be even."""
    n, c, h, w = x.shape
    hh, wh = h // 2, w // 2
    windows = x.data.reshape(n, c, hh, 2, wh, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, hh, wh, 4)
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

    def backward_fn(grad: np.ndarray) -> None:
        dwin = np.zeros_like(windows)
        np.put_along_axis(dwin, idx[..., None], grad[..., None], axis=-1)
        dx = dwin.reshape(n, c, hh, wh, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        x._accumulate(dx)

    return _node(out, (x,), backward_fn)


def upsample2(x: Tensor) -> Tensor:
    """Nearest-neighbour x2 upsampling."""
    n, c, h, w = x.shape
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def backward_fn(grad: np.ndarray) -> None:
        dx = grad.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))
        x._accumulate(dx)

    return _node(out, (x,), backward_fn)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    ca = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def backward_fn(grad: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(grad[:, :ca])
        if b.requires_grad:
            b._accumulate(grad[:, ca:])

    return _node(out, (a, b), backward_fn)


def batch_norm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
    update_stats: bool = True,
) -> Tensor:
    """Per-channel batch norm over (N, H, W).

    Training mode normalizes with batch statistics and, when
    ``update_stats``, folds them into the running buffers in place.
    Inference normalizes with the running buffers.
    """
    if training:
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))  # biased, matches the backward below
        if update_stats:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mean
            running_var *= 1.0 - momentum
            running_var += momentum * var
    else:
        mean = running_mean
        var = running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def backward_fn(grad: np.ndarray) -> None:
        if gamma.requires_grad:
            gamma._accumulate((grad * xhat).sum(axis=(0, 2, 3)))
        if beta.requires_grad:
            beta._accumulate(grad.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gs = grad * gamma.data[None, :, None, None]
            if training:
                m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
                sum_gs = gs.sum(axis=(0, 2, 3), keepdims=True)
                sum_gs_xhat = (gs * xhat).sum(axis=(0, 2, 3), keepdims=True)
                dx = (inv_std[None, :, None, None] / m) * (m * gs - sum_gs - xhat * sum_gs_xhat)
            else:
                dx = gs * inv_std[None, :, None, None]
            x._accumulate(dx)

    return _node(out, (x, gamma, beta), backward_fn)


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or rate is zero."""
    if not training or rate <= 0.0:
        return x
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep
    out = x.data * mask

    def backward_fn(grad: np.ndarray) -> None:
        x._accumulate(grad * mask)

    return _node(out, (x,), backward_fn)


def crop2d(x: Tensor, h: int, w: int) -> Tensor:
    """Keep the top-left h x w window of the spatial dims."""
    out = x.data[:, :, :h, :w]

    def backward_fn(grad: np.ndarray) -> None:
        dx = np.zeros_like(x.data)
        dx[:, :, :h, :w] = grad
        x._accumulate(dx)

    return _node(out, (x,), backward_fn)


def log_softmax_grid(logits: np.ndarray) -> np.ndarray:
    """Numerically stable log-softmax over all cells of one 2-D grid."""
    flat = logits.reshape(-1)
    peak = flat.max()
    logz = peak + np.log(np.exp(flat - peak).sum())
    return (flat - logz).reshape(logits.shape)


def kl_uniform_batch(logits: Tensor, masses: np.ndarray) -> Tensor:
    """Mean over the batch of KL(U || softmax(logits per sample)).

    ``logits``: [N,1,H,W]; ``masses``: [N,H,W] rows summing to 1. The
    softmax runs over all H*W cells of each sample.
    """
    n = logits.shape[0]
    data = logits.data[:, 0]  # [N,H,W]
    flat = data.reshape(n, -1)
    peak = flat.max(axis=1, keepdims=True)
    logz = peak + np.log(np.exp(flat - peak).sum(axis=1, keepdims=True))
    logp = flat - logz

    mflat = masses.reshape(n, -1)
    support = mflat > 0
    # sum U (log U - log P); xlogx with 0 log 0 = 0
    u_logu = np.where(support, mflat * np.log(np.where(support, mflat, 1.0)), 0.0)
    value = (u_logu.sum(axis=1) - (mflat * logp).sum(axis=1)).mean()

    def backward_fn(grad: np.ndarray) -> None:
        probs = np.exp(logp)
        dflat = (probs - mflat) * (float(grad) / n)
        logits._accumulate(dflat.reshape(n, 1, *data.shape[1:]))

    return _node(np.asarray(value), (logits,), backward_fn)
