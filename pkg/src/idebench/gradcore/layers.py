"""Layer functions built on the tape: dense, LeakyReLU, LSTM cell, strided conv."""

from __future__ import annotations

import numpy as np

from .. import kernels
from .errors import DimensionError
from .params import ParamSet
from .rng import Rng
from .tensor import Tensor, as_tensor


def linear_forward(W: Tensor, b: Tensor, x: Tensor) -> Tensor:
    """``y = W x + b`` for ``x`` of shape ``[in]`` or a batch ``[n, in]``."""
    W, b, x = as_tensor(W), as_tensor(b), as_tensor(x)
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1] != W.shape[1]:
        raise DimensionError(f"linear: W{W.shape}, b{b.shape}, x{x.shape}")
    if x.ndim == 1:
        return W @ x + b
    return x @ W.T + b


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ValueError("slope must lie in (0, 1)")
    return as_tensor(x).leaky_relu(slope)


def add_dense(params: ParamSet, prefix: str, n_in: int, n_out: int, rng: Rng) -> None:
    params.add_uniform(f"{prefix}.W", (n_out, n_in), rng)
    params.add_uniform(f"{prefix}.b", (n_out,), rng)


def dense(params: ParamSet, prefix: str, x: Tensor) -> Tensor:
    return linear_forward(params[f"{prefix}.W"], params[f"{prefix}.b"], x)


# -- LSTM ------------------------------------------------------------------------

def add_lstm(params: ParamSet, prefix: str, n_in: int, hidden: int, rng: Rng) -> None:
    params.add_uniform(f"{prefix}.Wx", (4 * hidden, n_in), rng)
    params.add_uniform(f"{prefix}.Wh", (4 * hidden, hidden), rng)
    params.add_uniform(f"{prefix}.b", (4 * hidden,), rng)


def lstm_step(state: tuple[Tensor, Tensor], x: Tensor, weights, prefix: str = "lstm"
              ) -> tuple[Tensor, Tensor]:
    """One standard LSTM cell update.

    ``weights`` holds ``{prefix}.Wx [4h, in]``, ``{prefix}.Wh [4h, h]`` and
    ``{prefix}.b [4h]``; gate blocks are ordered input, forget, candidate,
    output. Works on single vectors or batches (leading axis).
    """
    h, c = state
    Wx, Wh, b = weights[f"{prefix}.Wx"], weights[f"{prefix}.Wh"], weights[f"{prefix}.b"]
    hid = Wh.shape[1]
    x, h, c = as_tensor(x), as_tensor(h), as_tensor(c)
    if x.shape[-1] != Wx.shape[1] or h.shape[-1] != hid or c.shape != h.shape:
        raise DimensionError(f"lstm: x{x.shape}, h{h.shape}, c{c.shape}, Wx{Wx.shape}")
    z = linear_forward(Wx, b, x) + (h @ Wh.T if h.ndim == 2 else Wh @ h)
    i = z[..., 0:hid].sigmoid()
    f = z[..., hid:2 * hid].sigmoid()
    g = z[..., 2 * hid:3 * hid].tanh()
    o = z[..., 3 * hid:4 * hid].sigmoid()
    c_new = f * c + i * g
    h_new = o * c_new.tanh()
    return h_new, c_new


# -- convolutions (NCHW) ---------------------------------------------------------

def conv2d(x: Tensor, W: Tensor, b: Tensor, stride: int = 2, pad: int = 1) -> Tensor:
    """Direct correlation. ``x [N, C, H, W]``, ``W [O, C, k, k]`` -> ``[N, O, OH, OW]``."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    n, c, h, w = x.shape
    o, c2, k, _ = W.shape
    if c != c2:
        raise DimensionError(f"conv2d: input channels {c} vs kernel {c2}")
    cols = kernels.im2col(x.data, k, stride, pad)
    _, oh, ow, ck = cols.shape
    flat = cols.reshape(-1, ck)
    Wf = W.data.reshape(o, ck)
    out = (flat @ Wf.T + b.data).reshape(n, oh, ow, o).transpose(0, 3, 1, 2)

    def back(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, o)
        if W.requires_grad:
            W.grad += (g2.T @ flat).reshape(W.shape)
        if b.requires_grad:
            b.grad += g2.sum(axis=0)
        if x.requires_grad:
            dcols = (g2 @ Wf).reshape(n, oh, ow, ck)
            x.grad += kernels.col2im(dcols, c, h, w, k, stride, pad)
    return Tensor._make(np.ascontiguousarray(out), (x, W, b), back)


def conv_transpose2d(x: Tensor, W: Tensor, b: Tensor, stride: int = 2, pad: int = 1) -> Tensor:
    """Transpose of :func:`conv2d`. ``x [N, Cin, H, W]``, ``W [Cin, Cout, k, k]``.

    Output spatial size is ``(H - 1) * stride - 2 * pad + k``.
    """
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    n, cin, h, w = x.shape
    cin2, cout, k, _ = W.shape
    if cin != cin2:
        raise DimensionError(f"conv_transpose2d: input channels {cin} vs kernel {cin2}")
    oh = (h - 1) * stride - 2 * pad + k
    ow = (w - 1) * stride - 2 * pad + k
    xf = x.data.transpose(0, 2, 3, 1).reshape(-1, cin)
    Wf = W.data.reshape(cin, cout * k * k)
    cols = (xf @ Wf).reshape(n, h, w, cout * k * k)
    out = kernels.col2im(cols, cout, oh, ow, k, stride, pad) + b.data[None, :, None, None]

    def back(g):
        if b.requires_grad:
            b.grad += g.sum(axis=(0, 2, 3))
        dcols = kernels.im2col(np.ascontiguousarray(g), k, stride, pad).reshape(-1, cout * k * k)
        if W.requires_grad:
            W.grad += (xf.T @ dcols).reshape(W.shape)
        if x.requires_grad:
            x.grad += (dcols @ Wf.T).reshape(n, h, w, cin).transpose(0, 3, 1, 2)
    return Tensor._make(out, (x, W, b), back)


# -- finite-difference oracle ---------------------------------------------------

def grad_check(f, params: ParamSet, eps: float = 1e-5) -> float:
    """Max relative error between ``backward()`` and central differences.

    ``f`` is a zero-argument callable returning a scalar Tensor built from
    ``params``. Relative error per coordinate is
    ``|a - n| / max(1e-8, |a| + |n|)``.
    """
    params.zero_grad()
    loss = f()
    loss.backward()
    analytic = {k: p.grad.copy() for k, p in params.items()}
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = f().item()
            flat[i] = orig - eps
            down = f().item()
            flat[i] = orig
            num = (up - down) / (2 * eps)
            a = analytic[name].reshape(-1)[i]
            err = abs(a - num) / max(1e-8, abs(a) + abs(num))
            worst = max(worst, err)
    params.zero_grad()
    return worst
