"""Structural tensor ops: convolution, pooling, resampling, concat, affine, loss.

All feature maps are N x C x H x W, row-major. Convolution and pooling share
the output-size rule out = floor((in + 2*pad - k) / stride) + 1. Max
reductions route gradient to the first maximal element in row-major order.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, ShapeError
from .tensor import Tensor, _as_tensor, _make


def _require_rank(x: Tensor, rank: int, what: str) -> None:
    if x.data.ndim != rank:
        raise ShapeError(f"{what} must have rank {rank}, got dims {x.dims}")


def conv_out_extent(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _im2col(x_np: np.ndarray, kh: int, kw: int, stride: int, padding: int):
    """Patch matrix in batched layout (N, C*kh*kw, Ho*Wo), filled tap by tap."""
    n, c, h, w = x_np.shape
    if padding:
        x_np = np.pad(x_np, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = conv_out_extent(h, kh, stride, padding)
    wo = conv_out_extent(w, kw, stride, padding)
    if kh == 1 and kw == 1 and stride == 1:
        return x_np.reshape(n, c, ho * wo), ho, wo
    buf = np.empty((n, c, kh, kw, ho, wo), dtype=x_np.dtype)
    for i in range(kh):
        for j in range(kw):
            buf[:, :, i, j] = x_np[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return buf.reshape(n, c * kh * kw, ho * wo), ho, wo


def _conv_input_grad(g: np.ndarray, kernel_np: np.ndarray, stride: int, padding: int,
                     h: int, w: int) -> np.ndarray:
    """Input gradient as a stride-1 correlation of the dilated, padded gradient
    with the spatially flipped kernel (channels swapped)."""
    n, cout, ho, wo = g.shape
    cin, kh, kw = kernel_np.shape[1], kernel_np.shape[2], kernel_np.shape[3]
    hp, wp = h + 2 * padding, w + 2 * padding
    if stride > 1:
        dilated = np.zeros((n, cout, (ho - 1) * stride + 1, (wo - 1) * stride + 1), dtype=g.dtype)
        dilated[:, :, ::stride, ::stride] = g
    else:
        dilated = g
    pad_h_tail = hp - 1 - (ho - 1) * stride
    pad_w_tail = wp - 1 - (wo - 1) * stride
    z = np.pad(dilated, ((0, 0), (0, 0), (kh - 1, pad_h_tail), (kw - 1, pad_w_tail)))
    kflip = np.ascontiguousarray(kernel_np.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    cols, zho, zwo = _im2col(z, kh, kw, 1, 0)
    dxp = np.matmul(kflip.reshape(cin, cout * kh * kw), cols).reshape(n, cin, zho, zwo)
    if padding:
        dxp = dxp[:, :, padding : padding + h, padding : padding + w]
    return np.ascontiguousarray(dxp)


def conv2d(x, kernel, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d cross-correlation with zero padding.

    x: N x Cin x H x W, kernel: Cout x Cin x kh x kw, bias: length-Cout vector.
    """
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    _require_rank(x, 4, "conv2d input")
    _require_rank(kernel, 4, "conv2d kernel")
    if stride < 1:
        raise ContractError(f"stride must be positive, got {stride}")
    if padding < 0:
        raise ContractError(f"padding must be non-negative, got {padding}")
    n, cin, h, w = x.dims
    cout, kcin, kh, kw = kernel.dims
    if kcin != cin:
        raise ShapeError(f"channel axis: kernel expects {kcin} input channels, input has {cin}")
    if kh > h + 2 * padding:
        raise ShapeError(f"height axis: kernel extent {kh} exceeds padded input {h + 2 * padding}")
    if kw > w + 2 * padding:
        raise ShapeError(f"width axis: kernel extent {kw} exceeds padded input {w + 2 * padding}")
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.dims != (cout,):
            raise ShapeError(f"bias axis: expected dims ({cout},), got {bias.dims}")

    cols, ho, wo = _im2col(x.data, kh, kw, stride, padding)
    kmat = kernel.data.reshape(cout, cin * kh * kw)
    out = np.matmul(kmat, cols)  # (N, Cout, Ho*Wo)
    if bias is not None:
        out += bias.data[:, None]
    out_data = out.reshape(n, cout, ho, wo)

    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def grad_fn(g):
        gr = g.reshape(n, cout, ho * wo)
        if kernel.requires_grad or kernel._grad_fn is not None:
            dk = np.matmul(gr, cols.transpose(0, 2, 1)).sum(axis=0)
            kernel._accumulate_owned(dk.reshape(kernel.dims))
        if bias is not None and (bias.requires_grad or bias._grad_fn is not None):
            bias._accumulate_owned(gr.sum(axis=(0, 2)))
        if x.requires_grad or x._grad_fn is not None:
            x._accumulate_owned(_conv_input_grad(g, kernel.data, stride, padding, h, w))

    return _make(out_data, parents, grad_fn)


def pool2d(x, kind: str, window: tuple[int, int], stride: int) -> Tensor:
    """Max or average pooling over window (kh, kw) with the given stride."""
    x = _as_tensor(x)
    _require_rank(x, 4, "pool2d input")
    if kind not in ("max", "avg"):
        raise ContractError(f"pool kind must be 'max' or 'avg', got {kind!r}")
    kh, kw = window
    n, c, h, w = x.dims
    if kh > h or kw > w:
        raise ShapeError(f"pool window {window} exceeds spatial dims {(h, w)}")
    if stride < 1:
        raise ContractError(f"stride must be positive, got {stride}")
    ho = conv_out_extent(h, kh, stride, 0)
    wo = conv_out_extent(w, kw, stride, 0)

    win = sliding_window_view(x.data, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = win.reshape(n, c, ho, wo, kh * kw)

    if kind == "avg":
        out_data = flat.mean(axis=-1)

        def grad_fn(g):
            share = g / (kh * kw)
            dx = np.zeros_like(x.data)
            for i in range(kh):
                for j in range(kw):
                    dx[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += share
            x._accumulate_owned(dx)

    else:
        # argmax over the flattened window is the first maximum in row-major order
        idx = flat.argmax(axis=-1)
        out_data = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

        def grad_fn(g):
            di, dj = np.divmod(idx, kw)
            oi = np.arange(ho)[:, None] * stride + di
            oj = np.arange(wo)[None, :] * stride + dj
            ni = np.arange(n)[:, None, None, None]
            ci = np.arange(c)[None, :, None, None]
            dx = np.zeros_like(x.data)
            # windows can overlap when stride < window, so accumulate
            np.add.at(dx, (ni, ci, oi, oj), g)
            x._accumulate_owned(dx)

    return _make(np.ascontiguousarray(out_data), (x,), grad_fn)


def channel_reduce(x, kind: str) -> Tensor:
    """Per-pixel max or mean across the channel axis, keeping a size-1 channel."""
    x = _as_tensor(x)
    _require_rank(x, 4, "channel_reduce input")
    if kind not in ("max", "avg"):
        raise ContractError(f"reduce kind must be 'max' or 'avg', got {kind!r}")
    c = x.dims[1]

    if kind == "avg":
        out_data = x.data.mean(axis=1, keepdims=True)

        def grad_fn(g):
            x._accumulate(np.broadcast_to(g / c, x.dims))

    else:
        idx = x.data.argmax(axis=1, keepdims=True)
        out_data = np.take_along_axis(x.data, idx, axis=1)

        def grad_fn(g):
            dx = np.zeros_like(x.data)
            np.put_along_axis(dx, idx, g, axis=1)
            x._accumulate_owned(dx)

    return _make(out_data, (x,), grad_fn)


def global_pool(x, kind: str) -> Tensor:
    """Reduce the whole spatial plane per channel to N x C x 1 x 1."""
    x = _as_tensor(x)
    _require_rank(x, 4, "global_pool input")
    if kind not in ("max", "avg"):
        raise ContractError(f"pool kind must be 'max' or 'avg', got {kind!r}")
    n, c, h, w = x.dims

    if kind == "avg":
        out_data = x.data.mean(axis=(2, 3), keepdims=True)

        def grad_fn(g):
            x._accumulate(np.broadcast_to(g / (h * w), x.dims))

    else:
        flat = x.data.reshape(n, c, h * w)
        idx = flat.argmax(axis=2)
        out_data = np.take_along_axis(flat, idx[..., None], axis=2).reshape(n, c, 1, 1)

        def grad_fn(g):
            dflat = np.zeros_like(flat)
            np.put_along_axis(dflat, idx[..., None], g.reshape(n, c, 1), axis=2)
            x._accumulate_owned(dflat.reshape(x.dims))

    return _make(out_data, (x,), grad_fn)


def _axis_gather_backward(g: np.ndarray, index: np.ndarray, src_extent: int, axis: int) -> np.ndarray:
    """Scatter-add a gathered axis back to its source extent."""
    gm = np.moveaxis(g, axis, 0)
    out = np.zeros((src_extent,) + gm.shape[1:], dtype=g.dtype)
    np.add.at(out, index, gm)
    return np.moveaxis(out, 0, axis)


def resample_spatial(x, target: tuple[int, int], mode: str) -> Tensor:
    """Nearest-neighbor upsampling or adaptive average downsampling to (H*, W*)."""
    x = _as_tensor(x)
    _require_rank(x, 4, "resample_spatial input")
    n, c, h, w = x.dims
    th, tw = target
    if th < 1 or tw < 1:
        raise ContractError(f"target dims must be positive, got {target}")

    if mode == "nearest_up":
        if th < h or tw < w:
            raise ContractError(f"nearest_up cannot shrink {h}x{w} to {th}x{tw}")
        ih = (np.arange(th) * h) // th
        iw = (np.arange(tw) * w) // tw
        out_data = np.ascontiguousarray(x.data[:, :, ih][:, :, :, iw])

        def grad_fn(g):
            dw = _axis_gather_backward(g, iw, w, axis=3)
            x._accumulate_owned(np.ascontiguousarray(_axis_gather_backward(dw, ih, h, axis=2)))

        return _make(out_data, (x,), grad_fn)

    if mode == "adaptive_avg_down":
        if th > h or tw > w:
            raise ContractError(f"adaptive_avg_down cannot grow {h}x{w} to {th}x{tw}")
        hb = _adaptive_bins(h, th)
        wb = _adaptive_bins(w, tw)
        # mean over a bin rectangle is separable: pool W first, then H
        tmp = np.empty((n, c, h, tw), dtype=x.dtype)
        for j, (s, e) in enumerate(wb):
            tmp[:, :, :, j] = x.data[:, :, :, s:e].mean(axis=3)
        out_data = np.empty((n, c, th, tw), dtype=x.dtype)
        for i, (s, e) in enumerate(hb):
            out_data[:, :, i, :] = tmp[:, :, s:e, :].mean(axis=2)

        def grad_fn(g):
            dtmp = np.zeros((n, c, h, tw), dtype=g.dtype)
            for i, (s, e) in enumerate(hb):
                dtmp[:, :, s:e, :] += g[:, :, i : i + 1, :] / (e - s)
            dx = np.zeros_like(x.data)
            for j, (s, e) in enumerate(wb):
                dx[:, :, :, s:e] += dtmp[:, :, :, j : j + 1] / (e - s)
            x._accumulate_owned(dx)

        return _make(out_data, (x,), grad_fn)

    raise ContractError(f"unknown resample mode {mode!r}")


def _adaptive_bins(src: int, dst: int) -> list[tuple[int, int]]:
    """Contiguous (possibly overlapping) bins [floor(i*src/dst), ceil((i+1)*src/dst))."""
    bins = []
    for i in range(dst):
        start = (i * src) // dst
        end = -((-(i + 1) * src) // dst)
        bins.append((start, end))
    return bins


def concat_channels(parts) -> Tensor:
    """Concatenate feature maps along the channel axis."""
    parts = [_as_tensor(p) for p in parts]
    if len(parts) < 2:
        raise ContractError(f"concat_channels needs at least 2 parts, got {len(parts)}")
    for p in parts:
        _require_rank(p, 4, "concat_channels part")
    ref = parts[0].dims
    for k, p in enumerate(parts[1:], start=1):
        if (p.dims[0],) + p.dims[2:] != (ref[0],) + ref[2:]:
            raise ShapeError(f"part {k}: non-channel dims {p.dims} mismatch part 0 dims {ref}")
    out_data = np.concatenate([p.data for p in parts], axis=1)
    offsets = np.cumsum([0] + [p.dims[1] for p in parts])

    def grad_fn(g):
        for p, s, e in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad or p._grad_fn is not None:
                p._accumulate(g[:, s:e])

    return _make(out_data, tuple(parts), grad_fn)


def linear(x, weight, bias=None) -> Tensor:
    """Affine map: (N x D) @ (D x K) + bias."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    _require_rank(x, 2, "linear input")
    _require_rank(weight, 2, "linear weight")
    n, d = x.dims
    dw, k = weight.dims
    if d != dw:
        raise ShapeError(f"inner axis: input has {d} features, weight expects {dw}")
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.dims != (k,):
            raise ShapeError(f"bias axis: expected dims ({k},), got {bias.dims}")
    out = x.data @ weight.data
    if bias is not None:
        out = out + bias.data

    parents = (x, weight) if bias is None else (x, weight, bias)

    def grad_fn(g):
        if x.requires_grad or x._grad_fn is not None:
            x._accumulate_owned(g @ weight.data.T)
        if weight.requires_grad or weight._grad_fn is not None:
            weight._accumulate_owned(x.data.T @ g)
        if bias is not None and (bias.requires_grad or bias._grad_fn is not None):
            bias._accumulate_owned(g.sum(axis=0))

    return _make(out, parents, grad_fn)


def softmax_cross_entropy(logits, target_probs) -> Tensor:
    """Mean over the batch of -sum(target * log softmax(logits)), max-stabilized.

    Target rows must sum to 1 (one-hot or mixup-mixed distributions).
    """
    logits = _as_tensor(logits)
    _require_rank(logits, 2, "logits")
    t = target_probs.data if isinstance(target_probs, Tensor) else np.asarray(target_probs)
    if t.shape != logits.dims:
        raise ShapeError(f"target dims {t.shape} mismatch logits dims {logits.dims}")
    row_sums = t.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-6):
        bad = int(np.argmax(np.abs(row_sums - 1.0)))
        raise ContractError(f"target row {bad} sums to {row_sums[bad]!r}, expected 1 within 1e-6")

    n = logits.dims[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - lse
    loss = np.asarray(-(t * log_probs).sum() / n)
    softmax = np.exp(log_probs)

    def grad_fn(g):
        logits._accumulate_owned(g * (softmax - t) / n)

    return _make(loss, (logits,), grad_fn)
