"""Differentiable array primitives used by the operator networks."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, _lift

# -- contractions -----------------------------------------------------------


def _parse_einsum(spec, n):
    lhs, out = spec.replace(" ", "").split("->")
    subs = lhs.split(",")
    if len(subs) != n:
        raise ValueError(f"einsum spec {spec!r} expects {len(subs)} operands, got {n}")
    for s in subs + [out]:
        if len(set(s)) != len(s):
            raise ValueError("repeated indices within one operand are not supported")
    return subs, out


def einsum(spec, *operands):
    """``np.einsum`` with adjoints; complex operands are supported."""
    ts = [_lift(t) for t in operands]
    subs, out = _parse_einsum(spec, len(ts))
    data = np.einsum(spec, *[t.data for t in ts], optimize=True)

    def backward(g):
        grads = []
        for i, t in enumerate(ts):
            if not t.requires_grad:
                grads.append(None)
                continue
            others = [j for j in range(len(ts)) if j != i]
            avail = set(out).union(*[subs[j] for j in others])
            kept = "".join(c for c in subs[i] if c in avail)
            gspec = ",".join([out] + [subs[j] for j in others]) + "->" + kept
            gi = np.einsum(gspec, g, *[np.conj(ts[j].data) for j in others],
                           optimize=True)
            if kept != subs[i]:
                shape = [t.shape[k] if c in kept else 1 for k, c in enumerate(subs[i])]
                gi = np.broadcast_to(gi.reshape(shape), t.shape).copy()
            grads.append(gi)
        return grads

    return Tensor._make(data, tuple(ts), backward)


def linear(x, weight, bias=None, axis=-1):
    """Apply ``weight`` (out, in) along ``axis`` of ``x`` and add ``bias``.

    The transformed axis keeps its position in the output.
    """
    x = _lift(x)
    axis = axis % x.ndim
    letters = "abcdefghijklmnopqrstuvw"[: x.ndim]
    src = letters
    dst = letters[:axis] + "z" + letters[axis + 1:]
    y = einsum(f"{src},z{letters[axis]}->{dst}", x, weight)
    if bias is not None:
        shape = [1] * x.ndim
        shape[axis] = -1
        y = y + reshape_bias(bias, shape)
    return y


def reshape_bias(b, shape):
    from .tensor import reshape

    return reshape(_lift(b), tuple(shape))


# -- structural -------------------------------------------------------------


def pad(x, widths):
    """Zero padding; ``widths`` is a per-axis list of (before, after)."""
    x = _lift(x)
    widths = [tuple(w) for w in widths]
    if len(widths) != x.ndim:
        raise ValueError("pad widths must cover every axis")
    out = np.pad(x.data, widths)
    idx = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, x.shape))
    return Tensor._make(out, (x,), lambda g: (g[idx],))


def crop(x, axis, start, stop):
    """Slice one axis to ``[start, stop)`` (copying)."""
    x = _lift(x)
    idx = [slice(None)] * x.ndim
    idx[axis % x.ndim] = slice(start, stop)
    return x[tuple(idx)]


def concat(tensors, axis=-1):
    ts = [_lift(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in ts])

    def backward(g):
        grads = []
        for k in range(len(ts)):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(bounds[k], bounds[k + 1])
            grads.append(g[tuple(idx)])
        return grads

    return Tensor._make(out, tuple(ts), backward)


def broadcast_to(x, shape):
    from .tensor import unbroadcast

    x = _lift(x)
    return Tensor._make(np.broadcast_to(x.data, shape).copy(), (x,),
                        lambda g: (unbroadcast(g, x.shape),))


def as_complex(x):
    """Pair the trailing axis of size 2 as (real, imag)."""
    x = _lift(x)
    if x.shape[-1] != 2:
        raise ValueError("as_complex expects a trailing axis of size 2")
    out = x.data[..., 0] + 1j * x.data[..., 1]
    return Tensor._make(out, (x,), lambda g: (np.stack([g.real, g.imag], axis=-1),))


# -- spectral ---------------------------------------------------------------


def _axes(ndim, axes):
    return tuple(a % ndim for a in axes)


def rfft2(x, axes=(-3, -2)):
    """Unnormalized real-to-half-spectrum 2D DFT over ``axes``.

    The last of ``axes`` is stored with ``n // 2 + 1`` frequencies.
    """
    x = _lift(x)
    ax = _axes(x.ndim, axes)
    n0, n1 = x.shape[ax[0]], x.shape[ax[1]]
    out = np.fft.rfft2(x.data, axes=ax)

    def backward(g):
        full_shape = list(g.shape)
        full_shape[ax[1]] = n1
        full = np.zeros(full_shape, dtype=np.complex128)
        idx = [slice(None)] * g.ndim
        idx[ax[1]] = slice(0, g.shape[ax[1]])
        full[tuple(idx)] = g
        return (np.fft.ifft2(full, axes=ax).real * (n0 * n1),)

    return Tensor._make(out, (x,), backward)


def irfft2(X, shape, axes=(-3, -2)):
    """Inverse of :func:`rfft2` with the 1/(n0*n1) normalization."""
    X = _lift(X)
    ax = _axes(X.ndim, axes)
    n0, n1 = shape
    out = np.fft.irfft2(X.data, s=(n0, n1), axes=ax)
    m = X.shape[ax[1]]

    def backward(g):
        G = np.fft.rfft2(g, axes=ax) / (n0 * n1)
        w = np.full(m, 2.0)
        w[0] = 1.0
        if n1 % 2 == 0:
            w[n1 // 2] = 1.0
        shape_w = [1] * G.ndim
        shape_w[ax[1]] = m
        return (G * w.reshape(shape_w),)

    return Tensor._make(out, (X,), backward)


# -- convolution --------------------------------------------------------------
# Layout is channels-last: x (N, H, W, Cin), kernel (k, k, Cin, Cout).


def _conv_out(n, k, stride, padding):
    return (n + 2 * padding - k) // stride + 1


def _conv_forward(x, w, stride, padding):
    k = w.shape[0]
    N, H, W, _ = x.shape
    Ho, Wo = _conv_out(H, k, stride, padding), _conv_out(W, k, stride, padding)
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    out = np.zeros((N, Ho, Wo, w.shape[3]), dtype=np.result_type(x, w))
    for i in range(k):
        for j in range(k):
            patch = xp[:, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride, :]
            out += patch @ w[i, j]
    return out


def _conv_input_grad(g, w, x_shape, stride, padding):
    k = w.shape[0]
    N, H, W, C = x_shape
    Ho, Wo = g.shape[1], g.shape[2]
    gp = np.zeros((N, H + 2 * padding, W + 2 * padding, C), dtype=np.result_type(g, w))
    for i in range(k):
        for j in range(k):
            gp[:, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride, :] += (
                g @ w[i, j].T
            )
    return gp[:, padding:padding + H, padding:padding + W, :]


def _conv_weight_grad(x, g, w_shape, stride, padding):
    k = w_shape[0]
    Ho, Wo = g.shape[1], g.shape[2]
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    gw = np.zeros(w_shape, dtype=np.result_type(x, g))
    g2 = g.reshape(-1, g.shape[3])
    for i in range(k):
        for j in range(k):
            patch = xp[:, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride, :]
            gw[i, j] = patch.reshape(-1, patch.shape[3]).T @ g2
    return gw


def conv2d(x, weight, bias=None, stride=1, padding=None):
    """2D cross-correlation with zero padding (default ``k // 2``)."""
    x, weight = _lift(x), _lift(weight)
    k = weight.shape[0]
    if weight.shape[1] != k or weight.shape[2] != x.shape[3]:
        raise ValueError(f"kernel {weight.shape} incompatible with input {x.shape}")
    padding = k // 2 if padding is None else padding
    out = _conv_forward(x.data, weight.data, stride, padding)

    def backward(g):
        gx = _conv_input_grad(g, weight.data, x.shape, stride, padding) if x.requires_grad else None
        gw = _conv_weight_grad(x.data, g, weight.shape, stride, padding) if weight.requires_grad else None
        return gx, gw

    y = Tensor._make(out, (x, weight), backward)
    if bias is not None:
        y = y + bias
    return y


def conv_transpose2d(x, weight, bias=None, stride=2, padding=None, output_size=None):
    """Adjoint of :func:`conv2d` w.r.t. its input.

    ``weight`` has shape (k, k, Cout, Cin) so that it is the kernel of the
    strided convolution being transposed. ``output_size`` defaults to
    ``stride * (H, W)``.
    """
    x, weight = _lift(x), _lift(weight)
    k = weight.shape[0]
    if weight.shape[3] != x.shape[3]:
        raise ValueError(f"kernel {weight.shape} incompatible with input {x.shape}")
    padding = k // 2 if padding is None else padding
    N, H, W, _ = x.shape
    Ho, Wo = output_size if output_size is not None else (stride * H, stride * W)
    if _conv_out(Ho, k, stride, padding) != H or _conv_out(Wo, k, stride, padding) != W:
        raise ValueError(f"output size {(Ho, Wo)} inconsistent with input {(H, W)}")
    out_shape = (N, Ho, Wo, weight.shape[2])
    out = _conv_input_grad(x.data, weight.data, out_shape, stride, padding)

    def backward(g):
        gx = _conv_forward(g, weight.data, stride, padding) if x.requires_grad else None
        gw = _conv_weight_grad(g, x.data, weight.shape, stride, padding) if weight.requires_grad else None
        return gx, gw

    y = Tensor._make(out, (x, weight), backward)
    if bias is not None:
        y = y + bias
    return y


def real(z):
    z = _lift(z)
    return Tensor._make(z.data.real.copy(), (z,), lambda g: (g + 0j,))


def imag(z):
    z = _lift(z)
    return Tensor._make(z.data.imag.copy(), (z,), lambda g: (1j * g,))
