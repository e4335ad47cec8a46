"""Building blocks of the merger net: spectral convolution, U-Net, Fourier layers."""

from __future__ import annotations

import numpy as np

from ..autograd import (
    Module,
    Tensor,
    as_complex,
    concat,
    conv2d,
    conv_transpose2d,
    einsum,
    irfft2,
    linear,
    pad,
    relu,
    rfft2,
)
from ..autograd.nn import spectral_init, uniform_fan_in
from .config import ConfigError


def spectral_conv(z, r_low, r_high, modes):
    """Mix channels on the retained low-frequency block of the 2D spectrum.

    ``z`` is (N, T, R, C). The half spectrum over (T, R) keeps rows
    ``[0, m1)`` (weights ``r_low``) and ``[T - m1, T)`` (weights ``r_high``)
    of the first ``m2`` columns; everything else is zeroed. Weights are
    complex, stored as real arrays of shape (m1, m2, C_in, C_out, 2).
    """
    m1, m2 = modes
    N, T, R, C = z.shape
    nf = R // 2 + 1
    if 2 * m1 > T or m2 > nf:
        raise ConfigError(f"modes {modes} overflow a ({T}, {R}) spectrum")
    X = rfft2(z, axes=(1, 2))
    low = einsum("ntrc,trcd->ntrd", X[:, :m1, :m2, :], as_complex(r_low))
    high = einsum("ntrc,trcd->ntrd", X[:, T - m1:, :m2, :], as_complex(r_high))
    low = pad(low, [(0, 0), (0, T - 2 * m1), (0, 0), (0, 0)])
    Y = concat([low, high], axis=1)
    Y = pad(Y, [(0, 0), (0, 0), (0, nf - m2), (0, 0)])
    return irfft2(Y, (T, R), axes=(1, 2))


class SpectralConv2d(Module):
    def __init__(self, channels, modes, rng):
        super().__init__()
        self.modes = tuple(modes)
        shape = (*self.modes, channels, channels, 2)
        self.r_low = spectral_init(rng, shape, channels)
        self.r_high = spectral_init(rng, shape, channels)

    def forward(self, z):
        return spectral_conv(z, self.r_low, self.r_high, self.modes)


class Dense(Module):
    """Linear map along one axis: weight (out, in), optional bias."""

    def __init__(self, n_in, n_out, rng, bias=True, axis=-1):
        super().__init__()
        self.axis = axis
        fan = max(n_in, 1)
        self.weight = uniform_fan_in(rng, (n_out, n_in), np.sqrt(fan))
        if bias:
            self.bias = uniform_fan_in(rng, (n_out,), np.sqrt(fan))
        else:
            self.bias = None

    def forward(self, x):
        return linear(x, self.weight, self.bias, axis=self.axis)


class Conv(Module):
    def __init__(self, c_in, c_out, k, rng, stride=1, transpose=False):
        super().__init__()
        self.stride = stride
        self.transpose = transpose
        fan = np.sqrt(c_in * k * k)
        shape = (k, k, c_out, c_in) if transpose else (k, k, c_in, c_out)
        self.weight = uniform_fan_in(rng, shape, fan)
        self.bias = uniform_fan_in(rng, (c_out,), fan)

    def forward(self, x, output_size=None):
        if self.transpose:
            return conv_transpose2d(x, self.weight, self.bias, stride=self.stride,
                                    output_size=output_size)
        return conv2d(x, self.weight, self.bias, stride=self.stride)


class UNet2d(Module):
    """Channel-preserving encoder-decoder over (T, R) with a top-level skip.

    Each level halves the extent with a stride-2 convolution (odd extents
    round up) and the decoder restores the exact input size with transposed
    convolutions.
    """

    def __init__(self, channels, rng, levels=2, k=3):
        super().__init__()
        self.levels = levels
        self.inc = Conv(channels, channels, k, rng)
        for i in range(levels):
            self.add_module(f"down{i}", Conv(channels, channels, k, rng, stride=2))
        for i in range(levels):
            self.add_module(f"up{i}", Conv(channels, channels, k, rng, stride=2, transpose=True))
        self.out = Conv(2 * channels, channels, k, rng)

    def forward(self, x):
        top = relu(self.inc(x))
        h = top
        sizes = []
        for i in range(self.levels):
            sizes.append(h.shape[1:3])
            h = relu(getattr(self, f"down{i}")(h))
        for i in range(self.levels):
            size = sizes[self.levels - 1 - i]
            h = getattr(self, f"up{i}")(h, output_size=size)
            if i < self.levels - 1:
                h = relu(h)
        return self.out(concat([h, top], axis=-1))


class FourierLayer(Module):
    """sigma(W'(spectral(z) [+ unet(z)] + W z + b)).

    W' is a bias-free linear map along the time axis, present only when the
    layer changes the time extent.
    """

    def __init__(self, channels, modes, t_in, t_out, rng, use_unet=False, unet_levels=2, k=3):
        super().__init__()
        self.t_in, self.t_out = t_in, t_out
        self.spectral = SpectralConv2d(channels, modes, rng)
        self.pointwise = Dense(channels, channels, rng, bias=True, axis=-1)
        if use_unet:
            self.unet = UNet2d(channels, rng, levels=unet_levels, k=k)
        else:
            self.unet = None
        if t_out != t_in:
            self.time_linear = Dense(t_in, t_out, rng, bias=False, axis=1)
        else:
            self.time_linear = None

    def preactivation(self, z):
        if z.shape[1] != self.t_in:
            raise ValueError(f"expected {self.t_in} time samples, got {z.shape[1]}")
        h = self.spectral(z) + self.pointwise(z)
        if self.unet is not None:
            h = h + self.unet(z)
        if self.time_linear is not None:
            h = self.time_linear(h)
        return h

    def forward(self, z):
        return relu(self.preactivation(z))


class Projection(Module):
    """Channel MLP C -> width -> 1, then crop the padded receiver columns."""

    def __init__(self, channels, width, n_receivers, rng):
        super().__init__()
        self.n_receivers = n_receivers
        self.fc1 = Dense(channels, width, rng)
        self.fc2 = Dense(width, 1, rng)

    def forward(self, z):
        h = self.fc2(relu(self.fc1(z)))
        h = h.reshape(h.shape[:-1])
        return h[:, :, : self.n_receivers]


def zero_parameters(module):
    for p in module.parameters():
        p.data[...] = 0.0


def as_tensor(x):
    """Wrap an array, keeping float32/float64 and casting anything else to float64."""
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return Tensor(arr)
