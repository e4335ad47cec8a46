"""Vanilla DeepONet baseline with an inner-product decoder.

The branch encodes the gather into ``latent`` coefficients; the trunk maps
(xi, pixel coordinate) to ``latent`` basis values; each output pixel is
their inner product plus a scalar bias.
"""

from __future__ import annotations

import numpy as np

from ..autograd import Module, Parameter, concat, einsum, relu
from .config import VanillaConfig
from .layers import Conv, Dense, as_tensor


class VanillaDeepONet(Module):
    def __init__(self, config: VanillaConfig, seed=0):
        super().__init__()
        self.config = config
        c = config
        rng = np.random.default_rng(seed)
        c_in = c.n_sources
        h, w = c.n_time, c.n_receivers
        for i, c_out in enumerate(c.conv_channels):
            self.add_module(f"conv{i}", Conv(c_in, c_out, c.kernel_size, rng, stride=2))
            c_in = c_out
            h, w = (h + 1) // 2, (w + 1) // 2
        self.flat_features = h * w * c_in
        self.fc1 = Dense(self.flat_features, c.branch_hidden, rng)
        self.fc2 = Dense(c.branch_hidden, c.latent, rng)
        widths = [c.xi_len + 2, *c.trunk_hidden, c.latent]
        for i in range(len(widths) - 1):
            self.add_module(f"trunk{i}", Dense(widths[i], widths[i + 1], rng))
        self.n_trunk = len(widths) - 1
        self.b0 = Parameter(np.zeros(1), init_scheme="zeros")

        H, W = c.map_shape
        zz, xx = np.meshgrid(np.linspace(-1, 1, H), np.linspace(-1, 1, W), indexing="ij")
        self._coords = np.stack([zz.ravel(), xx.ravel()], axis=-1)

    def branch_net(self, p):
        h = as_tensor(p)
        for i in range(len(self.config.conv_channels)):
            h = relu(getattr(self, f"conv{i}")(h))
        h = h.reshape((h.shape[0], -1))
        return self.fc2(relu(self.fc1(h)))

    def trunk_net(self, xi):
        xi = as_tensor(xi)
        n = xi.shape[0]
        P = self._coords.shape[0]
        coords = np.broadcast_to(self._coords, (n, P, 2))
        xi_rep = xi.reshape((n, 1, xi.shape[1])) * np.ones((1, P, 1))
        h = concat([xi_rep, coords], axis=-1)
        for i in range(self.n_trunk):
            h = getattr(self, f"trunk{i}")(h)
            if i < self.n_trunk - 1:
                h = relu(h)
        return h

    def forward(self, p, xi):
        b = self.branch_net(p)
        t = self.trunk_net(xi)
        out = einsum("nk,npk->np", b, t) + self.b0
        return out.reshape((out.shape[0], *self.config.map_shape))
