"""Fourier-DeepONet and the merger variants."""

from __future__ import annotations

import numpy as np

from ..autograd import Module, concat, pad
from ..autograd.ops import broadcast_to
from .config import FdonConfig
from .layers import Dense, FourierLayer, Projection, as_tensor


def merge(b, t, mode):
    """Combine branch output (N, T, R, Cb) with trunk output (N, Ct)."""
    t = t.reshape((t.shape[0], 1, 1, t.shape[1]))
    if mode == "multiply":
        if b.shape[-1] != t.shape[-1]:
            raise ValueError("multiply merger needs equal channel counts")
        return b * t
    if mode == "add":
        if b.shape[-1] != t.shape[-1]:
            raise ValueError("add merger needs equal channel counts")
        return b + t
    if mode == "concat":
        tb = broadcast_to(t, (*b.shape[:3], t.shape[-1]))
        return concat([b, tb], axis=-1)
    raise ValueError(f"unknown merger {mode!r}")


class FourierDeepONet(Module):
    def __init__(self, config: FdonConfig, seed=0):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(seed)
        c = config
        self.branch = Dense(c.n_sources, c.branch_channels, rng, bias=c.branch_bias)
        self.trunk = Dense(c.xi_len, c.trunk_channels, rng, bias=c.trunk_bias)
        for i, ((t_in, t_out), kind) in enumerate(zip(c.layer_times, c.layer_kinds)):
            layer = FourierLayer(c.channels, c.modes, t_in, t_out, rng,
                                 use_unet=kind == "ufourier", unet_levels=c.unet_levels,
                                 k=c.kernel_size)
            self.add_module(f"layer{i + 1}", layer)
        self.projection = Projection(c.channels, c.projection_width, c.n_receivers, rng)

    @property
    def layers(self):
        return [getattr(self, f"layer{i + 1}") for i in range(4)]

    def branch_net(self, p):
        c = self.config
        p = as_tensor(p)
        if p.shape[1:] != (c.n_time, c.n_receivers, c.n_sources):
            raise ValueError(f"expected gather (N, {c.n_time}, {c.n_receivers}, {c.n_sources}), "
                             f"got {p.shape}")
        p = pad(p, [(0, 0), (0, 0), (0, c.receiver_pad), (0, 0)])
        return self.branch(p)

    def trunk_net(self, xi):
        xi = as_tensor(xi)
        if xi.ndim != 2 or xi.shape[1] != self.config.xi_len:
            raise ValueError(f"expected xi of shape (N, {self.config.xi_len}), got {xi.shape}")
        return self.trunk(xi)

    def forward(self, p, xi, return_intermediates=False):
        b = self.branch_net(p)
        t = self.trunk_net(xi)
        z = merge(b, t, self.config.merger)
        inter = {"branch": b, "trunk": t, "merger": z}
        for i, layer in enumerate(self.layers):
            z = layer(z)
            inter[f"layer{i + 1}"] = z
        out = self.projection(z)
        inter["projection"] = out
        return (out, inter) if return_intermediates else out


def stage_shapes(config: FdonConfig):
    """Expected per-sample output shapes for each stage."""
    c = config
    w = c.width
    times = [t_out for _, t_out in c.layer_times]
    return {
        "branch": (c.n_time, w, c.branch_channels),
        "trunk": (c.trunk_channels,),
        "merger": (c.n_time, w, c.channels),
        "layer1": (times[0], w, c.channels),
        "layer2": (times[1], w, c.channels),
        "layer3": (times[2], w, c.channels),
        "layer4": (times[3], w, c.channels),
        "projection": c.map_shape,
    }
