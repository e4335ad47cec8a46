from __future__ import annotations

from dataclasses import asdict, dataclass

MERGERS = ("multiply", "add", "concat")
LAYER_MIXES = ("F1U3", "F4", "U4")


class ConfigError(ValueError):
    pass


@dataclass
class FdonConfig:
    """Fourier-DeepONet hyperparameters.

    ``time_reduction`` lists the time extent entering the merger net followed
    by the output extents of layers 2..4; the first layer keeps the time
    extent unchanged. Its last entry is the depth of the output map.
    """

    n_time: int = 1000
    n_receivers: int = 70
    n_sources: int = 5
    receiver_pad: int = 2
    channels: int = 64
    modes: tuple = (24, 24)
    merger: str = "multiply"
    concat_split: tuple = (48, 16)
    layer_mix: str = "F1U3"
    time_reduction: tuple = (1000, 512, 256, 70)
    xi_len: int = 1
    projection_width: int = 128
    unet_levels: int = 2
    kernel_size: int = 3
    trunk_bias: bool = True
    branch_bias: bool = True

    def __post_init__(self):
        self.modes = tuple(int(m) for m in self.modes)
        self.concat_split = tuple(int(c) for c in self.concat_split)
        self.time_reduction = tuple(int(t) for t in self.time_reduction)
        self.validate()

    @property
    def width(self):
        return self.n_receivers + self.receiver_pad

    @property
    def layer_times(self):
        """(t_in, t_out) of each of the four merger-net layers."""
        outs = [self.n_time] + list(self.time_reduction[1:])
        ins = [self.n_time] + outs[:-1]
        return list(zip(ins, outs))

    @property
    def layer_kinds(self):
        return {"F1U3": ["fourier"] + ["ufourier"] * 3,
                "F4": ["fourier"] * 4,
                "U4": ["ufourier"] * 4}[self.layer_mix]

    @property
    def map_shape(self):
        return (self.time_reduction[-1], self.n_receivers)

    @property
    def branch_channels(self):
        return self.concat_split[0] if self.merger == "concat" else self.channels

    @property
    def trunk_channels(self):
        return self.concat_split[1] if self.merger == "concat" else self.channels

    def validate(self):
        if self.merger not in MERGERS:
            raise ConfigError(f"merger must be one of {MERGERS}")
        if self.layer_mix not in LAYER_MIXES:
            raise ConfigError(f"layer_mix must be one of {LAYER_MIXES}")
        if self.merger == "concat" and sum(self.concat_split) != self.channels:
            raise ConfigError(f"concat split {self.concat_split} must sum to {self.channels}")
        if len(self.time_reduction) != 4 or self.time_reduction[0] != self.n_time:
            raise ConfigError("time_reduction must be (n_time, t2, t3, t4)")
        if self.xi_len < 0 or self.receiver_pad < 0:
            raise ConfigError("xi_len and receiver_pad must be non-negative")
        m1, m2 = self.modes
        if m1 < 1 or m2 < 1:
            raise ConfigError("modes must be positive")
        if m2 > self.width // 2 + 1:
            raise ConfigError(f"m2={m2} exceeds {self.width // 2 + 1} receiver frequencies")
        for t_in, _ in self.layer_times:
            if 2 * m1 > t_in:
                raise ConfigError(f"m1={m1} overflows a layer with {t_in} time samples")
        min_extent = 2 ** self.unet_levels
        if "ufourier" in self.layer_kinds:
            for (t_in, _), kind in zip(self.layer_times, self.layer_kinds):
                if kind == "ufourier" and min(t_in, self.width) < min_extent:
                    raise ConfigError("spatial extent too small for the U-Net depth")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class VanillaConfig:
    """Vanilla DeepONet: convolutional branch, MLP trunk over (xi, pixel coords)."""

    n_time: int = 1000
    n_receivers: int = 70
    n_sources: int = 5
    map_shape: tuple = (70, 70)
    conv_channels: tuple = (32, 64, 128, 128)
    branch_hidden: int = 672
    latent: int = 512
    trunk_hidden: tuple = (128, 128)
    xi_len: int = 1
    kernel_size: int = 3

    def __post_init__(self):
        self.map_shape = tuple(int(v) for v in self.map_shape)
        self.conv_channels = tuple(int(v) for v in self.conv_channels)
        self.trunk_hidden = tuple(int(v) for v in self.trunk_hidden)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def reduced_config(**overrides):
    """Small configuration used for gradient checks and toy training."""
    base = dict(n_time=40, n_receivers=12, receiver_pad=2, channels=8, modes=(4, 4),
                time_reduction=(40, 24, 16, 12), projection_width=16, xi_len=1)
    base.update(overrides)
    return FdonConfig(**base)

