from .config import ConfigError, FdonConfig, VanillaConfig, reduced_config
from .fdon import FourierDeepONet, merge, stage_shapes
from .layers import FourierLayer, Projection, SpectralConv2d, UNet2d, spectral_conv
from .loss import velocity_loss
from .vanilla import VanillaDeepONet

__all__ = [
    "ConfigError",
    "FdonConfig",
    "FourierDeepONet",
    "FourierLayer",
    "Projection",
    "SpectralConv2d",
    "UNet2d",
    "VanillaConfig",
    "VanillaDeepONet",
    "merge",
    "reduced_config",
    "spectral_conv",
    "stage_shapes",
    "velocity_loss",
]
