"""Training loss on normalized velocity maps."""

from __future__ import annotations

from ..autograd import Tensor, mean, square, tabs
from .layers import as_tensor


def velocity_loss(c_hat, c_true, lam1=1.0, lam2=1.0):
    """``lam1 * MAE + lam2 * MSE``."""
    c_hat = as_tensor(c_hat)
    c_true = c_true.data if isinstance(c_true, Tensor) else c_true
    if tuple(c_hat.shape) != tuple(c_true.shape):
        raise ValueError(f"shape mismatch: {c_hat.shape} vs {c_true.shape}")
    d = c_hat - Tensor(c_true)
    return mean(tabs(d)) * lam1 + mean(square(d)) * lam2
