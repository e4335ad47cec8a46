"""Parameters and module containers."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .tensor import Tensor


class Parameter(Tensor):
    __slots__ = ("init_scheme",)

    def __init__(self, data, name=None, init_scheme="custom"):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self.init_scheme = init_scheme


def uniform_fan_in(rng, shape, fan_in):
    """U(-1/fan_in, 1/fan_in)."""
    bound = 1.0 / fan_in
    return Parameter(rng.uniform(-bound, bound, size=shape), init_scheme="uniform_fan_in")


def spectral_init(rng, shape, channels):
    """Complex spectral weights stored as (..., 2), scaled by 1/C^2."""
    scale = 1.0 / channels**2
    return Parameter(scale * rng.uniform(0.0, 1.0, size=shape), init_scheme="spectral")


class Module:
    """Container whose parameters enumerate in attribute-definition order."""

    def __init__(self):
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._params[key] = value
            self._modules.pop(key, None)
        elif isinstance(value, Module):
            self._modules[key] = value
            self._params.pop(key, None)
        object.__setattr__(self, key, value)

    def add_module(self, name, module):
        setattr(self, name, module)
        return module

    def named_parameters(self, prefix=""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_parameters(self):
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return OrderedDict((n, p.data.copy()) for n, p in self.named_parameters())

    def load_state_dict(self, state):
        own = OrderedDict(self.named_parameters())
        if list(own) != list(state):
            missing = set(own) ^ set(state)
            raise KeyError(f"parameter names differ: {sorted(missing)[:5]}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.shape}")
            p.data = arr.copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)
