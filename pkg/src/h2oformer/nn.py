"""Parameter containers and seeded initialization."""

from __future__ import annotations

import math
import zlib

import numpy as np

from .numerics import Parameter
from .numerics.ops import BatchNormState


class Initializer:
    """Draws every parameter from its own stream keyed by ``(seed, name)``.

    Keying by name makes a parameter's initial value independent of which
    other modules exist, so ablation variants share their common weights.
    """

    def __init__(self, seed: int, dtype):
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)

    def rng(self, name: str) -> np.random.Generator:
        return np.random.default_rng([self.seed, zlib.crc32(name.encode("utf-8"))])

    def fan_in_uniform(self, name: str, shape, fan_in: int) -> np.ndarray:
        bound = math.sqrt(3.0 / fan_in)
        return self.rng(name).uniform(-bound, bound, size=shape).astype(self.dtype)

    def normal(self, name: str, shape, scale: float) -> np.ndarray:
        return (scale * self.rng(name).standard_normal(size=shape)).astype(self.dtype)

    def zeros(self, shape) -> np.ndarray:
        return np.zeros(shape, dtype=self.dtype)

    def ones(self, shape) -> np.ndarray:
        return np.ones(shape, dtype=self.dtype)


class Module:
    def __init__(self, prefix: str, init: Initializer):
        self.prefix = prefix
        self.init = init
        self.training = True
        self._params: dict[str, Parameter] = {}
        self._norms: dict[str, BatchNormState] = {}
        self._children: dict[str, Module] = {}

    def _full(self, key: str) -> str:
        return f"{self.prefix}.{key}" if self.prefix else key

    def weight(self, key: str, shape, fan_in: int | None = None) -> Parameter:
        name = self._full(key)
        fan_in = shape[0] if fan_in is None else fan_in
        return self._add(key, Parameter(self.init.fan_in_uniform(name, shape, fan_in), name))

    def bias(self, key: str, size: int) -> Parameter:
        return self._add(key, Parameter(self.init.zeros((size,)), self._full(key)))

    def noise(self, key: str, shape, scale: float) -> Parameter:
        name = self._full(key)
        return self._add(key, Parameter(self.init.normal(name, shape, scale), name))

    def norm(self, key: str, channels: int) -> tuple[Parameter, Parameter, BatchNormState]:
        gamma = self._add(f"{key}.gamma", Parameter(self.init.ones((channels,)), self._full(f"{key}.gamma")))
        beta = self._add(f"{key}.beta", Parameter(self.init.zeros((channels,)), self._full(f"{key}.beta")))
        state = BatchNormState(channels, self.init.dtype)
        self._norms[key] = state
        return gamma, beta, state

    def _add(self, key: str, p: Parameter) -> Parameter:
        if key in self._params:
            raise KeyError(f"duplicate parameter {p.name}")
        self._params[key] = p
        return p

    def child(self, key: str, module: "Module") -> "Module":
        self._children[key] = module
        return module

    def named_parameters(self) -> dict[str, Parameter]:
        out = {p.name: p for p in self._params.values()}
        for c in self._children.values():
            out.update(c.named_parameters())
        return out

    def parameters(self) -> list[Parameter]:
        return list(self.named_parameters().values())

    def named_norm_states(self) -> dict[str, BatchNormState]:
        out = {self._full(k): s for k, s in self._norms.items()}
        for c in self._children.values():
            out.update(c.named_norm_states())
        return out

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for c in self._children.values():
            c.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {name: p.data.copy() for name, p in self.named_parameters().items()}
        for name, s in self.named_norm_states().items():
            out[f"{name}.running_mean"] = s.mean.copy()
            out[f"{name}.running_var"] = s.var.copy()
        return out

    def load_state_dict(self, arrays: dict[str, np.ndarray]) -> None:
        expected = self.state_dict()
        missing = sorted(set(expected) - set(arrays))
        unexpected = sorted(set(arrays) - set(expected))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing {missing[:5]}, unexpected {unexpected[:5]}")
        for name, p in self.named_parameters().items():
            if arrays[name].shape != p.shape:
                raise ValueError(f"{name}: checkpoint shape {arrays[name].shape} != model shape {p.shape}")
            p.data = np.array(arrays[name], dtype=p.dtype, copy=True)
            p.zero_grad()
        for name, s in self.named_norm_states().items():
            s.mean = np.array(arrays[f"{name}.running_mean"], dtype=s.mean.dtype, copy=True)
            s.var = np.array(arrays[f"{name}.running_var"], dtype=s.var.dtype, copy=True)
