"""Module containers and the layers the networks are assembled from.

Every module can run ``forward`` on tensors and ``trace`` on bare shapes. The
trace pass mirrors forward without touching data and appends one
:class:`LayerRecord` per weighted layer, which is how parameters and MACs are
counted without allocating 256x256 feature maps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from . import ops
from .core import Tensor, default_dtype
from .random import RandomStream


@dataclass
class LayerRecord:
    name: str
    kind: str
    params: int
    macs: int
    out_shape: tuple


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Module):
            self._modules[name] = value
        elif isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    def add_module(self, name: str, module: "Module") -> None:
        setattr(self, name, module)

    # -- traversal
    def children(self) -> Iterator["Module"]:
        return iter(self._modules.values())

    def modules(self) -> Iterator["Module"]:
        yield self
        for m in self._modules.values():
            yield from m.modules()

    def named_parameters(self, prefix: str = "") -> Iterator[tuple]:
        for k, p in self._params.items():
            yield prefix + k, p
        for k, m in self._modules.items():
            yield from m.named_parameters(prefix + k + ".")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple]:
        for k, b in self._buffers.items():
            yield prefix + k, b
        for k, m in self._modules.items():
            yield from m.named_buffers(prefix + k + ".")

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    # -- state
    def state_dict(self) -> dict:
        out = {k: p.data.copy() for k, p in self.named_parameters()}
        out.update({k: b.copy() for k, b in self.named_buffers()})
        return out

    def load_state_dict(self, state: dict) -> None:
        targets = {k: p.data for k, p in self.named_parameters()}
        targets.update(dict(self.named_buffers()))
        missing = sorted(set(targets) - set(state))
        extra = sorted(set(state) - set(targets))
        if missing or extra:
            raise KeyError(f"state mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
        for k, dst in targets.items():
            src = np.asarray(state[k])
            if src.shape != dst.shape:
                raise ValueError(f"shape mismatch for {k}: stored {src.shape}, model {dst.shape}")
            dst[...] = src  # in place, so optimizer references stay valid

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            object.__setattr__(m, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def set_rng(self, rng: RandomStream) -> None:
        """Share one dropout stream across the whole tree (draw order = forward order)."""
        for m in self.modules():
            if isinstance(m, Dropout):
                m.rng = rng

    # -- compute
    def forward(self, *args):
        raise NotImplementedError

    def trace(self, shape: tuple, records: list, prefix: str = "") -> tuple:
        raise NotImplementedError(f"{type(self).__name__} has no trace")

    def __call__(self, *args):
        return self.forward(*args)


class Sequential(Module):
    def __init__(self, *layers: Module):
        super().__init__()
        for i, layer in enumerate(layers):
            self.add_module(str(i), layer)

    def __len__(self):
        return len(self._modules)

    def __getitem__(self, i):
        return list(self._modules.values())[i]

    def __iter__(self):
        return iter(self._modules.values())

    def forward(self, x):
        for layer in self._modules.values():
            x = layer(x)
        return x

    def trace(self, shape, records, prefix=""):
        for k, layer in self._modules.items():
            shape = layer.trace(shape, records, f"{prefix}{k}.")
        return shape


# ---------------------------------------------------------------- weighted layers

def kaiming_uniform(shape: tuple, fan_in: int, rng: RandomStream) -> np.ndarray:
    bound = math.sqrt(6.0 / max(fan_in, 1))
    return rng.uniform(-bound, bound, shape).astype(default_dtype())


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: RandomStream, stride: int = 1,
                 padding: Optional[int] = None, dilation: int = 1, bias: bool = True):
        super().__init__()
        if min(c_in, c_out, kernel) < 1:
            raise ValueError(f"invalid Conv2d({c_in}, {c_out}, {kernel})")
        self.c_in, self.c_out, self.kernel = c_in, c_out, kernel
        self.stride, self.dilation = stride, dilation
        # default keeps the spatial extent for odd kernels at stride 1
        self.padding = dilation * (kernel - 1) // 2 if padding is None else padding
        w = kaiming_uniform((c_out, c_in, kernel, kernel), c_in * kernel * kernel, rng)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(c_out, dtype=w.dtype), requires_grad=True) if bias else None

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.dilation)

    def out_shape(self, shape):
        n, c, h, w = shape
        if c != self.c_in:
            raise ValueError(f"Conv2d expects {self.c_in} channels, got shape {shape}")
        span = self.dilation * (self.kernel - 1) + 1
        ho = (h + 2 * self.padding - span) // self.stride + 1
        wo = (w + 2 * self.padding - span) // self.stride + 1
        return (n, self.c_out, ho, wo)

    def trace(self, shape, records, prefix=""):
        out = self.out_shape(shape)
        k2 = self.kernel * self.kernel
        params = k2 * self.c_in * self.c_out + (self.c_out if self.bias is not None else 0)
        macs = k2 * self.c_in * self.c_out * out[2] * out[3]
        records.append(LayerRecord(prefix.rstrip("."), f"conv{self.kernel}x{self.kernel}", params, macs, out))
        return out


class ConvTranspose2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: RandomStream, stride: int = 2,
                 padding: int = 0, bias: bool = True):
        super().__init__()
        self.c_in, self.c_out, self.kernel = c_in, c_out, kernel
        self.stride, self.padding = stride, padding
        # each output pixel sees about K^2/stride^2 taps per input channel
        fan_in = max(1, c_in * kernel * kernel // (stride * stride))
        w = kaiming_uniform((c_in, c_out, kernel, kernel), fan_in, rng)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(c_out, dtype=w.dtype), requires_grad=True) if bias else None

    def forward(self, x):
        return ops.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)

    def trace(self, shape, records, prefix=""):
        n, c, h, w = shape
        if c != self.c_in:
            raise ValueError(f"ConvTranspose2d expects {self.c_in} channels, got shape {shape}")
        out = (n, self.c_out, (h - 1) * self.stride - 2 * self.padding + self.kernel,
               (w - 1) * self.stride - 2 * self.padding + self.kernel)
        k2 = self.kernel * self.kernel
        params = k2 * self.c_in * self.c_out + (self.c_out if self.bias is not None else 0)
        # symmetric with conv: every input pixel is multiplied into a KxK patch for each channel pair
        macs = k2 * self.c_in * self.c_out * h * w
        records.append(LayerRecord(prefix.rstrip("."), f"tconv{self.kernel}x{self.kernel}", params, macs, out))
        return out


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.channels, self.momentum, self.eps = channels, momentum, eps
        dt = default_dtype()
        self.gamma = Tensor(np.ones(channels, dtype=dt), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dt), requires_grad=True)
        self.register_buffer("running_mean", np.zeros(channels, dtype=dt))
        self.register_buffer("running_var", np.ones(channels, dtype=dt))

    def forward(self, x):
        return ops.batch_norm2d(x, self.gamma, self.beta, self.running_mean, self.running_var,
                                self.training, self.momentum, self.eps)

    def trace(self, shape, records, prefix=""):
        if shape[1] != self.channels:
            raise ValueError(f"BatchNorm2d expects {self.channels} channels, got shape {shape}")
        records.append(LayerRecord(prefix.rstrip("."), "bn", 2 * self.channels, 0, shape))
        return shape


# ---------------------------------------------------------------- parameter-free layers

class ReLU(Module):
    def forward(self, x):
        return ops.relu(x)

    def trace(self, shape, records, prefix=""):
        return shape


class MaxPool2d(Module):
    def forward(self, x):
        return ops.max_pool2d(x)

    def trace(self, shape, records, prefix=""):
        n, c, h, w = shape
        if h % 2 or w % 2:
            raise ValueError(f"max pooling needs even extents, got {shape}")
        return (n, c, h // 2, w // 2)


class Upsample2x(Module):
    def forward(self, x):
        return ops.nearest_upsample2x(x)

    def trace(self, shape, records, prefix=""):
        n, c, h, w = shape
        return (n, c, 2 * h, 2 * w)


class Dropout(Module):
    def __init__(self, p: float):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1), got {p}")
        self.p = p
        self.rng: Optional[RandomStream] = None

    def forward(self, x):
        return ops.dropout(x, self.p, self.training, self.rng)

    def trace(self, shape, records, prefix=""):
        return shape


class ConvBNReLU(Sequential):
    def __init__(self, c_in, c_out, kernel, rng, dilation=1, relu=True):
        layers = [Conv2d(c_in, c_out, kernel, rng, dilation=dilation), BatchNorm2d(c_out)]
        if relu:
            layers.append(ReLU())
        super().__init__(*layers)


class TConvBNReLU(Sequential):
    """Stride-2 transposed conv that exactly doubles the extent (K=6, padding 2)."""

    def __init__(self, c_in, c_out, rng, kernel=6):
        if kernel % 2:
            raise ValueError("doubling transposed conv needs an even kernel")
        super().__init__(ConvTranspose2d(c_in, c_out, kernel, rng, stride=2, padding=(kernel - 2) // 2),
                         BatchNorm2d(c_out), ReLU())
