"""Network building blocks on top of the autodiff ops.

Layers own Parameter tensors (He-uniform initialized from a caller-supplied
Generator) and describe themselves via LayerSpec for checkpoint manifests.
BatchNorm1d is composed from primitive ops so its gradients come for free;
it normalizes with the population variance (divide by N) and keeps float32
running statistics updated only on train-mode calls.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError


@dataclass
class LayerSpec:
    """Serializable description of one layer: kind plus its hyperparameters."""

    kind: str
    params: dict[str, Any] = field(default_factory=dict)


class Parameter(Tensor):
    """Trainable tensor; always requires grad."""

    __slots__ = ()

    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Minimal layer interface; stateless layers override only forward."""

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        raise NotImplementedError

    def __call__(self, x: Tensor, train: bool = False) -> Tensor:
        return self.forward(x, train=train)

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        return []

    def named_state(self, prefix: str = "") -> list[tuple[str, np.ndarray]]:
        return []

    def spec(self) -> LayerSpec:
        return LayerSpec(kind=type(self).__name__)


class Dense(Layer):
    """Affine layer y = x W^T + b for rank-2 inputs."""

    def __init__(self, in_features: int, out_features: int, *, rng: np.random.Generator,
                 dtype=np.float32):
        if in_features < 1 or out_features < 1:
            raise ValueError("Dense sizes must be positive")
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(he_uniform(rng, (out_features, in_features), in_features, dtype))
        self.bias = Parameter(np.zeros(out_features, dtype=dtype))

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        return ad.dense(x, self.weight, self.bias)

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        return [(f"{prefix}weight", self.weight), (f"{prefix}bias", self.bias)]

    def spec(self) -> LayerSpec:
        return LayerSpec("Dense", {"in_features": self.in_features,
                                   "out_features": self.out_features})


class Conv1d(Layer):
    """Same-padded 1-d convolution (cross-correlation) with bias."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 5,
                 stride: int = 1, *, rng: np.random.Generator, dtype=np.float32):
        if kernel_size % 2 != 1:
            raise ValueError(f"kernel_size must be odd, got {kernel_size}")
        if stride < 1:
            raise ValueError(f"stride must be >= 1, got {stride}")
        if in_channels < 1 or out_channels < 1:
            raise ValueError("channel counts must be positive")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        fan_in = in_channels * kernel_size
        self.weight = Parameter(
            he_uniform(rng, (out_channels, in_channels, kernel_size), fan_in, dtype)
        )
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype))

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        return ad.conv1d(x, self.weight, self.bias, stride=self.stride)

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        return [(f"{prefix}weight", self.weight), (f"{prefix}bias", self.bias)]

    def spec(self) -> LayerSpec:
        return LayerSpec("Conv1d", {"in_channels": self.in_channels,
                                    "out_channels": self.out_channels,
                                    "kernel_size": self.kernel_size,
                                    "stride": self.stride})


class BatchNorm1d(Layer):
    """Batch normalization for [B,F] or [B,C,L] inputs.

    Train mode normalizes with the current batch's mean and population
    variance and folds them into the running statistics; eval mode uses the
    running statistics as constants. gamma and beta stay in the graph in both
    modes so their gradients always flow.
    """

    def __init__(self, num_features: int, momentum: float = 0.1, eps: float = 1e-5,
                 *, dtype=np.float32):
        if num_features < 1:
            raise ValueError("num_features must be positive")
        if not 0.0 < momentum < 1.0:
            raise ValueError(f"momentum must be in (0, 1), got {momentum}")
        if eps <= 0.0:
            raise ValueError(f"eps must be positive, got {eps}")
        self.num_features = num_features
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(num_features, dtype=dtype))
        self.beta = Parameter(np.zeros(num_features, dtype=dtype))
        self.running_mean = np.zeros(num_features, dtype=np.float32)
        self.running_var = np.ones(num_features, dtype=np.float32)

    def _axes_and_shape(self, x: Tensor) -> tuple[tuple[int, ...], tuple[int, ...]]:
        if x.data.ndim == 2:
            if x.data.shape[1] != self.num_features:
                raise DimensionError(
                    f"expected {self.num_features} features, got {x.data.shape}"
                )
            return (0,), (1, self.num_features)
        if x.data.ndim == 3:
            if x.data.shape[1] != self.num_features:
                raise DimensionError(
                    f"expected {self.num_features} channels, got {x.data.shape}"
                )
            return (0, 2), (1, self.num_features, 1)
        raise DimensionError(f"BatchNorm1d needs rank 2 or 3 input, got {x.data.shape}")

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        axes, pshape = self._axes_and_shape(x)
        gamma = ad.reshape(self.gamma, pshape)
        beta = ad.reshape(self.beta, pshape)
        if train:
            if x.data.shape[0] < 2:
                raise DimensionError(
                    "train-mode BatchNorm1d needs batch size >= 2 to estimate variance"
                )
            mu = x.mean(axis=axes, keepdims=True)
            var = ad.square(x - mu).mean(axis=axes, keepdims=True)
            m = self.momentum
            self.running_mean = (
                (1.0 - m) * self.running_mean
                + m * mu.data.reshape(-1).astype(np.float32)
            ).astype(np.float32)
            self.running_var = (
                (1.0 - m) * self.running_var
                + m * var.data.reshape(-1).astype(np.float32)
            ).astype(np.float32)
        else:
            mu = Tensor(self.running_mean.astype(x.dtype).reshape(pshape))
            var = Tensor(self.running_var.astype(x.dtype).reshape(pshape))
        inv_std = ad.powf(var + self.eps, -0.5)
        return (x - mu) * inv_std * gamma + beta

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        return [(f"{prefix}gamma", self.gamma), (f"{prefix}beta", self.beta)]

    def named_state(self, prefix: str = "") -> list[tuple[str, np.ndarray]]:
        return [(f"{prefix}running_mean", self.running_mean),
                (f"{prefix}running_var", self.running_var)]

    def load_state(self, name: str, value: np.ndarray) -> None:
        if value.shape != (self.num_features,):
            raise DimensionError(f"bad running stat shape {value.shape} for {name}")
        setattr(self, name, value.astype(np.float32))

    def spec(self) -> LayerSpec:
        return LayerSpec("BatchNorm1d", {"num_features": self.num_features,
                                         "momentum": self.momentum, "eps": self.eps})


class ReLU(Layer):
    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        return ad.relu(x)


class MaxPool1d(Layer):
    def __init__(self, width: int = 2):
        if width < 1:
            raise ValueError(f"pool width must be >= 1, got {width}")
        self.width = width

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        return ad.maxpool1d(x, self.width)

    def spec(self) -> LayerSpec:
        return LayerSpec("MaxPool1d", {"width": self.width})


class UpsampleNearest1d(Layer):
    def __init__(self, factor: int = 2):
        if factor < 1:
            raise ValueError(f"upsample factor must be >= 1, got {factor}")
        self.factor = factor

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        return ad.upsample1d(x, self.factor)

    def spec(self) -> LayerSpec:
        return LayerSpec("UpsampleNearest1d", {"factor": self.factor})


class Sequential(Layer):
    """Applies layers in order, threading the train flag through."""

    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        for layer in self.layers:
            x = layer(x, train=train)
        return x

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        out: list[tuple[str, Parameter]] = []
        for i, layer in enumerate(self.layers):
            out.extend(layer.named_parameters(f"{prefix}{i:02d}."))
        return out

    def named_state(self, prefix: str = "") -> list[tuple[str, np.ndarray]]:
        out: list[tuple[str, np.ndarray]] = []
        for i, layer in enumerate(self.layers):
            out.extend(layer.named_state(f"{prefix}{i:02d}."))
        return out

    def specs(self) -> list[LayerSpec]:
        return [layer.spec() for layer in self.layers]

    def load_state(self, name: str, value: np.ndarray) -> None:
        idx, _, rest = name.partition(".")
        layer = self.layers[int(idx)]
        layer.load_state(rest, value)  # type: ignore[attr-defined]
