import math
from typing import Iterator, Optional

import numpy as np

from stdanet import ops
from stdanet.config import MESSAGES
from stdanet.exceptions import CheckpointError
from stdanet.tensor import Tensor


def kaiming_uniform(rng: np.random.Generator, shape: tuple, fan_in: int, slope: float, dtype) -> np.ndarray:
    """Uniform fan-in init with the leaky-ReLU gain ``sqrt(2 / (1 + slope^2))``."""
    gain = math.sqrt(2.0 / (1.0 + slope**2))
    bound = gain * math.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True)


class Module:
    """
    Container of named parameters.

    Parameters are the ``requires_grad`` tensors stored as attributes; sub-modules may be
    attributes or lists of modules. Names follow attribute order, e.g. ``encoder.blocks.0.conv.weight``.
    """

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        seen: set[int] = set()
        for name, tensor in self._walk(prefix):
            if id(tensor) not in seen:
                seen.add(id(tensor))
                yield name, tensor

    def _walk(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield path, value
            elif isinstance(value, Module):
                yield from value._walk(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item._walk(f"{path}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [tensor for _, tensor in self.named_parameters()]

    def zero_grad(self) -> None:
        for tensor in self.parameters():
            tensor.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: tensor.data for name, tensor in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise CheckpointError(
                MESSAGES["checkpoint_mismatch"].format(detail=f"missing={missing} unexpected={unexpected}")
            )
        for name, tensor in own.items():
            if state[name].shape != tensor.shape:
                raise CheckpointError(
                    MESSAGES["checkpoint_mismatch"].format(
                        detail=f"{name}: {state[name].shape} != {tensor.shape}"
                    )
                )
            tensor.data = np.array(state[name], dtype=tensor.dtype)

    def num_parameters(self) -> int:
        return sum(tensor.size for tensor in self.parameters())


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: Optional[int] = None,
        slope: float = 0.1,
        dtype="float32",
        zero_init: bool = False,
    ):
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        if zero_init:
            weight = np.zeros(shape, dtype=dtype)
        else:
            weight = kaiming_uniform(rng, shape, in_channels * kernel_size**2, slope, dtype)
        self.weight = parameter(weight)
        self.bias = parameter(np.zeros(out_channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    """Stride-2 upsampling layer; the ``[Cin, Cout, k, k]`` weight is the adjoint conv's layout."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 2,
        padding: int = 1,
        slope: float = 0.1,
        dtype="float32",
    ):
        self.stride = stride
        self.padding = padding
        shape = (in_channels, out_channels, kernel_size, kernel_size)
        # Each output pixel receives (k/s)^2 taps from every input channel.
        fan_in = max(1, in_channels * (kernel_size // stride) ** 2)
        self.weight = parameter(kaiming_uniform(rng, shape, fan_in, slope, dtype))
        self.bias = parameter(np.zeros(out_channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return ops.transposed_conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Linear(Module):
    def __init__(self, features: int, rng: np.random.Generator, dtype="float32", identity: bool = False):
        if identity:
            weight = np.eye(features, dtype=dtype)
        else:
            bound = math.sqrt(6.0 / (2 * features))
            weight = rng.uniform(-bound, bound, size=(features, features)).astype(dtype)
        self.weight = parameter(weight)
        self.bias = parameter(np.zeros(features, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class ResidualBlock(Module):
    """3x3 conv, LeakyReLU, 3x3 conv, identity skip. No normalisation."""

    def __init__(self, channels: int, rng: np.random.Generator, slope: float = 0.1, dtype="float32"):
        self.slope = slope
        self.conv1 = Conv2d(channels, channels, 3, rng, slope=slope, dtype=dtype)
        self.conv2 = Conv2d(channels, channels, 3, rng, slope=slope, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return x + self.conv2(ops.leaky_relu(self.conv1(x), self.slope))


class ConvBlock(Module):
    """A (strided) conv followed by LeakyReLU and a run of residual blocks."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        stride: int,
        blocks: int,
        rng: np.random.Generator,
        slope: float = 0.1,
        dtype="float32",
    ):
        self.slope = slope
        self.conv = Conv2d(in_channels, out_channels, 3, rng, stride=stride, padding=1, slope=slope, dtype=dtype)
        self.blocks = [ResidualBlock(out_channels, rng, slope, dtype) for _ in range(blocks)]

    def forward(self, x: Tensor) -> Tensor:
        x = ops.leaky_relu(self.conv(x), self.slope)
        for block in self.blocks:
            x = block(x)
        return x


class UpBlock(Module):
    """A stride-2 transposed conv followed by LeakyReLU and a run of residual blocks."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        blocks: int,
        rng: np.random.Generator,
        slope: float = 0.1,
        dtype="float32",
    ):
        self.slope = slope
        self.deconv = ConvTranspose2d(in_channels, out_channels, 4, rng, stride=2, padding=1, slope=slope, dtype=dtype)
        self.blocks = [ResidualBlock(out_channels, rng, slope, dtype) for _ in range(blocks)]

    def forward(self, x: Tensor) -> Tensor:
        x = ops.leaky_relu(self.deconv(x), self.slope)
        for block in self.blocks:
            x = block(x)
        return x
