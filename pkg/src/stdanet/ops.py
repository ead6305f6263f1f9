"""
Network primitives on :class:`~stdanet.tensor.Tensor`.

Convolutions are cross-correlations over NCHW inputs. Both directions are computed as a sum
over kernel taps of strided slices contracted with one ``[Cout, Cin]`` weight slice, which
keeps forward and backward in plain ``tensordot`` calls.
"""

from typing import Sequence, Union

import numpy as np

from stdanet.config import MESSAGES
from stdanet.exceptions import ShapeMismatchError
from stdanet.tensor import Tensor


def _mismatch(op: str, detail: str) -> ShapeMismatchError:
    return ShapeMismatchError(MESSAGES["shape_mismatch"].format(op=op, detail=detail))


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def transposed_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size - 1) * stride - 2 * padding + kernel


def _tap(array: np.ndarray, i: int, j: int, rows: int, cols: int, stride: int) -> np.ndarray:
    return array[:, :, i : i + stride * (rows - 1) + 1 : stride, j : j + stride * (cols - 1) + 1 : stride]


def _correlate(padded: np.ndarray, weight: np.ndarray, rows: int, cols: int, stride: int) -> np.ndarray:
    """``out[n,o,y,x] = sum_{c,i,j} padded[n,c,s*y+i,s*x+j] * weight[o,c,i,j]``."""
    out = np.zeros((padded.shape[0], weight.shape[0], rows, cols), dtype=np.result_type(padded, weight))
    for i in range(weight.shape[2]):
        for j in range(weight.shape[3]):
            contrib = np.tensordot(weight[:, :, i, j], _tap(padded, i, j, rows, cols, stride), axes=([1], [1]))
            out += contrib.transpose(1, 0, 2, 3)
    return out


def _scatter(grad: np.ndarray, weight: np.ndarray, padded_shape: tuple, stride: int) -> np.ndarray:
    """Adjoint of :func:`_correlate` with respect to its padded input."""
    rows, cols = grad.shape[2], grad.shape[3]
    out = np.zeros(padded_shape, dtype=np.result_type(grad, weight))
    for i in range(weight.shape[2]):
        for j in range(weight.shape[3]):
            contrib = np.tensordot(grad, weight[:, :, i, j], axes=([1], [0]))
            _tap(out, i, j, rows, cols, stride)[...] += contrib.transpose(0, 3, 1, 2)
    return out


def _weight_grad(grad: np.ndarray, padded: np.ndarray, kernel: tuple, stride: int) -> np.ndarray:
    rows, cols = grad.shape[2], grad.shape[3]
    out = np.zeros((grad.shape[1], padded.shape[1]) + kernel, dtype=np.result_type(grad, padded))
    for i in range(kernel[0]):
        for j in range(kernel[1]):
            out[:, :, i, j] = np.tensordot(grad, _tap(padded, i, j, rows, cols, stride), axes=([0, 2, 3], [0, 2, 3]))
    return out


def _pad(array: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return array
    return np.pad(array, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _crop(array: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return array
    return array[:, :, padding:-padding, padding:-padding]


def conv2d(input: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """
    2-D cross-correlation.

    :param input: ``[N, Cin, H, W]``.
    :param weight: ``[Cout, Cin, kh, kw]``.
    :param bias: ``[Cout]``.
    :raises ShapeMismatchError: On channel mismatch or an empty output.
    :return: ``[N, Cout, floor((H+2p-kh)/s)+1, floor((W+2p-kw)/s)+1]``.
    """
    if input.ndim != 4 or weight.ndim != 4 or input.shape[1] != weight.shape[1]:
        raise _mismatch("conv2d", f"input {input.shape} vs weight {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise _mismatch("conv2d", f"bias {bias.shape} vs {weight.shape[0]} output channels")
    if stride < 1 or padding < 0:
        raise _mismatch("conv2d", f"stride={stride}, padding={padding}")
    kh, kw = weight.shape[2:]
    rows = conv_output_size(input.shape[2], kh, stride, padding)
    cols = conv_output_size(input.shape[3], kw, stride, padding)
    if rows < 1 or cols < 1:
        raise _mismatch("conv2d", f"empty output {rows}x{cols} for input {input.shape}")

    padded = _pad(input.data, padding)
    out = _correlate(padded, weight.data, rows, cols, stride) + bias.data[None, :, None, None]

    def grad_fn(g):
        grad_input = _crop(_scatter(g, weight.data, padded.shape, stride), padding)
        grad_weight = _weight_grad(g, padded, (kh, kw), stride)
        return grad_input, grad_weight, g.sum(axis=(0, 2, 3))

    return Tensor._from_op(out, (input, weight, bias), grad_fn, "conv2d")


def transposed_conv2d(
    input: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0
) -> Tensor:
    """
    Transposed convolution, the adjoint of :func:`conv2d`'s linear map.

    The weight keeps the conv layout ``[Cin, Cout, kh, kw]`` of the conv it transposes, so
    ``<conv2d(x, w), y> == <x, transposed_conv2d(y, w)>`` for zero biases.

    :param input: ``[N, Cin, H, W]``.
    :param weight: ``[Cin, Cout, kh, kw]``.
    :param bias: ``[Cout]``.
    :return: ``[N, Cout, (H-1)s-2p+kh, (W-1)s-2p+kw]``.
    """
    if input.ndim != 4 or weight.ndim != 4 or input.shape[1] != weight.shape[0]:
        raise _mismatch("transposed_conv2d", f"input {input.shape} vs weight {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise _mismatch("transposed_conv2d", f"bias {bias.shape} vs {weight.shape[1]} output channels")
    if stride < 1 or padding < 0:
        raise _mismatch("transposed_conv2d", f"stride={stride}, padding={padding}")
    kh, kw = weight.shape[2:]
    rows = transposed_output_size(input.shape[2], kh, stride, padding)
    cols = transposed_output_size(input.shape[3], kw, stride, padding)
    if rows < 1 or cols < 1:
        raise _mismatch("transposed_conv2d", f"empty output {rows}x{cols} for input {input.shape}")

    full_shape = (input.shape[0], weight.shape[1], rows + 2 * padding, cols + 2 * padding)
    full = _scatter(input.data, weight.data, full_shape, stride)
    out = _crop(full, padding) + bias.data[None, :, None, None]

    def grad_fn(g):
        padded = _pad(g, padding)
        grad_input = _correlate(padded, weight.data, input.shape[2], input.shape[3], stride)
        grad_weight = _weight_grad(input.data, padded, (kh, kw), stride)
        return grad_input, grad_weight, g.sum(axis=(0, 2, 3))

    return Tensor._from_op(out, (input, weight, bias), grad_fn, "transposed_conv2d")


def leaky_relu(input: Tensor, slope: float = 0.1) -> Tensor:
    """``x`` for ``x >= 0``, ``slope * x`` otherwise."""
    negative = input.data < 0
    out = np.where(negative, input.data * slope, input.data)
    return Tensor._from_op(out, (input,), lambda g: (np.where(negative, g * slope, g),), "leaky_relu")


def softmax(input: Tensor, axes: Union[int, Sequence[int]] = (-2, -1)) -> Tensor:
    """
    Softmax normalised jointly over ``axes`` (the trailing ``(T, K)`` pair by default).

    Max-subtraction keeps it stable and makes it exactly shift invariant in exact arithmetic.
    """
    if isinstance(axes, int):
        axes = (axes,)
    axes = tuple(a % input.ndim for a in axes)
    shifted = input.data - input.data.max(axis=axes, keepdims=True)
    exp = np.exp(shifted)
    out = (exp / exp.sum(axis=axes, keepdims=True, dtype=np.float64)).astype(input.dtype)

    def grad_fn(g):
        return (out * (g - (g * out).sum(axis=axes, keepdims=True)),)

    return Tensor._from_op(out, (input,), grad_fn, "softmax")


def linear(input: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``input @ weight.T + bias`` over the last axis of a 2-D input."""
    if input.ndim != 2 or weight.shape[1] != input.shape[1]:
        raise _mismatch("linear", f"input {input.shape} vs weight {weight.shape}")
    return input @ weight.transpose(1, 0) + bias
