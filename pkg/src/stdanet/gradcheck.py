"""
Central finite-difference checks of the reverse-mode gradients.

``check_gradients`` compares every input element; ``check_directional`` compares the derivative
along random directions in parameter space, which scales to whole networks and tolerates
activation kinks as long as ``eps`` does not cross them.

The default step is 1e-6, not the conventional 1e-5: whole-network checks cross far fewer leaky
ReLU and bilinear kinks at the smaller step, and float64 round-off stays near 1e-10 at either.
Pass ``eps=1e-5`` for the conventional step. Relative errors divide by
``max(|analytic|, |numeric|, 1e-3)``, so gradients below 1e-3 are compared in absolute terms.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from stdanet.tensor import Tensor, no_grad

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-6
DEFAULT_TOLERANCE = 1e-4
# Gradients below this magnitude are compared in absolute terms.
_FLOOR = 1e-3


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = _FLOOR) -> float:
    analytic, numeric = np.asarray(analytic, np.float64), np.asarray(numeric, np.float64)
    if analytic.size == 0:
        return 0.0
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def numeric_grad(fn: Callable[[], float], array: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Central differences of the scalar ``fn()`` with respect to ``array``, perturbed in place."""
    grad = np.zeros(array.shape, dtype=np.float64)
    flat = array.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + eps
        plus = fn()
        flat[i] = saved - eps
        minus = fn()
        flat[i] = saved
        out[i] = (plus - minus) / (2.0 * eps)
    return grad


def _projected(output: Tensor, projection: np.ndarray) -> Tensor:
    return (output * projection).sum()


@dataclass
class GradCheckReport:
    errors: list[float]
    tolerance: float

    @property
    def max_error(self) -> float:
        return max(self.errors) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def check_gradients(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    eps: float = DEFAULT_EPS,
    tolerance: float = DEFAULT_TOLERANCE,
    seed: int = 0,
) -> GradCheckReport:
    """
    Elementwise check of ``fn(*tensors)`` against central differences.

    Non-scalar outputs are reduced with a fixed random projection so every output element
    contributes. Inputs should be float64.

    :param fn: Builds the output from one tensor per input array.
    :param inputs: Float64 arrays; perturbed in place during the check and restored afterwards.
    :return: One max relative error per input.
    """
    arrays = [np.ascontiguousarray(a, dtype=np.float64) for a in inputs]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    output = fn(*tensors)
    projection = np.random.default_rng(seed).standard_normal(output.shape)
    _projected(output, projection).backward()

    def value() -> float:
        with no_grad():
            return float(_projected(fn(*tensors), projection).item())

    errors = []
    for tensor in tensors:
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        errors.append(max_relative_error(analytic, numeric_grad(value, tensor.data, eps)))
    report = GradCheckReport(errors, tolerance)
    logger.debug("gradient check errors %s", errors)
    return report


def check_directional(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    directions: int = 3,
    eps: float = DEFAULT_EPS,
    tolerance: float = DEFAULT_TOLERANCE,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """
    Compares ``<grad L, v>`` with ``(L(p + eps v) - L(p - eps v)) / (2 eps)`` for random unit ``v``.

    :param loss_fn: Rebuilds the scalar loss from the current parameter values.
    :param params: Leaf tensors with ``requires_grad``; their ``grad`` is overwritten.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    for p in params:
        p.grad = None
    loss_fn().backward(params)
    grads = [np.asarray(p.grad, dtype=np.float64) for p in params]

    def value() -> float:
        with no_grad():
            return float(loss_fn().item())

    errors = []
    for _ in range(directions):
        vs = [rng.standard_normal(p.shape) for p in params]
        norm = np.sqrt(sum(float((v * v).sum()) for v in vs))
        vs = [v / norm for v in vs]
        analytic = sum(float((g * v).sum()) for g, v in zip(grads, vs))
        saved = [p.data.copy() for p in params]
        for p, v, s in zip(params, vs, saved):
            p.data = s + eps * v
        plus = value()
        for p, v, s in zip(params, vs, saved):
            p.data = s - eps * v
        minus = value()
        for p, s in zip(params, saved):
            p.data = s
        numeric = (plus - minus) / (2.0 * eps)
        errors.append(max_relative_error(np.array([analytic]), np.array([numeric])))
    return GradCheckReport(errors, tolerance)


def perturb_zero_parameters(params: Sequence[Tensor], rng: np.random.Generator, scale: float = 0.05) -> int:
    """
    Fills all-zero parameters (zero-initialised heads, biases) with small random values.

    Zero offsets and flows put every sampling point on integer coordinates, where bilinear
    sampling has one-sided derivatives; checks must start away from them.

    :return: Number of tensors changed.
    """
    changed = 0
    for p in params:
        if not np.any(p.data):
            p.data = (scale * rng.standard_normal(p.shape)).astype(p.dtype)
            changed += 1
    return changed
